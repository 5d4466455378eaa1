use factmine::parallel;
use factmine_core::eval::Oracle;
use factmine_core::{
    build_index, mine_pairs, retrieve, synth_corpus, threshold_sweep, EncoderParams, ExclusionPolicy, MiningConfig,
    Split, SynthParams,
};

#[test]
fn parallel_drivers_equal_serial() {
    let corpus = synth_corpus(&SynthParams::new(12, 300)).unwrap();
    let cfg = MiningConfig::new(0.8, 0.1);
    assert_eq!(
        parallel::mine_pairs(&corpus, &cfg).unwrap(),
        mine_pairs(&corpus, &cfg).unwrap()
    );

    let grid = factmine_core::mining::threshold_grid(&[0.0, 1.0], &[0.0, 0.3], 2, true);
    assert_eq!(
        parallel::threshold_sweep(&corpus, &grid).unwrap(),
        threshold_sweep(&corpus, &grid).unwrap()
    );

    let params = EncoderParams::random(32, 32, 24, 0.01, 12).unwrap();
    let index = build_index(&corpus, &params, Split::Train).unwrap();
    let policy = ExclusionPolicy::default();
    for split in Split::ALL {
        assert_eq!(
            parallel::retrieve(&corpus, &params, &index, split, 7, &policy, "c").unwrap(),
            retrieve(&corpus, &params, &index, split, 7, &policy, "c").unwrap()
        );
        assert_eq!(
            parallel::oracle_run(&corpus, split, &policy).unwrap(),
            Oracle::new(&corpus, true).run(split, &policy).unwrap()
        );
    }
}
