use factmine_core::eval::judge_relevance;
use factmine_core::{
    build_index, mine_pairs, mrr, retrieve, synth_corpus, train, ExclusionPolicy, MiningConfig, Split, SynthParams,
    TrainConfig,
};

fn small_config() -> TrainConfig {
    TrainConfig {
        embed_dim: 32,
        max_epochs: 10,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn trained_mrr_beats_random_projection() {
    let corpus = synth_corpus(&SynthParams::new(7, 200)).unwrap();
    let pairs = mine_pairs(&corpus, &MiningConfig::default()).unwrap();
    let out = train(&corpus, &pairs, &small_config()).unwrap();
    let judgments = judge_relevance(&corpus, Split::Validation, 1.0, 0.2).unwrap();
    let policy = ExclusionPolicy::default();
    let score = |p| {
        let index = build_index(&corpus, p, Split::Train).unwrap();
        mrr(
            &retrieve(&corpus, p, &index, Split::Validation, 10, &policy, "x").unwrap(),
            &judgments,
        )
    };
    let (before, after) = (score(&out.initial_params), score(&out.params));
    assert!(after > before, "{after} <= {before}");
    assert_eq!(out.log.initial_val_mrr, Some(before));
}

#[test]
fn same_seed_same_log() {
    let corpus = synth_corpus(&SynthParams::new(3, 120)).unwrap();
    let pairs = mine_pairs(&corpus, &MiningConfig::default()).unwrap();
    let cfg = TrainConfig {
        hard_negative_k: 3,
        max_epochs: 3,
        ..small_config()
    };
    let a = train(&corpus, &pairs, &cfg).unwrap();
    let b = train(&corpus, &pairs, &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    assert!(a.log.epochs.iter().any(|e| e.stage == 2));
}

#[test]
fn zero_learning_rate_keeps_params() {
    let corpus = synth_corpus(&SynthParams::new(5, 100)).unwrap();
    let pairs = mine_pairs(&corpus, &MiningConfig::default()).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        weight_decay: 0.0,
        max_epochs: 4,
        early_stop_patience: 10,
        ..small_config()
    };
    let out = train(&corpus, &pairs, &cfg).unwrap();
    assert_eq!(out.params, out.initial_params);
    let first = out.log.epochs[0].train_loss;
    assert!(out.log.epochs.iter().all(|e| e.train_loss == first));
}
