use factmine_core::eval::{mrr_judged_only, split_ids, Oracle};
use factmine_core::{
    build_index, build_rag_dataset, chexbert_instance, eval_retrieval, factual_similarity, judge_relevance, mrr,
    retrieve, synth_corpus, EncoderParams, ExclusionPolicy, Hit, RagMode, RankedList, RetrievalRun, RunProvenance,
    Split, SynthParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn provenance() -> RunProvenance {
    RunProvenance {
        checkpoint_id: "test".into(),
        policy: ExclusionPolicy::NONE,
        k: 1,
    }
}

#[test]
fn self_retrieval_scores_one() {
    let corpus = synth_corpus(&SynthParams::new(1, 60)).unwrap();
    let ids = split_ids(&corpus, Split::Train);
    let run = RetrievalRun {
        provenance: provenance(),
        queries: ids
            .iter()
            .map(|id| RankedList {
                query_id: id.clone(),
                hits: vec![Hit {
                    doc_id: id.clone(),
                    score: 1.0,
                }],
            })
            .collect(),
    };
    let score = eval_retrieval(&run, &corpus, &ids).unwrap().score;
    assert_eq!(score.f1_chexbert_micro, 1.0);
    assert_eq!(score.rouge_l_mean, 1.0);
    // Synthetic reports always carry at least one fact.
    assert_eq!(score.f1_radgraph_mean, 1.0);
}

#[test]
fn random_runs_match_base_rate() {
    let params = SynthParams {
        signal: 0.0,
        ..SynthParams::with_splits(21, 200, 100, 0)
    };
    let corpus = synth_corpus(&params).unwrap();
    let queries = split_ids(&corpus, Split::Validation);
    let docs = split_ids(&corpus, Split::Train);

    // Expected scores of a uniformly random train document.
    let (mut tp, mut fp, mut fn_, mut rad) = (0.0, 0.0, 0.0, 0.0);
    for q in &queries {
        let qr = corpus.require(q).unwrap();
        for d in &docs {
            let dr = corpus.require(d).unwrap();
            rad += factual_similarity(&qr.graph, &dr.graph);
            for (a, b) in qr.labels.values().iter().zip(dr.labels.values()) {
                match (a, b) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fn_ += 1.0,
                    _ => {}
                }
            }
        }
    }
    let base_chex = 2.0 * tp / (2.0 * tp + fp + fn_);
    let base_rad = rad / (queries.len() * docs.len()) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut chex, mut rad) = (0.0, 0.0);
    let seeds = 120;
    for _ in 0..seeds {
        let run = RetrievalRun {
            provenance: provenance(),
            queries: queries
                .iter()
                .map(|q| RankedList {
                    query_id: q.clone(),
                    hits: vec![Hit {
                        doc_id: docs[rng.random_range(0..docs.len())].clone(),
                        score: 0.0,
                    }],
                })
                .collect(),
        };
        let s = eval_retrieval(&run, &corpus, &queries).unwrap().score;
        chex += s.f1_chexbert_micro / seeds as f64;
        rad += s.f1_radgraph_mean / seeds as f64;
    }
    assert!((chex - base_chex).abs() < 0.02, "{chex} vs {base_chex}");
    assert!((rad - base_rad).abs() < 0.01, "{rad} vs {base_rad}");
}

#[test]
fn missing_query_is_reported() {
    let corpus = synth_corpus(&SynthParams::new(2, 30)).unwrap();
    let ids = split_ids(&corpus, Split::Train);
    let run = RetrievalRun {
        provenance: provenance(),
        queries: vec![],
    };
    let err = eval_retrieval(&run, &corpus, &ids).unwrap_err();
    assert_eq!(err, factmine_core::Error::MissingResult(ids[0].clone()));
}

#[test]
fn oracle_dominates_any_retriever() {
    for seed in 0..4 {
        let corpus = synth_corpus(&SynthParams::new(seed, 120)).unwrap();
        let params = EncoderParams::random(32, 32, 16, 0.01, seed).unwrap();
        let index = build_index(&corpus, &params, Split::Train).unwrap();
        let policy = ExclusionPolicy::default();
        let oracle = Oracle::new(&corpus, true);
        for split in Split::ALL {
            let run = retrieve(&corpus, &params, &index, split, 5, &policy, "random").unwrap();
            for list in &run.queries {
                let q = corpus.require(&list.query_id).unwrap();
                let best = oracle.retrieve(&list.query_id, &policy).unwrap();
                let d = corpus.require(&list.hits[0].doc_id).unwrap();
                let sum = factual_similarity(&q.graph, &d.graph) + chexbert_instance(&q.labels, &d.labels);
                assert!(best.score.sum() >= sum);
            }
        }
    }
}

#[test]
fn mrr_behaviour() {
    let corpus = synth_corpus(&SynthParams::new(4, 100)).unwrap();
    let params = EncoderParams::random(32, 32, 16, 0.01, 4).unwrap();
    let index = build_index(&corpus, &params, Split::Train).unwrap();
    let run = retrieve(
        &corpus,
        &params,
        &index,
        Split::Validation,
        10,
        &ExclusionPolicy::default(),
        "r",
    )
    .unwrap();
    let loose = judge_relevance(&corpus, Split::Validation, 0.4, 0.0).unwrap();
    let strict = judge_relevance(&corpus, Split::Validation, 1.0, 0.4).unwrap();
    let (a, b) = (mrr(&run, &loose), mrr(&run, &strict));
    assert!((0.0..=1.0).contains(&a) && b <= a);
    assert!(mrr_judged_only(&run, &strict) >= b);
}

#[test]
fn rag_examples_respect_policy() {
    let corpus = synth_corpus(&SynthParams::new(8, 100)).unwrap();
    let params = EncoderParams::random(32, 32, 16, 0.01, 8).unwrap();
    let policy = ExclusionPolicy::default();
    for mode in [RagMode::Vqa, RagMode::Rag, RagMode::OracleRag] {
        let ds = build_rag_dataset(&corpus, Some(&params), &policy, mode).unwrap();
        assert_eq!(ds.examples.len() + ds.skipped_empty_target.len(), corpus.len());
        for ex in &ds.examples {
            let q = corpus.require(&ex.query_report_id).unwrap();
            assert!(!ex.target.is_empty());
            match &ex.retrieved_doc_id {
                None => assert_eq!(ex.prompt, factmine_core::rag::vqa_prompt()),
                Some(id) => {
                    let d = corpus.require(id).unwrap();
                    assert_ne!(id, &q.report_id);
                    assert_ne!(d.patient_id, q.patient_id);
                    assert!(d.report_text.trim().chars().count() >= policy.min_report_chars);
                    assert_eq!(ex.prompt, factmine_core::rag::rag_prompt(&d.report_text));
                }
            }
        }
        assert_eq!(ds, build_rag_dataset(&corpus, Some(&params), &policy, mode).unwrap());
    }
}
