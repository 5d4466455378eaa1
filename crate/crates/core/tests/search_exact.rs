use factmine_core::index::RowMeta;
use factmine_core::{search, search_batch, EmbeddingIndex, Error, ExclusionPolicy, Hit, QueryIdentity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, e: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..e).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_index(seed: u64, n: usize, e: usize) -> EmbeddingIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Vec::with_capacity(n * e);
    let mut meta = Vec::with_capacity(n);
    for i in 0..n {
        // Duplicate a few rows so score ties exercise the id tie-break.
        let row = if i % 17 == 5 {
            matrix[..e].to_vec()
        } else {
            unit(&mut rng, e)
        };
        matrix.extend(row);
        meta.push(RowMeta {
            patient_id: format!("p{}", i / 3),
            report_chars: if i % 11 == 0 { 3 } else { 40 },
        });
    }
    let ids = (0..n).map(|i| format!("d{:05}", (i * 7919) % 100_003)).collect();
    EmbeddingIndex::from_parts(e, ids, meta, matrix).unwrap()
}

/// Full sort of every admitted row; no partial selection.
fn naive(index: &EmbeddingIndex, q: &[f64], k: usize, policy: &ExclusionPolicy, id: QueryIdentity<'_>) -> Vec<Hit> {
    let mut all: Vec<Hit> = Vec::new();
    for i in 0..index.len() {
        let doc = &index.doc_ids()[i];
        if !policy.admits(&id, doc, &index.meta()[i]) {
            continue;
        }
        let score = q.iter().zip(index.row(i)).map(|(a, b)| a * b).sum::<f64>();
        all.push(Hit {
            doc_id: doc.clone(),
            score,
        });
    }
    all.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    all.truncate(k);
    all
}

#[test]
fn batch_equals_search_and_naive_ranking() {
    let index = random_index(1, 200, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let queries: Vec<Vec<f64>> = (0..32).map(|_| unit(&mut rng, 16)).collect();
    let names: Vec<(String, String)> = (0..32)
        .map(|i| (index.doc_ids()[i * 3].clone(), format!("p{i}")))
        .collect();
    let ids: Vec<QueryIdentity<'_>> = names
        .iter()
        .map(|(r, p)| QueryIdentity {
            report_id: r,
            patient_id: p,
        })
        .collect();
    let refs: Vec<&[f64]> = queries.iter().map(|q| q.as_slice()).collect();
    for policy in [ExclusionPolicy::default(), ExclusionPolicy::NONE] {
        for k in [1, 10, 500] {
            let batch = search_batch(&index, &refs, k, &policy, &ids).unwrap();
            for ((q, id), got) in refs.iter().zip(&ids).zip(batch) {
                let got = got.unwrap();
                let single = search(&index, q, k, &policy, *id).unwrap();
                assert_eq!(got.len(), single.len());
                for (a, b) in got.iter().zip(&single) {
                    assert_eq!(a.doc_id, b.doc_id);
                    assert_eq!(a.score.to_bits(), b.score.to_bits());
                }
                let oracle = naive(&index, q, k, &policy, *id);
                assert_eq!(
                    got.iter().map(|h| &h.doc_id).collect::<Vec<_>>(),
                    oracle.iter().map(|h| &h.doc_id).collect::<Vec<_>>()
                );
                for h in &got {
                    let row = index.doc_ids().iter().position(|d| *d == h.doc_id).unwrap();
                    assert!(policy.admits(id, &h.doc_id, &index.meta()[row]));
                }
            }
        }
    }
}

#[test]
fn degenerate_batches() {
    let index = random_index(3, 20, 4);
    let policy = ExclusionPolicy::NONE;
    assert!(search_batch(&index, &[], 3, &policy, &[]).unwrap().is_empty());
    let q = index.row(4).to_vec();
    let id = QueryIdentity {
        report_id: "q",
        patient_id: "none",
    };
    let one = search_batch(&index, &[&q], 1, &policy, &[id]).unwrap();
    let hit = &one[0].as_ref().unwrap()[0];
    assert_eq!(*hit, search(&index, &q, 1, &policy, id).unwrap()[0]);
    assert!((hit.score - 1.0).abs() < 1e-12);
}

#[test]
fn exhausted_candidates() {
    let index = random_index(4, 6, 4);
    let policy = ExclusionPolicy::default();
    let q = index.row(0).to_vec();
    // Rows 0..3 belong to p0, rows 3..6 to p1; p1's row 3 is short.
    let meta_patient = &index.meta()[3].patient_id;
    let id = QueryIdentity {
        report_id: "x",
        patient_id: meta_patient,
    };
    let hits = search(&index, &q, 10, &policy, id).unwrap();
    assert!(hits.iter().all(
        |h| !index.meta()[index.doc_ids().iter().position(|d| *d == h.doc_id).unwrap()]
            .patient_id
            .eq(meta_patient)
    ));
    let only_p0 = EmbeddingIndex::from_parts(
        4,
        index.doc_ids()[..3].to_vec(),
        index.meta()[..3].to_vec(),
        index.matrix()[..12].to_vec(),
    )
    .unwrap();
    let id = QueryIdentity {
        report_id: "x",
        patient_id: "p0",
    };
    assert!(matches!(
        search(&only_p0, &q, 1, &policy, id),
        Err(Error::EmptyCandidateSet(_))
    ));
}
