//! Retrieval runs and their evaluation: rank-1 report quality against the
//! query's ground truth, MRR against threshold-based relevance judgments, and
//! the ground-truth-informed oracle retriever.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Corpus, Split};
use crate::encoder::{encode_query, EncoderParams};
use crate::error::{Error, Result};
use crate::index::{search_batch, EmbeddingIndex, ExclusionPolicy, Hit, QueryIdentity, RowMeta};
use crate::metrics::{chexbert_instance, rouge_l_text, Confusion, CorpusScore, FactTable, InstanceScore};

#[derive(Clone, Debug, PartialEq)]
pub struct RunProvenance {
    pub checkpoint_id: String,
    pub policy: ExclusionPolicy,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// Rank `i + 1` is `hits[i]`.
    pub hits: Vec<Hit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalRun {
    pub provenance: RunProvenance,
    pub queries: Vec<RankedList>,
}

impl RetrievalRun {
    /// Checks unique query ids and non-increasing scores.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for q in &self.queries {
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::DuplicateId(q.query_id.clone()));
            }
            if q.hits.windows(2).any(|w| w[1].score > w[0].score) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "scores for query `{}` are not non-increasing",
                    q.query_id
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }
}

/// Encodes every record of `split` as a query and searches `index`.
pub fn retrieve(
    corpus: &Corpus,
    params: &EncoderParams,
    index: &EmbeddingIndex,
    split: Split,
    k: usize,
    policy: &ExclusionPolicy,
    checkpoint_id: &str,
) -> Result<RetrievalRun> {
    let positions = corpus.split_positions(split);
    let records = corpus.records();
    let embeddings: Vec<Vec<f64>> = positions
        .iter()
        .map(|&i| encode_query(params, &records[i].image_features))
        .collect::<Result<_>>()?;
    let queries: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    let identities: Vec<QueryIdentity<'_>> = positions
        .iter()
        .map(|&i| QueryIdentity {
            report_id: &records[i].report_id,
            patient_id: &records[i].patient_id,
        })
        .collect();
    let results = search_batch(index, &queries, k, policy, &identities)?;
    let queries = positions
        .iter()
        .zip(results)
        .map(|(&i, hits)| {
            Ok(RankedList {
                query_id: records[i].report_id.clone(),
                hits: hits?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RetrievalRun {
        provenance: RunProvenance {
            checkpoint_id: checkpoint_id.to_string(),
            policy: *policy,
            k,
        },
        queries,
    })
}

/// Scores of one query's rank-1 report against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEvaluation {
    pub query_id: String,
    pub doc_id: String,
    pub instance: InstanceScore,
    pub rouge_l: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalEvaluation {
    pub score: CorpusScore,
    pub per_query: Vec<QueryEvaluation>,
}

/// Treats each expected query's rank-1 report as the hypothesis and scores
/// it against the query's own report.
pub fn eval_retrieval<S: AsRef<str>>(
    run: &RetrievalRun,
    corpus: &Corpus,
    expected_queries: &[S],
) -> Result<RetrievalEvaluation> {
    if expected_queries.is_empty() {
        return Err(Error::InvalidConfig("no queries to evaluate".into()));
    }
    let by_query: BTreeMap<&str, &RankedList> = run.queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut confusion = Confusion::default();
    let mut rad_sum = 0.0;
    let mut rouge_sum = 0.0;
    let mut per_query = Vec::with_capacity(expected_queries.len());
    for qid in expected_queries {
        let qid = qid.as_ref();
        let top = by_query
            .get(qid)
            .and_then(|l| l.hits.first())
            .ok_or_else(|| Error::MissingResult(qid.to_string()))?;
        let q = corpus.require(qid)?;
        let d = corpus.require(&top.doc_id)?;
        confusion.add(&q.labels, &d.labels);
        let instance = InstanceScore {
            f1_radgraph: crate::metrics::factual_similarity(&q.graph, &d.graph),
            f1_chexbert_instance: chexbert_instance(&q.labels, &d.labels),
        };
        let rouge = rouge_l_text(&q.report_text, &d.report_text);
        rad_sum += instance.f1_radgraph;
        rouge_sum += rouge;
        per_query.push(QueryEvaluation {
            query_id: qid.to_string(),
            doc_id: top.doc_id.clone(),
            instance,
            rouge_l: rouge,
        });
    }
    let n = expected_queries.len() as f64;
    Ok(RetrievalEvaluation {
        score: CorpusScore {
            f1_chexbert_micro: confusion.f1(),
            f1_radgraph_mean: rad_sum / n,
            rouge_l_mean: rouge_sum / n,
        },
        per_query,
    })
}

/// Ids of every record in `split`, in corpus order.
pub fn split_ids(corpus: &Corpus, split: Split) -> Vec<String> {
    corpus
        .split_positions(split)
        .into_iter()
        .map(|i| corpus.records()[i].report_id.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceJudgment {
    pub chexbert_threshold: f64,
    pub radgraph_threshold: f64,
    pub relevant: BTreeMap<String, BTreeSet<String>>,
}

impl RelevanceJudgment {
    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.relevant.get(query_id).is_some_and(|s| s.contains(doc_id))
    }

    pub fn judged_count(&self) -> usize {
        self.relevant.values().filter(|s| !s.is_empty()).count()
    }
}

/// Relevance of train documents to the queries of `query_split`:
/// label agreement `>= chexbert_threshold` and graph overlap
/// `> radgraph_threshold`, never the query itself.
pub fn judge_relevance(
    corpus: &Corpus,
    query_split: Split,
    chexbert_threshold: f64,
    radgraph_threshold: f64,
) -> Result<RelevanceJudgment> {
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !unit(chexbert_threshold) || !unit(radgraph_threshold) {
        return Err(Error::InvalidConfig("judgment thresholds must lie in [0, 1]".into()));
    }
    let records = corpus.records();
    let facts = FactTable::new(records.iter().map(|r| &r.graph));
    let docs = corpus.split_positions(Split::Train);
    let mut relevant = BTreeMap::new();
    for q in corpus.split_positions(query_split) {
        let set: BTreeSet<String> = docs
            .iter()
            .filter(|&&d| d != q)
            .filter(|&&d| chexbert_instance(&records[q].labels, &records[d].labels) >= chexbert_threshold)
            .filter(|&&d| facts.similarity(q, d) > radgraph_threshold)
            .map(|&d| records[d].report_id.clone())
            .collect();
        relevant.insert(records[q].report_id.clone(), set);
    }
    Ok(RelevanceJudgment {
        chexbert_threshold,
        radgraph_threshold,
        relevant,
    })
}

fn reciprocal_rank(list: &RankedList, judgments: &RelevanceJudgment) -> f64 {
    list.hits
        .iter()
        .position(|h| judgments.is_relevant(&list.query_id, &h.doc_id))
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

/// Mean reciprocal rank of the first relevant hit; queries without one
/// contribute zero.
pub fn mrr(run: &RetrievalRun, judgments: &RelevanceJudgment) -> f64 {
    if run.queries.is_empty() {
        return 0.0;
    }
    let total: f64 = run.queries.iter().map(|l| reciprocal_rank(l, judgments)).sum();
    total / run.queries.len() as f64
}

/// MRR restricted to queries with at least one relevant document.
pub fn mrr_judged_only(run: &RetrievalRun, judgments: &RelevanceJudgment) -> f64 {
    let judged: Vec<&RankedList> = run
        .queries
        .iter()
        .filter(|l| judgments.relevant.get(&l.query_id).is_some_and(|s| !s.is_empty()))
        .collect();
    if judged.is_empty() {
        return 0.0;
    }
    judged.iter().map(|l| reciprocal_rank(l, judgments)).sum::<f64>() / judged.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleHit {
    pub doc_id: String,
    pub score: InstanceScore,
}

/// Ground-truth-informed retriever: argmax of graph overlap plus label
/// agreement over the candidate pool.
pub struct Oracle<'a> {
    corpus: &'a Corpus,
    facts: FactTable,
    pool: Vec<usize>,
    meta: Vec<RowMeta>,
}

impl<'a> Oracle<'a> {
    /// Candidates are the train split when `restrict_train`, else the whole
    /// corpus.
    pub fn new(corpus: &'a Corpus, restrict_train: bool) -> Self {
        let records = corpus.records();
        let pool = if restrict_train {
            corpus.split_positions(Split::Train)
        } else {
            (0..records.len()).collect()
        };
        let meta = pool
            .iter()
            .map(|&i| RowMeta {
                patient_id: records[i].patient_id.clone(),
                report_chars: records[i].report_text.trim().chars().count(),
            })
            .collect();
        Oracle {
            corpus,
            facts: FactTable::new(records.iter().map(|r| &r.graph)),
            pool,
            meta,
        }
    }

    /// The query itself is never a candidate; `policy` filters further.
    pub fn retrieve(&self, query_id: &str, policy: &ExclusionPolicy) -> Result<OracleHit> {
        let q = self
            .corpus
            .position(query_id)
            .ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
        let records = self.corpus.records();
        let identity = QueryIdentity {
            report_id: &records[q].report_id,
            patient_id: &records[q].patient_id,
        };
        let mut best: Option<(usize, InstanceScore)> = None;
        for (&d, meta) in self.pool.iter().zip(&self.meta) {
            if d == q || !policy.admits(&identity, &records[d].report_id, meta) {
                continue;
            }
            let score = InstanceScore {
                f1_radgraph: self.facts.similarity(q, d),
                f1_chexbert_instance: chexbert_instance(&records[q].labels, &records[d].labels),
            };
            let better = match &best {
                None => true,
                Some((b, bs)) => match score.sum().total_cmp(&bs.sum()) {
                    core::cmp::Ordering::Greater => true,
                    core::cmp::Ordering::Equal => records[d].report_id < records[*b].report_id,
                    core::cmp::Ordering::Less => false,
                },
            };
            if better {
                best = Some((d, score));
            }
        }
        best.map(|(d, score)| OracleHit {
            doc_id: records[d].report_id.clone(),
            score,
        })
        .ok_or_else(|| Error::EmptyCandidateSet(query_id.to_string()))
    }

    /// Rank-1 oracle run over the queries of `split`; hit scores are the
    /// summed instance scores.
    pub fn run(&self, split: Split, policy: &ExclusionPolicy) -> Result<RetrievalRun> {
        let queries = split_ids(self.corpus, split)
            .into_iter()
            .map(|qid| {
                let hit = self.retrieve(&qid, policy)?;
                Ok(RankedList {
                    query_id: qid,
                    hits: alloc::vec![Hit {
                        doc_id: hit.doc_id,
                        score: hit.score.sum(),
                    }],
                })
            })
            .collect::<Result<_>>()?;
        Ok(RetrievalRun {
            provenance: RunProvenance {
                checkpoint_id: "oracle".to_string(),
                policy: *policy,
                k: 1,
            },
            queries,
        })
    }
}

pub fn oracle_retrieve(
    corpus: &Corpus,
    query_id: &str,
    restrict_train: bool,
    policy: &ExclusionPolicy,
) -> Result<OracleHit> {
    Oracle::new(corpus, restrict_train).retrieve(query_id, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, EntityLabel, FactGraph, FeatureDims, LabelVector, ReportRecord};
    use alloc::format;
    use alloc::vec;

    fn rec(id: &str, split: Split, labels: [u8; 5], ents: &[&str], text: &str) -> ReportRecord {
        ReportRecord {
            report_id: id.into(),
            patient_id: format!("p-{id}"),
            split,
            report_text: text.into(),
            labels: LabelVector::new(labels.map(|v| v == 1)),
            graph: FactGraph::new(
                ents.iter().map(|t| Entity::new(*t, EntityLabel::ObsDp)).collect(),
                vec![],
            )
            .unwrap(),
            image_ref: None,
            image_features: vec![1.0],
            text_features: Some(vec![1.0]),
        }
    }

    fn corpus(records: Vec<ReportRecord>) -> Corpus {
        Corpus::new(FeatureDims { image: 1, text: 1 }, records).unwrap()
    }

    fn run(lists: &[(&str, &[&str])]) -> RetrievalRun {
        RetrievalRun {
            provenance: RunProvenance {
                checkpoint_id: "t".into(),
                policy: ExclusionPolicy::NONE,
                k: 10,
            },
            queries: lists
                .iter()
                .map(|(q, docs)| RankedList {
                    query_id: q.to_string(),
                    hits: docs
                        .iter()
                        .enumerate()
                        .map(|(i, d)| Hit {
                            doc_id: d.to_string(),
                            score: 1.0 - i as f64 * 0.1,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn judgments(map: &[(&str, &[&str])]) -> RelevanceJudgment {
        RelevanceJudgment {
            chexbert_threshold: 0.0,
            radgraph_threshold: 0.0,
            relevant: map
                .iter()
                .map(|(q, ds)| (q.to_string(), ds.iter().map(|d| d.to_string()).collect()))
                .collect(),
        }
    }

    #[test]
    fn mrr_examples() {
        let r = run(&[
            ("q1", &["r", "x", "y", "z"]),
            ("q2", &["x", "r", "y", "z"]),
            ("q3", &["x", "y", "z", "r"]),
        ]);
        let j = judgments(&[("q1", &["r"]), ("q2", &["r"]), ("q3", &["r"])]);
        assert!((mrr(&r, &j) - 1.75 / 3.0).abs() < 1e-12);
        let j1 = judgments(&[("q1", &["r"]), ("q2", &["x"]), ("q3", &["x"])]);
        assert_eq!(mrr(&r, &j1), 1.0);
        let j0 = judgments(&[]);
        assert_eq!(mrr(&r, &j0), 0.0);
        let half = judgments(&[("q1", &["r"])]);
        assert!((mrr(&r, &half) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(mrr_judged_only(&r, &half), 1.0);
    }

    #[test]
    fn oracle_picks_max_sum() {
        let c = corpus(vec![
            rec(
                "q",
                Split::Test,
                [1, 0, 0, 0, 0],
                &["a", "b", "c", "d", "e"],
                "query report",
            ),
            // chex 1.0, rad 2*1/(5+5)=0.2 -> 1.2
            rec(
                "d1",
                Split::Train,
                [1, 0, 0, 0, 0],
                &["a", "x", "y", "z", "w"],
                "report one",
            ),
            // chex 0.8, rad 2*4/(5+5)=0.8 -> 1.6
            rec(
                "d2",
                Split::Train,
                [1, 1, 0, 0, 0],
                &["a", "b", "c", "d", "x"],
                "report two",
            ),
            // chex 1.0, rad 2*2/10=0.4 -> 1.4
            rec(
                "d3",
                Split::Train,
                [1, 0, 0, 0, 0],
                &["a", "b", "x", "y", "z"],
                "report three",
            ),
        ]);
        let hit = oracle_retrieve(&c, "q", true, &ExclusionPolicy::NONE).unwrap();
        assert_eq!(hit.doc_id, "d2");
        assert!((hit.score.sum() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn oracle_duplicate_and_self_exclusion() {
        let c = corpus(vec![
            rec("t1", Split::Train, [0, 1, 0, 0, 0], &["a", "b"], "same text"),
            rec("t2", Split::Train, [0, 1, 0, 0, 0], &["a", "b"], "same text"),
            rec("t3", Split::Train, [0, 0, 0, 0, 0], &["c"], "other"),
            rec("q", Split::Test, [0, 1, 0, 0, 0], &["a", "b"], "same text"),
        ]);
        let hit = oracle_retrieve(&c, "q", true, &ExclusionPolicy::NONE).unwrap();
        assert_eq!(hit.doc_id, "t1");
        assert_eq!(hit.score.sum(), 2.0);
        // train query never retrieves itself
        let hit = oracle_retrieve(&c, "t1", true, &ExclusionPolicy::NONE).unwrap();
        assert_eq!(hit.doc_id, "t2");
        let lone = corpus(vec![rec("t1", Split::Train, [0; 5], &["a"], "text")]);
        assert!(matches!(
            oracle_retrieve(&lone, "t1", true, &ExclusionPolicy::NONE),
            Err(Error::EmptyCandidateSet(_))
        ));
    }

    #[test]
    fn self_retrieval_upper_bound() {
        let c = corpus(vec![
            rec("a", Split::Train, [1, 0, 1, 0, 0], &["x", "y"], "left effusion"),
            rec("b", Split::Train, [0, 0, 0, 0, 1], &["z"], "no acute findings"),
        ]);
        let r = run(&[("a", &["a", "b"]), ("b", &["b", "a"])]);
        let ev = eval_retrieval(&r, &c, &["a", "b"]).unwrap();
        assert_eq!(ev.score.f1_chexbert_micro, 1.0);
        assert_eq!(ev.score.f1_radgraph_mean, 1.0);
        assert_eq!(ev.score.rouge_l_mean, 1.0);
        // single query: micro F1 over one record, means equal instance scores
        let r = run(&[("a", &["b"])]);
        let ev = eval_retrieval(&r, &c, &["a"]).unwrap();
        assert_eq!(ev.score.f1_chexbert_micro, 0.0);
        assert_eq!(ev.score.f1_radgraph_mean, ev.per_query[0].instance.f1_radgraph);
        assert_eq!(
            eval_retrieval(&r, &c, &["a", "b"]).err(),
            Some(Error::MissingResult("b".into()))
        );
    }

    #[test]
    fn judgment_thresholds() {
        let c = corpus(vec![
            rec("t1", Split::Train, [1, 0, 0, 0, 0], &["a", "b"], "x"),
            rec("t2", Split::Train, [1, 1, 0, 0, 0], &["a", "c"], "x"),
            rec("t3", Split::Train, [0, 1, 1, 1, 1], &["d"], "x"),
        ]);
        let j = judge_relevance(&c, Split::Train, 0.0, 0.0).unwrap();
        let t1: Vec<&str> = j.relevant["t1"].iter().map(String::as_str).collect();
        assert_eq!(t1, ["t2"]);
        assert!(j.relevant["t3"].is_empty());
        let strict = judge_relevance(&c, Split::Train, 1.0, 0.99).unwrap();
        assert_eq!(strict.judged_count(), 0);
        assert!(judge_relevance(&c, Split::Train, 1.1, 0.0).is_err());
    }

    #[test]
    fn run_validation() {
        let mut r = run(&[("a", &["x", "y"])]);
        assert!(r.validate().is_ok());
        r.queries[0].hits[1].score = 5.0;
        assert!(r.validate().is_err());
    }
}
