//! Mini-batch contrastive training of the projection encoders.
//!
//! Each step samples one positive per query; the other documents of the
//! batch act as negatives unless they are also positives of that query.
//! Parameters are updated with AdamW. Training stops early once validation
//! MRR has not improved for `early_stop_patience` epochs, and the best
//! parameters seen are returned. With `hard_negative_k > 0` a second stage
//! starts from those parameters, re-mines the top-ranked non-positive train
//! documents per query and adds them as extra negatives.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Split};
use crate::encoder::{batch_loss, encode_query, ContrastiveBatch, DocFeatures, EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::eval::{judge_relevance, mrr, retrieve, RelevanceJudgment};
use crate::index::{build_index, search_batch, ExclusionPolicy, QueryIdentity};
use crate::mining::PairSet;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Hard negatives per query in the second stage; 0 disables it.
    pub hard_negative_k: usize,
    /// Decoupled (AdamW) weight decay.
    pub weight_decay: f64,
    /// Validation relevance: label agreement threshold (inclusive).
    pub val_chexbert_threshold: f64,
    /// Validation relevance: graph overlap threshold (strict).
    pub val_radgraph_threshold: f64,
    /// Retrieval depth for validation MRR.
    pub val_depth: usize,
    pub val_policy: ExclusionPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 256,
            temperature: 0.01,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 15,
            early_stop_patience: 5,
            seed: 0,
            hard_negative_k: 0,
            weight_decay: 0.01,
            val_chexbert_threshold: 1.0,
            val_radgraph_threshold: 0.2,
            val_depth: 10,
            val_policy: ExclusionPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 to provide in-batch negatives");
        }
        if self.max_epochs == 0 || self.early_stop_patience == 0 || self.val_depth == 0 {
            return fail("max_epochs, early_stop_patience and val_depth must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be finite and non-negative");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.val_chexbert_threshold) || !unit(self.val_radgraph_threshold) {
            return fail("validation thresholds must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1 for in-batch training, 2 for the hard-negative stage.
    pub stage: u8,
    /// 0 is the state before the stage's first update.
    pub epoch: usize,
    /// Mean per-query loss on the fixed reference batching.
    pub train_loss: f64,
    pub val_mrr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Validation MRR of the initial random projections.
    pub initial_val_mrr: Option<f64>,
    pub best_val_mrr: Option<f64>,
    pub best_stage: u8,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub initial_params: EncoderParams,
    pub log: TrainLog,
}

struct AdamW {
    step: i32,
    m_q: Vec<f64>,
    v_q: Vec<f64>,
    m_d: Vec<f64>,
    v_d: Vec<f64>,
}

impl AdamW {
    fn new(params: &EncoderParams) -> Self {
        AdamW {
            step: 0,
            m_q: vec![0.0; params.query_proj.len()],
            v_q: vec![0.0; params.query_proj.len()],
            m_d: vec![0.0; params.doc_proj.len()],
            v_d: vec![0.0; params.doc_proj.len()],
        }
    }

    fn update(&mut self, params: &mut EncoderParams, grads: &Gradients, lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.step as f64);
        let apply = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..w.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                w[i] -= lr * (mhat / (libm::sqrt(vhat) + ADAM_EPS) + weight_decay * w[i]);
            }
        };
        apply(&mut params.query_proj, &grads.query_proj, &mut self.m_q, &mut self.v_q);
        apply(&mut params.doc_proj, &grads.doc_proj, &mut self.m_d, &mut self.v_d);
    }
}

/// Training data resolved to corpus positions.
struct Examples<'a> {
    corpus: &'a Corpus,
    /// (query position, positive positions)
    queries: Vec<(usize, Vec<usize>)>,
}

impl<'a> Examples<'a> {
    fn new(corpus: &'a Corpus, pairs: &PairSet) -> Result<Self> {
        let mut queries = Vec::with_capacity(pairs.queries.len());
        let train_pos = |id: &str| -> Result<usize> {
            let pos = corpus.position(id).ok_or_else(|| Error::UnknownId(id.into()))?;
            let r = &corpus.records()[pos];
            if r.split != Split::Train {
                return Err(Error::InvalidConfig(alloc::format!(
                    "pair references `{id}` outside the train split"
                )));
            }
            if r.text_features.is_none() {
                return Err(Error::MissingTextFeatures(id.into()));
            }
            Ok(pos)
        };
        for q in &pairs.queries {
            let qp = train_pos(&q.query_id)?;
            let mut pos: Vec<usize> = q.pairs.iter().map(|p| train_pos(&p.doc_id)).collect::<Result<_>>()?;
            pos.dedup();
            if !pos.is_empty() {
                queries.push((qp, pos));
            }
        }
        if queries.is_empty() {
            return Err(Error::NoPositives);
        }
        Ok(Examples { corpus, queries })
    }

    fn image(&self, pos: usize) -> &'a [f64] {
        &self.corpus.records()[pos].image_features
    }

    fn doc(&self, pos: usize) -> DocFeatures<'a> {
        let r = &self.corpus.records()[pos];
        DocFeatures {
            image: &r.image_features,
            text: r.text_features.as_deref().unwrap_or(&[]),
        }
    }

    /// Builds a batch from `(example, chosen positives)` entries. In-batch
    /// negatives of a query are the batch documents outside its positive set.
    fn batch(&self, entries: &[(usize, Vec<usize>)], extra: Option<&[Vec<usize>]>) -> ContrastiveBatch<'a> {
        let mut doc_slots: BTreeMap<usize, usize> = BTreeMap::new();
        let mut doc_order: Vec<usize> = Vec::new();
        let mut slot = |pos: usize, order: &mut Vec<usize>| -> usize {
            *doc_slots.entry(pos).or_insert_with(|| {
                order.push(pos);
                order.len() - 1
            })
        };
        let mut chosen_slots = Vec::with_capacity(entries.len());
        for (_, chosen) in entries {
            chosen_slots.push(chosen.iter().map(|&p| slot(p, &mut doc_order)).collect::<Vec<_>>());
        }
        let in_batch = doc_order.len();
        let mut extra_slots = Vec::with_capacity(entries.len());
        for (ex, _) in entries {
            let hard = extra.map(|e| e[*ex].as_slice()).unwrap_or(&[]);
            extra_slots.push(hard.iter().map(|&p| slot(p, &mut doc_order)).collect::<Vec<_>>());
        }
        let mut batch = ContrastiveBatch {
            docs: doc_order.iter().map(|&p| self.doc(p)).collect(),
            ..ContrastiveBatch::default()
        };
        for (((ex, _), pos_slots), hard_slots) in entries.iter().zip(chosen_slots).zip(extra_slots) {
            let positives_of_query = &self.queries[*ex].1;
            let mut negatives: Vec<usize> = (0..in_batch)
                .filter(|&s| !positives_of_query.contains(&doc_order[s]))
                .collect();
            for s in hard_slots {
                if !negatives.contains(&s) {
                    negatives.push(s);
                }
            }
            if negatives.is_empty() {
                continue;
            }
            batch.queries.push(self.image(self.queries[*ex].0));
            batch.positives.push(pos_slots);
            batch.negatives.push(negatives);
        }
        batch
    }

    /// Mean per-query loss over fixed batches in corpus order, every
    /// positive of each query included.
    fn reference_loss(&self, params: &EncoderParams, batch_size: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut counted = 0usize;
        let all: Vec<usize> = (0..self.queries.len()).collect();
        for chunk in all.chunks(batch_size) {
            let entries: Vec<(usize, Vec<usize>)> = chunk.iter().map(|&ex| (ex, self.queries[ex].1.clone())).collect();
            let batch = self.batch(&entries, None);
            if batch.queries.is_empty() {
                continue;
            }
            let (loss, _) = batch_loss(params, &batch)?;
            total += loss;
            counted += batch.queries.len();
        }
        Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
    }
}

struct Validator {
    judgments: Option<RelevanceJudgment>,
    depth: usize,
    policy: ExclusionPolicy,
}

impl Validator {
    fn new(corpus: &Corpus, config: &TrainConfig) -> Result<Self> {
        let judgments = if corpus.split_positions(Split::Validation).is_empty() {
            None
        } else {
            Some(judge_relevance(
                corpus,
                Split::Validation,
                config.val_chexbert_threshold,
                config.val_radgraph_threshold,
            )?)
        };
        Ok(Validator {
            judgments,
            depth: config.val_depth,
            policy: config.val_policy,
        })
    }

    fn mrr(&self, corpus: &Corpus, params: &EncoderParams) -> Result<Option<f64>> {
        let Some(judgments) = &self.judgments else {
            return Ok(None);
        };
        let index = build_index(corpus, params, Split::Train)?;
        let run = retrieve(
            corpus,
            params,
            &index,
            Split::Validation,
            self.depth,
            &self.policy,
            "validation",
        )?;
        Ok(Some(mrr(&run, judgments)))
    }
}

/// Top-`k` retrieved train documents per example that are neither the query
/// nor one of its positives.
fn mine_hard_negatives(examples: &Examples<'_>, params: &EncoderParams, k: usize) -> Result<Vec<Vec<usize>>> {
    let corpus = examples.corpus;
    let records = corpus.records();
    let index = build_index(corpus, params, Split::Train)?;
    let embeddings: Vec<Vec<f64>> = examples
        .queries
        .iter()
        .map(|(q, _)| encode_query(params, &records[*q].image_features))
        .collect::<Result<_>>()?;
    let queries: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    let identities: Vec<QueryIdentity<'_>> = examples
        .queries
        .iter()
        .map(|(q, _)| QueryIdentity {
            report_id: &records[*q].report_id,
            patient_id: &records[*q].patient_id,
        })
        .collect();
    let policy = ExclusionPolicy {
        exclude_self: true,
        ..ExclusionPolicy::NONE
    };
    let depth = k + examples.queries.iter().map(|(_, p)| p.len()).max().unwrap_or(0) + 1;
    let results = search_batch(&index, &queries, depth, &policy, &identities)?;
    examples
        .queries
        .iter()
        .zip(results)
        .map(|((_, positives), hits)| {
            let hits = match hits {
                Ok(h) => h,
                Err(Error::EmptyCandidateSet(_)) => Vec::new(),
                Err(e) => return Err(e),
            };
            Ok(hits
                .into_iter()
                .filter_map(|h| corpus.position(&h.doc_id))
                .filter(|p| !positives.contains(p))
                .take(k)
                .collect())
        })
        .collect()
}

struct Best {
    params: EncoderParams,
    mrr: Option<f64>,
    stage: u8,
    epoch: usize,
}

impl Best {
    fn offer(&mut self, params: &EncoderParams, mrr: Option<f64>, stage: u8, epoch: usize) -> bool {
        let improved = match (mrr, self.mrr) {
            (Some(new), Some(old)) => new > old,
            (Some(_), None) => true,
            // without validation data the latest parameters win
            (None, _) => true,
        };
        if improved {
            self.params = params.clone();
            self.mrr = mrr;
            self.stage = stage;
            self.epoch = epoch;
        }
        improved
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    stage: u8,
    examples: &Examples<'_>,
    validator: &Validator,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    start: EncoderParams,
    hard: Option<&[Vec<usize>]>,
    best: &mut Best,
    log: &mut Vec<EpochRecord>,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<()> {
    let corpus = examples.corpus;
    let mut params = start;
    let mut opt = AdamW::new(&params);
    let mut order: Vec<usize> = (0..examples.queries.len()).collect();
    let mut stale = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let entries: Vec<(usize, Vec<usize>)> = chunk
                .iter()
                .map(|&ex| {
                    let positives = &examples.queries[ex].1;
                    (ex, vec![positives[rng.random_range(0..positives.len())]])
                })
                .collect();
            let batch = examples.batch(&entries, hard);
            if batch.queries.is_empty() {
                continue;
            }
            let (loss, mut grads) = batch_loss(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            grads.scale(1.0 / batch.queries.len() as f64);
            opt.update(&mut params, &grads, config.learning_rate, config.weight_decay);
        }
        let train_loss = examples.reference_loss(&params, config.batch_size)?;
        if !train_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        let val_mrr = validator.mrr(corpus, &params)?;
        let record = EpochRecord {
            stage,
            epoch,
            train_loss,
            val_mrr,
        };
        observer(&record);
        log.push(record);
        if best.offer(&params, val_mrr, stage, epoch) {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }
    Ok(())
}

pub fn train(corpus: &Corpus, pairs: &PairSet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(corpus, pairs, config, &mut |_| {})
}

/// Like [`train`], reporting every epoch record as it is produced.
pub fn train_with_observer(
    corpus: &Corpus,
    pairs: &PairSet,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let examples = Examples::new(corpus, pairs)?;
    let validator = Validator::new(corpus, config)?;
    let dims = corpus.dims();
    let initial = EncoderParams::random(dims.image, dims.text, config.embed_dim, config.temperature, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a1e_0000_0001);

    let mut epochs = Vec::new();
    let initial_val_mrr = validator.mrr(corpus, &initial)?;
    let record = EpochRecord {
        stage: 1,
        epoch: 0,
        train_loss: examples.reference_loss(&initial, config.batch_size)?,
        val_mrr: initial_val_mrr,
    };
    observer(&record);
    epochs.push(record);
    let mut best = Best {
        params: initial.clone(),
        mrr: initial_val_mrr,
        stage: 1,
        epoch: 0,
    };

    run_stage(
        1,
        &examples,
        &validator,
        config,
        &mut rng,
        initial.clone(),
        None,
        &mut best,
        &mut epochs,
        observer,
    )?;

    if config.hard_negative_k > 0 {
        let start = best.params.clone();
        let hard = mine_hard_negatives(&examples, &start, config.hard_negative_k)?;
        run_stage(
            2,
            &examples,
            &validator,
            config,
            &mut rng,
            start,
            Some(&hard),
            &mut best,
            &mut epochs,
            observer,
        )?;
    }

    Ok(TrainOutcome {
        log: TrainLog {
            epochs,
            initial_val_mrr,
            best_val_mrr: best.mrr,
            best_stage: best.stage,
            best_epoch: best.epoch,
        },
        params: best.params,
        initial_params: initial,
    })
}
