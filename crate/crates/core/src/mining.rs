//! Factual positive pair mining over the train split.
//!
//! For every train query, candidates are the other train reports whose
//! label agreement reaches the label threshold (inclusive) and whose graph
//! overlap exceeds the graph threshold (strict). Survivors are ranked by
//! graph overlap, ties by ascending doc id, and truncated to `top_k`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::metrics::{chexbert_instance, FactTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiningConfig {
    /// Minimum instance label agreement (inclusive).
    pub chexbert_threshold: f64,
    /// Graph overlap must be strictly greater than this.
    pub radgraph_threshold: f64,
    pub top_k: usize,
    /// Prepend the query's own report as a positive.
    pub include_self: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            chexbert_threshold: 1.0,
            radgraph_threshold: 0.2,
            top_k: 2,
            include_self: true,
        }
    }
}

impl MiningConfig {
    pub fn new(chexbert_threshold: f64, radgraph_threshold: f64) -> Self {
        MiningConfig {
            chexbert_threshold,
            radgraph_threshold,
            ..MiningConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.chexbert_threshold) || !unit(self.radgraph_threshold) {
            return Err(Error::InvalidConfig(alloc::format!(
                "mining thresholds must lie in [0, 1], got ({}, {})",
                self.chexbert_threshold,
                self.radgraph_threshold
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinedPair {
    pub doc_id: String,
    pub rad_score: f64,
    pub chex_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryPairs {
    pub query_id: String,
    /// Ranked positives; the self pair (if any) comes first.
    pub pairs: Vec<MinedPair>,
    /// Mined candidates passing both thresholds, before truncation.
    pub candidates: usize,
}

impl QueryPairs {
    /// Mined pairs, excluding the self pair.
    pub fn mined(&self) -> impl Iterator<Item = &MinedPair> {
        let q = self.query_id.as_str();
        self.pairs.iter().filter(move |p| p.doc_id != q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub config: MiningConfig,
    pub queries: Vec<QueryPairs>,
}

impl PairSet {
    pub fn get(&self, query_id: &str) -> Option<&QueryPairs> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    /// Mean number of mined (non-self) pairs per query.
    pub fn mean_pairs_per_query(&self) -> f64 {
        if self.queries.is_empty() {
            return 0.0;
        }
        let total: usize = self.queries.iter().map(|q| q.mined().count()).sum();
        total as f64 / self.queries.len() as f64
    }

    /// Mean number of candidates before top-k truncation.
    pub fn mean_candidates_per_query(&self) -> f64 {
        if self.queries.is_empty() {
            return 0.0;
        }
        let total: usize = self.queries.iter().map(|q| q.candidates).sum();
        total as f64 / self.queries.len() as f64
    }

    pub fn zero_pair_fraction(&self) -> f64 {
        if self.queries.is_empty() {
            return 0.0;
        }
        let zero = self.queries.iter().filter(|q| q.candidates == 0).count();
        zero as f64 / self.queries.len() as f64
    }

    pub fn pair_count(&self) -> usize {
        self.queries.iter().map(|q| q.pairs.len()).sum()
    }
}

/// Train-split fact tables shared by every mining configuration.
pub struct Miner<'a> {
    corpus: &'a Corpus,
    train: Vec<usize>,
    facts: FactTable,
}

impl<'a> Miner<'a> {
    pub fn new(corpus: &'a Corpus) -> Result<Self> {
        let train = corpus.split_positions(Split::Train);
        if train.len() < 2 {
            return Err(Error::EmptyTrainSplit);
        }
        let facts = FactTable::new(train.iter().map(|&i| &corpus.records()[i].graph));
        Ok(Miner { corpus, train, facts })
    }

    pub fn query_count(&self) -> usize {
        self.train.len()
    }

    /// All candidates of the `q`-th train query passing both thresholds,
    /// ranked but not truncated. Entries are (train slot, rad, chex).
    pub fn candidates(&self, q: usize, config: &MiningConfig) -> Vec<(usize, f64, f64)> {
        let records = self.corpus.records();
        let query = &records[self.train[q]];
        let mut out: Vec<(usize, f64, f64)> = Vec::new();
        for (slot, &pos) in self.train.iter().enumerate() {
            if slot == q {
                continue;
            }
            let chex = chexbert_instance(&query.labels, &records[pos].labels);
            if chex < config.chexbert_threshold {
                continue;
            }
            let rad = self.facts.similarity(q, slot);
            if rad > config.radgraph_threshold {
                out.push((slot, rad, chex));
            }
        }
        out.sort_by(|a, b| {
            b.1.total_cmp(&a.1).then_with(|| {
                records[self.train[a.0]]
                    .report_id
                    .cmp(&records[self.train[b.0]].report_id)
            })
        });
        out
    }

    /// Mines the `q`-th train query (position within the train split).
    pub fn mine_query(&self, q: usize, config: &MiningConfig) -> QueryPairs {
        let records = self.corpus.records();
        let query = &records[self.train[q]];
        let ranked = self.candidates(q, config);
        let candidates = ranked.len();
        let mut pairs = Vec::with_capacity(config.top_k + 1);
        if config.include_self {
            pairs.push(MinedPair {
                doc_id: query.report_id.clone(),
                rad_score: 1.0,
                chex_score: 1.0,
            });
        }
        pairs.extend(
            ranked
                .into_iter()
                .take(config.top_k)
                .map(|(slot, rad, chex)| MinedPair {
                    doc_id: records[self.train[slot]].report_id.clone(),
                    rad_score: rad,
                    chex_score: chex,
                }),
        );
        QueryPairs {
            query_id: query.report_id.clone(),
            pairs,
            candidates,
        }
    }

    pub fn mine(&self, config: &MiningConfig) -> Result<PairSet> {
        config.validate()?;
        let queries = (0..self.train.len()).map(|q| self.mine_query(q, config)).collect();
        Ok(PairSet {
            config: *config,
            queries,
        })
    }
}

pub fn mine_pairs(corpus: &Corpus, config: &MiningConfig) -> Result<PairSet> {
    Miner::new(corpus)?.mine(config)
}

/// One line of a threshold sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub config: MiningConfig,
    pub queries: usize,
    pub mean_candidates: f64,
    pub mean_pairs: f64,
    pub zero_pair_fraction: f64,
}

impl SweepRow {
    pub fn from_pairs(pairs: &PairSet) -> Self {
        SweepRow {
            config: pairs.config,
            queries: pairs.queries.len(),
            mean_candidates: pairs.mean_candidates_per_query(),
            mean_pairs: pairs.mean_pairs_per_query(),
            zero_pair_fraction: pairs.zero_pair_fraction(),
        }
    }
}

/// Cartesian grid, label thresholds outermost.
pub fn threshold_grid(chexbert: &[f64], radgraph: &[f64], top_k: usize, include_self: bool) -> Vec<MiningConfig> {
    let mut grid = Vec::with_capacity(chexbert.len() * radgraph.len());
    for &c in chexbert {
        for &r in radgraph {
            grid.push(MiningConfig {
                chexbert_threshold: c,
                radgraph_threshold: r,
                top_k,
                include_self,
            });
        }
    }
    grid
}

pub fn threshold_sweep(corpus: &Corpus, grid: &[MiningConfig]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".to_string()));
    }
    let miner = Miner::new(corpus)?;
    grid.iter()
        .map(|c| miner.mine(c).map(|p| SweepRow::from_pairs(&p)))
        .collect()
}
