use std::path::Path;

use factmine_core::mining::{MinedPair, QueryPairs};
use factmine_core::{MiningConfig, PairSet};
use serde::{Deserialize, Serialize};

use super::{parse_line, read_lines, split_header, LineWriter};
use crate::error::{Error, Result};

pub const PAIRS_SCHEMA: &str = "factmine-pairs/1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: String,
    chexbert_threshold: f64,
    radgraph_threshold: f64,
    top_k: usize,
    include_self: bool,
    queries: usize,
    mean_pairs_per_query: f64,
    zero_pair_fraction: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    query_id: String,
    doc_id: String,
    rank: usize,
    rad_score: f64,
    chex_score: f64,
}

pub fn write_pairs(path: &Path, pairs: &PairSet) -> Result<()> {
    let mut w = LineWriter::create(path)?;
    let c = &pairs.config;
    w.write(&Header {
        schema_version: PAIRS_SCHEMA.to_string(),
        chexbert_threshold: c.chexbert_threshold,
        radgraph_threshold: c.radgraph_threshold,
        top_k: c.top_k,
        include_self: c.include_self,
        queries: pairs.queries.len(),
        mean_pairs_per_query: pairs.mean_pairs_per_query(),
        zero_pair_fraction: pairs.zero_pair_fraction(),
    })?;
    for q in &pairs.queries {
        for (i, p) in q.pairs.iter().enumerate() {
            w.write(&Line {
                query_id: q.query_id.clone(),
                doc_id: p.doc_id.clone(),
                rank: i + 1,
                rad_score: p.rad_score,
                chex_score: p.chex_score,
            })?;
        }
    }
    w.finish()
}

/// Queries without any pair line are absent from the result, and
/// pre-truncation candidate counts are not stored (read back as 0).
pub fn read_pairs(path: &Path) -> Result<PairSet> {
    let lines = read_lines(path)?;
    let h: Header = split_header(path, &lines, PAIRS_SCHEMA)?;
    let config = MiningConfig {
        chexbert_threshold: h.chexbert_threshold,
        radgraph_threshold: h.radgraph_threshold,
        top_k: h.top_k,
        include_self: h.include_self,
    };
    config.validate().map_err(|e| Error::at_line(path, lines[0].0, e))?;
    let mut queries: Vec<QueryPairs> = Vec::new();
    for (line, text) in &lines[1..] {
        let l: Line = parse_line(path, *line, text)?;
        let start_new = queries.last().is_none_or(|q| q.query_id != l.query_id);
        if start_new {
            if queries.iter().any(|q| q.query_id == l.query_id) {
                return Err(Error::malformed(
                    path,
                    *line,
                    format!("pairs of `{}` are not contiguous", l.query_id),
                ));
            }
            queries.push(QueryPairs {
                query_id: l.query_id.clone(),
                pairs: Vec::new(),
                candidates: 0,
            });
        }
        let q = queries.last_mut().expect("pushed above");
        if l.rank != q.pairs.len() + 1 {
            return Err(Error::malformed(
                path,
                *line,
                format!("rank {} out of sequence", l.rank),
            ));
        }
        q.pairs.push(MinedPair {
            doc_id: l.doc_id,
            rad_score: l.rad_score,
            chex_score: l.chex_score,
        });
    }
    Ok(PairSet { config, queries })
}
