//! Rayon drivers over the core operations. Work fans out per query and is
//! collected back in query order, so results equal the serial versions.

use factmine_core::eval::{split_ids, Oracle};
use factmine_core::index::search_batch;
use factmine_core::mining::{Miner, SweepRow};
use factmine_core::{
    encode_query, Corpus, EmbeddingIndex, EncoderParams, ExclusionPolicy, Hit, MiningConfig, PairSet, QueryIdentity,
    RankedList, RetrievalRun, RunProvenance, Split,
};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Queries handed to one `search_batch` call.
const RETRIEVE_CHUNK: usize = 64;

/// Sizes the global pool from `FACTMINE_THREADS` if set; otherwise rayon's
/// default applies.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("FACTMINE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("FACTMINE_THREADS: cannot parse `{v}`")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn mine_pairs(corpus: &Corpus, config: &MiningConfig) -> Result<PairSet> {
    config.validate()?;
    let miner = Miner::new(corpus)?;
    let queries = (0..miner.query_count())
        .into_par_iter()
        .map(|q| miner.mine_query(q, config))
        .collect();
    Ok(PairSet {
        config: *config,
        queries,
    })
}

pub fn threshold_sweep(corpus: &Corpus, grid: &[MiningConfig]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    grid.iter()
        .map(|c| mine_pairs(corpus, c).map(|p| SweepRow::from_pairs(&p)))
        .collect()
}

pub fn retrieve(
    corpus: &Corpus,
    params: &EncoderParams,
    index: &EmbeddingIndex,
    split: Split,
    k: usize,
    policy: &ExclusionPolicy,
    checkpoint_id: &str,
) -> Result<RetrievalRun> {
    let records = corpus.records();
    let positions = corpus.split_positions(split);
    let chunks: Vec<Vec<RankedList>> = positions
        .par_chunks(RETRIEVE_CHUNK)
        .map(|chunk| -> Result<Vec<RankedList>> {
            let embeddings = chunk
                .iter()
                .map(|&i| encode_query(params, &records[i].image_features))
                .collect::<factmine_core::Result<Vec<_>>>()?;
            let queries: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
            let ids: Vec<QueryIdentity<'_>> = chunk
                .iter()
                .map(|&i| QueryIdentity {
                    report_id: &records[i].report_id,
                    patient_id: &records[i].patient_id,
                })
                .collect();
            let results = search_batch(index, &queries, k, policy, &ids)?;
            chunk
                .iter()
                .zip(results)
                .map(|(&i, hits)| {
                    Ok(RankedList {
                        query_id: records[i].report_id.clone(),
                        hits: hits?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(RetrievalRun {
        provenance: RunProvenance {
            checkpoint_id: checkpoint_id.to_string(),
            policy: *policy,
            k,
        },
        queries: chunks.into_iter().flatten().collect(),
    })
}

/// Rank-1 oracle run over `split`, candidates restricted to train.
pub fn oracle_run(corpus: &Corpus, split: Split, policy: &ExclusionPolicy) -> Result<RetrievalRun> {
    let oracle = Oracle::new(corpus, true);
    let queries = split_ids(corpus, split)
        .into_par_iter()
        .map(|qid| {
            let hit = oracle.retrieve(&qid, policy)?;
            Ok(RankedList {
                query_id: qid,
                hits: vec![Hit {
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
