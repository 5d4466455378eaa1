//! Line records and JSON reports written by the commands.

use std::collections::BTreeMap;
use std::path::Path;

use factmine_core::train::EpochRecord;
use factmine_core::RagDataset;
use serde::{Deserialize, Serialize};

use super::{parse_line, read_lines, LineWriter};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogLine {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mrr: Option<f64>,
    pub wall_ms: u64,
}

impl TrainLogLine {
    pub fn new(rec: &EpochRecord, wall_ms: u64) -> Self {
        TrainLogLine {
            stage: rec.stage,
            epoch: rec.epoch,
            train_loss: rec.train_loss,
            val_mrr: rec.val_mrr,
            wall_ms,
        }
    }
}

pub fn write_train_log(path: &Path, lines: &[TrainLogLine]) -> Result<()> {
    let mut w = LineWriter::create(path)?;
    for l in lines {
        w.write(l)?;
    }
    w.finish()
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogLine>> {
    read_lines(path)?.iter().map(|(n, t)| parse_line(path, *n, t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RagLine {
    pub id: String,
    pub image: String,
    pub prompt: String,
    pub target: String,
    pub retrieved_id: Option<String>,
    pub mode: String,
}

pub fn write_rag(path: &Path, ds: &RagDataset) -> Result<()> {
    let mut w = LineWriter::create(path)?;
    for ex in &ds.examples {
        w.write(&RagLine {
            id: ex.query_report_id.clone(),
            image: ex.image_ref.clone(),
            prompt: ex.prompt.clone(),
            target: ex.target.clone(),
            retrieved_id: ex.retrieved_doc_id.clone(),
            mode: ex.mode.as_str().to_string(),
        })?;
    }
    w.finish()
}

pub fn read_rag(path: &Path) -> Result<Vec<RagLine>> {
    read_lines(path)?.iter().map(|(n, t)| parse_line(path, *n, t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryLine {
    pub query_id: String,
    pub doc_id: String,
    pub f1_radgraph: f64,
    pub f1_chexbert_instance: f64,
    pub rouge_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub split: String,
    pub queries: usize,
    pub checkpoint_id: String,
    pub f1_chexbert_micro: f64,
    pub f1_radgraph_mean: f64,
    pub rouge_l_mean: f64,
    pub mrr: f64,
    pub mrr_judged_only: f64,
    pub judged_queries: usize,
    /// `thresholds` or `qrels`.
    pub judgments: String,
    pub chexbert_threshold: f64,
    pub radgraph_threshold: f64,
    pub per_query: Vec<QueryLine>,
    pub config: BTreeMap<String, String>,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepLine {
    pub chexbert_threshold: f64,
    pub radgraph_threshold: f64,
    pub top_k: usize,
    pub include_self: bool,
    pub queries: usize,
    pub mean_candidates: f64,
    pub mean_pairs: f64,
    pub zero_pair_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrr_judged_only: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judged_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: String,
    pub rows: Vec<SweepLine>,
    /// Mean pairs per query never grows with the graph threshold.
    pub monotone_in_radgraph: bool,
    /// Mean pairs per query never grows with the label threshold.
    pub monotone_in_chexbert: bool,
    /// Share of queries left without mined pairs at the loosest and the
    /// strictest grid point.
    pub zero_pair_fraction_loosest: f64,
    pub zero_pair_fraction_strictest: f64,
    pub config: BTreeMap<String, String>,
    pub provenance: String,
}
