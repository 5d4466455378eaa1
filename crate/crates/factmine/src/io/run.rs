use std::path::Path;

use factmine_core::{ExclusionPolicy, Hit, RankedList, RetrievalRun, RunProvenance};
use serde::{Deserialize, Serialize};

use super::{parse_line, read_lines, split_header, LineWriter};
use crate::error::{Error, Result};

pub const RUN_SCHEMA: &str = "factmine-run/1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: String,
    checkpoint_id: String,
    k: usize,
    exclude_self: bool,
    exclude_same_patient: bool,
    min_report_chars: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    query_id: String,
    rank: usize,
    doc_id: String,
    score: f64,
}

pub fn write_run(path: &Path, run: &RetrievalRun) -> Result<()> {
    let mut w = LineWriter::create(path)?;
    let p = &run.provenance;
    w.write(&Header {
        schema_version: RUN_SCHEMA.to_string(),
        checkpoint_id: p.checkpoint_id.clone(),
        k: p.k,
        exclude_self: p.policy.exclude_self,
        exclude_same_patient: p.policy.exclude_same_patient,
        min_report_chars: p.policy.min_report_chars,
    })?;
    for q in &run.queries {
        for (i, h) in q.hits.iter().enumerate() {
            w.write(&Line {
                query_id: q.query_id.clone(),
                rank: i + 1,
                doc_id: h.doc_id.clone(),
                score: h.score,
            })?;
        }
    }
    w.finish()
}

/// Ranks must be contiguous from 1 within each query.
pub fn read_run(path: &Path) -> Result<RetrievalRun> {
    let lines = read_lines(path)?;
    let h: Header = split_header(path, &lines, RUN_SCHEMA)?;
    let mut queries: Vec<RankedList> = Vec::new();
    for (line, text) in &lines[1..] {
        let l: Line = parse_line(path, *line, text)?;
        if queries.last().is_none_or(|q| q.query_id != l.query_id) {
            if queries.iter().any(|q| q.query_id == l.query_id) {
                return Err(Error::malformed(
                    path,
                    *line,
                    format!("hits of `{}` are not contiguous", l.query_id),
                ));
            }
            queries.push(RankedList {
                query_id: l.query_id.clone(),
                hits: Vec::new(),
            });
        }
        let q = queries.last_mut().expect("pushed above");
        if l.rank != q.hits.len() + 1 {
            return Err(Error::malformed(
                path,
                *line,
                format!("rank {} out of sequence", l.rank),
            ));
        }
        q.hits.push(Hit {
            doc_id: l.doc_id,
            score: l.score,
        });
    }
    let run = RetrievalRun {
        provenance: RunProvenance {
            checkpoint_id: h.checkpoint_id,
            policy: ExclusionPolicy {
                exclude_self: h.exclude_self,
                exclude_same_patient: h.exclude_same_patient,
                min_report_chars: h.min_report_chars,
            },
            k: h.k,
        },
        queries,
    };
    run.validate()?;
    Ok(run)
}
