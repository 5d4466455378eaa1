//! Retrieval-augmented fine-tuning examples for an external report generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::corpus::{Corpus, Split};
use crate::encoder::{encode_query, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::Oracle;
use crate::index::{build_index, search, ExclusionPolicy, QueryIdentity};

/// Image placeholder consumed by the downstream generator.
pub const IMAGE_TOKEN: &str = "<image>";

pub const VQA_INSTRUCTION: &str = "Generate a radiology report from this image: <image>";

/// Plain prompt without retrieved context.
pub fn vqa_prompt() -> String {
    VQA_INSTRUCTION.to_string()
}

/// Prompt carrying the retrieved report in double quotes on its own line.
pub fn rag_prompt(document: &str) -> String {
    format!("Here is a report of a related patient: \"{document}\"\n{VQA_INSTRUCTION}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RagMode {
    Vqa,
    Rag,
    OracleRag,
}

impl RagMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RagMode::Vqa => "vqa",
            RagMode::Rag => "rag",
            RagMode::OracleRag => "oracle-rag",
        }
    }
}

impl FromStr for RagMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vqa" => Ok(RagMode::Vqa),
            "rag" => Ok(RagMode::Rag),
            "oracle-rag" => Ok(RagMode::OracleRag),
            other => Err(Error::InvalidConfig(format!("unknown RAG mode `{other}`"))),
        }
    }
}

impl fmt::Display for RagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RagExample {
    pub query_report_id: String,
    pub image_ref: String,
    pub retrieved_doc_id: Option<String>,
    pub prompt: String,
    pub target: String,
    pub mode: RagMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RagDataset {
    pub mode: RagMode,
    pub examples: Vec<RagExample>,
    /// Queries whose candidates were all excluded; they got the plain prompt.
    pub fallbacks: Vec<String>,
    /// Queries skipped because their own report text is empty.
    pub skipped_empty_target: Vec<String>,
}

/// One example per train, validation and test query, in corpus order.
/// Retrieval always searches the train split. `params` is required for
/// [`RagMode::Rag`] only.
pub fn build_rag_dataset(
    corpus: &Corpus,
    params: Option<&EncoderParams>,
    policy: &ExclusionPolicy,
    mode: RagMode,
) -> Result<RagDataset> {
    let records = corpus.records();
    let index = match mode {
        RagMode::Rag => {
            let params = params.ok_or_else(|| Error::InvalidConfig("rag mode needs encoder parameters".into()))?;
            Some((params, build_index(corpus, params, Split::Train)?))
        }
        _ => None,
    };
    let oracle = (mode == RagMode::OracleRag).then(|| Oracle::new(corpus, true));

    let mut out = RagDataset {
        mode,
        examples: Vec::with_capacity(records.len()),
        fallbacks: Vec::new(),
        skipped_empty_target: Vec::new(),
    };
    for split in Split::ALL {
        for i in corpus.split_positions(split) {
            let r = &records[i];
            if r.report_text.trim().is_empty() {
                out.skipped_empty_target.push(r.report_id.clone());
                continue;
            }
            let identity = QueryIdentity {
                report_id: &r.report_id,
                patient_id: &r.patient_id,
            };
            let retrieved = match (&index, &oracle) {
                (Some((params, index)), _) => {
                    let q = encode_query(params, &r.image_features)?;
                    match search(index, &q, 1, policy, identity) {
                        Ok(hits) => hits.into_iter().next().map(|h| h.doc_id),
                        Err(Error::EmptyCandidateSet(_)) => None,
                        Err(e) => return Err(e),
                    }
                }
                (None, Some(oracle)) => match oracle.retrieve(&r.report_id, policy) {
                    Ok(hit) => Some(hit.doc_id),
                    Err(Error::EmptyCandidateSet(_)) => None,
                    Err(e) => return Err(e),
                },
                (None, None) => None,
            };
            if mode != RagMode::Vqa && retrieved.is_none() {
                out.fallbacks.push(r.report_id.clone());
            }
            let prompt = match &retrieved {
                Some(id) => rag_prompt(&corpus.require(id)?.report_text),
                None => vqa_prompt(),
            };
            out.examples.push(RagExample {
                query_report_id: r.report_id.clone(),
                image_ref: r.image_ref().to_string(),
                retrieved_doc_id: retrieved,
                prompt,
                target: r.report_text.clone(),
                mode,
            });
        }
    }
    Ok(out)
}
