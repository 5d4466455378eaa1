//! Exact top-k retrieval over unit-norm document embeddings.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{Corpus, Split};
use crate::encoder::{dot, encode_doc, EncoderParams};
use crate::error::{Error, Result};

/// Rows scanned per tile in [`search_batch`].
const ROW_BLOCK: usize = 64;
/// Queries scored per tile in [`search_batch`].
const QUERY_BLOCK: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowMeta {
    pub patient_id: String,
    /// Length of the report text in characters, surrounding whitespace excluded.
    pub report_chars: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    doc_ids: Vec<String>,
    meta: Vec<RowMeta>,
    matrix: Vec<f64>,
}

impl EmbeddingIndex {
    /// Assembles an index from parts. Ids must be unique, rows unit-norm.
    pub fn from_parts(dim: usize, doc_ids: Vec<String>, meta: Vec<RowMeta>, matrix: Vec<f64>) -> Result<Self> {
        if meta.len() != doc_ids.len() {
            return Err(Error::LengthMismatch {
                left: doc_ids.len(),
                right: meta.len(),
            });
        }
        if matrix.len() != doc_ids.len() * dim {
            return Err(Error::LengthMismatch {
                left: doc_ids.len() * dim,
                right: matrix.len(),
            });
        }
        let mut sorted: Vec<&String> = doc_ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].clone()));
        }
        for row in matrix.chunks(dim.max(1)) {
            let n = libm::sqrt(dot(row, row));
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(alloc::format!("index row norm {n} is not 1")));
            }
        }
        Ok(EmbeddingIndex {
            dim,
            doc_ids,
            meta,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }
}

/// Encodes every record of `split` as a document, in corpus order.
pub fn build_index(corpus: &Corpus, params: &EncoderParams, split: Split) -> Result<EmbeddingIndex> {
    let positions = corpus.split_positions(split);
    let mut matrix = Vec::with_capacity(positions.len() * params.embed_dim);
    let mut doc_ids = Vec::with_capacity(positions.len());
    let mut meta = Vec::with_capacity(positions.len());
    for &i in &positions {
        let r = &corpus.records()[i];
        let text = r
            .text_features
            .as_deref()
            .ok_or_else(|| Error::MissingTextFeatures(r.report_id.clone()))?;
        matrix.extend(encode_doc(params, &r.image_features, Some(text))?);
        doc_ids.push(r.report_id.clone());
        meta.push(RowMeta {
            patient_id: r.patient_id.clone(),
            report_chars: r.report_text.trim().chars().count(),
        });
    }
    Ok(EmbeddingIndex {
        dim: params.embed_dim,
        doc_ids,
        meta,
        matrix,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExclusionPolicy {
    pub exclude_self: bool,
    pub exclude_same_patient: bool,
    /// Reports shorter than this many characters are never returned.
    pub min_report_chars: usize,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        ExclusionPolicy {
            exclude_self: true,
            exclude_same_patient: true,
            min_report_chars: 5,
        }
    }
}

impl ExclusionPolicy {
    pub const NONE: ExclusionPolicy = ExclusionPolicy {
        exclude_self: false,
        exclude_same_patient: false,
        min_report_chars: 0,
    };

    pub fn admits(&self, query: &QueryIdentity<'_>, doc_id: &str, meta: &RowMeta) -> bool {
        !(self.exclude_self && doc_id == query.report_id
            || self.exclude_same_patient && meta.patient_id == query.patient_id
            || meta.report_chars < self.min_report_chars)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryIdentity<'a> {
    pub report_id: &'a str,
    pub patient_id: &'a str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Descending score, then ascending doc id.
fn rank_order(index: &EmbeddingIndex, a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| index.doc_ids[a.0].cmp(&index.doc_ids[b.0]))
}

fn top_k(index: &EmbeddingIndex, mut scored: Vec<(usize, f64)>, k: usize, query_id: &str) -> Result<Vec<Hit>> {
    if scored.is_empty() {
        return Err(Error::EmptyCandidateSet(query_id.into()));
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(index, a, b));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| rank_order(index, a, b));
    Ok(scored
        .into_iter()
        .map(|(i, score)| Hit {
            doc_id: index.doc_ids[i].clone(),
            score,
        })
        .collect())
}

/// Exact top-`k` rows by dot product among rows admitted by `policy`.
pub fn search(
    index: &EmbeddingIndex,
    query: &[f64],
    k: usize,
    policy: &ExclusionPolicy,
    identity: QueryIdentity<'_>,
) -> Result<Vec<Hit>> {
    check_query(index, query, k)?;
    let scored = (0..index.len())
        .filter(|&i| policy.admits(&identity, &index.doc_ids[i], &index.meta[i]))
        .map(|i| (i, dot(query, index.row(i))))
        .collect();
    top_k(index, scored, k, identity.report_id)
}

fn check_query(index: &EmbeddingIndex, query: &[f64], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if query.len() != index.dim {
        return Err(Error::DimensionMismatch {
            id: "query".into(),
            field: "embedding",
            expected: index.dim,
            found: query.len(),
        });
    }
    Ok(())
}

/// Tiled scan over (query block x row block). Each score is the same `dot`
/// call as in [`search`], so results are bit-identical to per-query search.
pub fn search_batch(
    index: &EmbeddingIndex,
    queries: &[&[f64]],
    k: usize,
    policy: &ExclusionPolicy,
    identities: &[QueryIdentity<'_>],
) -> Result<Vec<Result<Vec<Hit>>>> {
    if queries.len() != identities.len() {
        return Err(Error::LengthMismatch {
            left: queries.len(),
            right: identities.len(),
        });
    }
    let mut out = Vec::with_capacity(queries.len());
    for (qs, ids) in queries.chunks(QUERY_BLOCK).zip(identities.chunks(QUERY_BLOCK)) {
        let mut scored: Vec<Vec<(usize, f64)>> = Vec::with_capacity(qs.len());
        let mut valid: Vec<Result<()>> = Vec::with_capacity(qs.len());
        for q in qs {
            valid.push(check_query(index, q, k));
            scored.push(Vec::new());
        }
        for start in (0..index.len()).step_by(ROW_BLOCK) {
            let end = (start + ROW_BLOCK).min(index.len());
            for (qi, q) in qs.iter().enumerate() {
                if valid[qi].is_err() {
                    continue;
                }
                for i in start..end {
                    if policy.admits(&ids[qi], &index.doc_ids[i], &index.meta[i]) {
                        scored[qi].push((i, dot(q, index.row(i))));
                    }
                }
            }
        }
        for ((s, v), id) in scored.into_iter().zip(valid).zip(ids) {
            out.push(v.and_then(|_| top_k(index, s, k, id.report_id)));
        }
    }
    Ok(out)
}
