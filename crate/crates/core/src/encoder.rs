//! Linear projection encoders onto the unit sphere and the temperature-scaled
//! contrastive loss with analytic gradients.
//!
//! Queries are image features projected by `query_proj` (`D_img x E`).
//! Documents are the concatenation `[image; text]` projected by `doc_proj`
//! (`(D_img + D_txt) x E`). Both matrices are row-major. Relevance is the dot
//! product of the two unit vectors.
//!
//! For a query `q` with positives `P` and negatives `N`, the loss is
//!
//! ```text
//! L = sum_{p in P} -log( exp(s_p) / (exp(s_p) + sum_{n in N} exp(s_n)) ),  s = <q, d> / tau
//! ```
//!
//! Every positive shares the same negative set. Logits are shifted by their
//! maximum before exponentiation.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Projections with norm below this are rejected.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub image_dim: usize,
    pub text_dim: usize,
    pub embed_dim: usize,
    pub temperature: f64,
    pub query_proj: Vec<f64>,
    pub doc_proj: Vec<f64>,
}

impl EncoderParams {
    pub fn new(
        image_dim: usize,
        text_dim: usize,
        embed_dim: usize,
        temperature: f64,
        query_proj: Vec<f64>,
        doc_proj: Vec<f64>,
    ) -> Result<Self> {
        let p = EncoderParams {
            image_dim,
            text_dim,
            embed_dim,
            temperature,
            query_proj,
            doc_proj,
        };
        p.validate()?;
        Ok(p)
    }

    /// Gaussian init with variance `1 / fan_in` per matrix.
    pub fn random(image_dim: usize, text_dim: usize, embed_dim: usize, temperature: f64, seed: u64) -> Result<Self> {
        if image_dim == 0 {
            return Err(Error::InvalidConfig("image dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, len: usize| {
            let n = Normal::new(0.0, 1.0 / libm::sqrt(fan_in as f64)).expect("finite std");
            (0..len).map(|_| n.sample(&mut rng)).collect::<Vec<f64>>()
        };
        let query_proj = draw(image_dim, image_dim * embed_dim);
        let doc_in = image_dim + text_dim;
        let doc_proj = draw(doc_in, doc_in * embed_dim);
        EncoderParams::new(image_dim, text_dim, embed_dim, temperature, query_proj, doc_proj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 2".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if self.query_proj.len() != self.image_dim * self.embed_dim {
            return Err(Error::InvalidConfig("query projection has the wrong shape".into()));
        }
        if self.doc_proj.len() != self.doc_input_dim() * self.embed_dim {
            return Err(Error::InvalidConfig("document projection has the wrong shape".into()));
        }
        if !self.query_proj.iter().chain(&self.doc_proj).all(|w| w.is_finite()) {
            return Err(Error::InvalidConfig("projection has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn doc_input_dim(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn param_count(&self) -> usize {
        self.query_proj.len() + self.doc_proj.len()
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub query_proj: Vec<f64>,
    pub doc_proj: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &EncoderParams) -> Self {
        Gradients {
            query_proj: vec![0.0; params.query_proj.len()],
            doc_proj: vec![0.0; params.doc_proj.len()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.query_proj.iter_mut().chain(self.doc_proj.iter_mut()) {
            *g *= factor;
        }
    }
}

/// Image and text features of one document.
#[derive(Clone, Copy, Debug)]
pub struct DocFeatures<'a> {
    pub image: &'a [f64],
    pub text: &'a [f64],
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `y = W^T x` for row-major `W` of shape `x.len() x out_dim`.
fn project_into(w: &[f64], out_dim: usize, x: &[f64], y: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * out_dim..(i + 1) * out_dim];
        for (yj, wij) in y.iter_mut().zip(row) {
            *yj += xi * wij;
        }
    }
}

/// A projected vector and its normalization.
#[derive(Clone, Debug)]
struct Encoded {
    unit: Vec<f64>,
    norm: f64,
}

fn normalize(raw: Vec<f64>, what: &'static str) -> Result<Encoded> {
    let norm = libm::sqrt(dot(&raw, &raw));
    if norm.is_nan() || norm < MIN_NORM {
        return Err(Error::DegenerateEmbedding(what));
    }
    let unit = raw.into_iter().map(|v| v / norm).collect();
    Ok(Encoded { unit, norm })
}

fn encode_query_raw(params: &EncoderParams, image: &[f64]) -> Result<Encoded> {
    if image.len() != params.image_dim {
        return Err(Error::DimensionMismatch {
            id: "query".into(),
            field: "image_features",
            expected: params.image_dim,
            found: image.len(),
        });
    }
    let mut y = vec![0.0; params.embed_dim];
    project_into(&params.query_proj, params.embed_dim, image, &mut y);
    normalize(y, "query")
}

fn encode_doc_raw(params: &EncoderParams, doc: DocFeatures<'_>) -> Result<Encoded> {
    if doc.image.len() != params.image_dim {
        return Err(Error::DimensionMismatch {
            id: "document".into(),
            field: "image_features",
            expected: params.image_dim,
            found: doc.image.len(),
        });
    }
    if doc.text.len() != params.text_dim {
        return Err(Error::DimensionMismatch {
            id: "document".into(),
            field: "text_features",
            expected: params.text_dim,
            found: doc.text.len(),
        });
    }
    let e = params.embed_dim;
    let mut y = vec![0.0; e];
    let split = params.image_dim * e;
    project_into(&params.doc_proj[..split], e, doc.image, &mut y);
    project_into(&params.doc_proj[split..], e, doc.text, &mut y);
    normalize(y, "document")
}

pub fn encode_query(params: &EncoderParams, image_features: &[f64]) -> Result<Vec<f64>> {
    encode_query_raw(params, image_features).map(|e| e.unit)
}

/// Documents without text features are rejected with `MissingTextFeatures`.
pub fn encode_doc(params: &EncoderParams, image_features: &[f64], text_features: Option<&[f64]>) -> Result<Vec<f64>> {
    let text = text_features.ok_or_else(|| Error::MissingTextFeatures("document".into()))?;
    encode_doc_raw(
        params,
        DocFeatures {
            image: image_features,
            text,
        },
    )
    .map(|e| e.unit)
}

/// Cosine relevance of two unit vectors.
pub fn relevance(q: &[f64], d: &[f64]) -> f64 {
    dot(q, d)
}

/// Queries, documents and, per query, indices of its positives and negatives
/// into `docs`.
#[derive(Clone, Debug, Default)]
pub struct ContrastiveBatch<'a> {
    pub queries: Vec<&'a [f64]>,
    pub docs: Vec<DocFeatures<'a>>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

/// Loss for one query and its gradient w.r.t. the query embedding and each
/// referenced document embedding (accumulated into `doc_grads`).
fn query_term(
    q: &[f64],
    docs: &[Encoded],
    positives: &[usize],
    negatives: &[usize],
    inv_tau: f64,
    q_grad: &mut [f64],
    doc_grads: &mut [Vec<f64>],
) -> f64 {
    let neg_logits: Vec<f64> = negatives.iter().map(|&n| dot(q, &docs[n].unit) * inv_tau).collect();
    let neg_max = neg_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut loss = 0.0;
    let mut neg_weights = vec![0.0; negatives.len()];
    for &p in positives {
        let sp = dot(q, &docs[p].unit) * inv_tau;
        let m = sp.max(neg_max);
        let pos_exp = libm::exp(sp - m);
        let mut denom = pos_exp;
        let mut rest = 0.0;
        for &sn in &neg_logits {
            let v = libm::exp(sn - m);
            denom += v;
            rest += v;
        }
        // -log softmax_p = log(denom) - (sp - m); the log1p form keeps tiny losses exact
        loss += if sp >= neg_max {
            libm::log1p(rest)
        } else {
            libm::log(denom) - (sp - m)
        };
        // dL/ds_p = softmax_p - 1, dL/ds_n = softmax_n
        let gp = pos_exp / denom - 1.0;
        axpy(gp * inv_tau, &docs[p].unit, q_grad);
        axpy(gp * inv_tau, q, &mut doc_grads[p]);
        for (w, &sn) in neg_weights.iter_mut().zip(&neg_logits) {
            *w += libm::exp(sn - m) / denom;
        }
    }
    for (&n, &w) in negatives.iter().zip(&neg_weights) {
        axpy(w * inv_tau, &docs[n].unit, q_grad);
        axpy(w * inv_tau, q, &mut doc_grads[n]);
    }
    loss
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Back-propagates a gradient w.r.t. a unit vector through the normalization
/// and the linear projection: `dW[i, j] += x_i * (g - u <u, g>)_j / |y|`.
fn backprop_into(enc: &Encoded, unit_grad: &[f64], inputs: &[&[f64]], w_grad: &mut [f64], out_dim: usize) {
    let along = dot(&enc.unit, unit_grad);
    let raw_grad: Vec<f64> = unit_grad
        .iter()
        .zip(&enc.unit)
        .map(|(g, u)| (g - u * along) / enc.norm)
        .collect();
    let mut row = 0;
    for x in inputs {
        for &xi in x.iter() {
            if xi != 0.0 {
                axpy(xi, &raw_grad, &mut w_grad[row * out_dim..(row + 1) * out_dim]);
            }
            row += 1;
        }
    }
}

/// Summed contrastive loss over a batch and its gradient w.r.t. both
/// projections.
pub fn batch_loss(params: &EncoderParams, batch: &ContrastiveBatch<'_>) -> Result<(f64, Gradients)> {
    let nq = batch.queries.len();
    if batch.positives.len() != nq || batch.negatives.len() != nq {
        return Err(Error::LengthMismatch {
            left: nq,
            right: batch.positives.len().min(batch.negatives.len()),
        });
    }
    for (pos, neg) in batch.positives.iter().zip(&batch.negatives) {
        if pos.is_empty() {
            return Err(Error::NoPositives);
        }
        if neg.is_empty() {
            return Err(Error::NoNegatives);
        }
        if pos.iter().chain(neg).any(|&i| i >= batch.docs.len()) {
            return Err(Error::InvalidConfig("batch index out of range".into()));
        }
    }
    let e = params.embed_dim;
    let inv_tau = 1.0 / params.temperature;
    let queries: Vec<Encoded> = batch
        .queries
        .iter()
        .map(|x| encode_query_raw(params, x))
        .collect::<Result<_>>()?;
    let docs: Vec<Encoded> = batch
        .docs
        .iter()
        .map(|d| encode_doc_raw(params, *d))
        .collect::<Result<_>>()?;

    let mut doc_unit_grads = vec![vec![0.0; e]; docs.len()];
    let mut grads = Gradients::zeros(params);
    let mut loss = 0.0;
    for (qi, q) in queries.iter().enumerate() {
        let mut q_grad = vec![0.0; e];
        loss += query_term(
            &q.unit,
            &docs,
            &batch.positives[qi],
            &batch.negatives[qi],
            inv_tau,
            &mut q_grad,
            &mut doc_unit_grads,
        );
        backprop_into(q, &q_grad, &[batch.queries[qi]], &mut grads.query_proj, e);
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    for ((d, g), feats) in docs.iter().zip(&doc_unit_grads).zip(&batch.docs) {
        if g.iter().any(|&v| v != 0.0) {
            backprop_into(d, g, &[feats.image, feats.text], &mut grads.doc_proj, e);
        }
    }
    Ok((loss, grads))
}

/// Loss of one query against its positives; in-batch and extra negatives
/// are pooled into one negative set.
pub fn contrastive_loss(
    params: &EncoderParams,
    query: &[f64],
    positives: &[DocFeatures<'_>],
    in_batch_negatives: &[DocFeatures<'_>],
    extra_negatives: &[DocFeatures<'_>],
) -> Result<(f64, Gradients)> {
    let mut docs = Vec::with_capacity(positives.len() + in_batch_negatives.len() + extra_negatives.len());
    docs.extend_from_slice(positives);
    docs.extend_from_slice(in_batch_negatives);
    docs.extend_from_slice(extra_negatives);
    let batch = ContrastiveBatch {
        queries: vec![query],
        positives: vec![(0..positives.len()).collect()],
        negatives: vec![(positives.len()..docs.len()).collect()],
        docs,
    };
    batch_loss(params, &batch)
}

/// Loss on precomputed relevance scores, without gradients. Used to check
/// the closed form against hand-computed values.
pub fn loss_from_scores(positive_scores: &[f64], negative_scores: &[f64], temperature: f64) -> f64 {
    let inv_tau = 1.0 / temperature;
    let negs: Vec<f64> = negative_scores.iter().map(|s| s * inv_tau).collect();
    let neg_max = negs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    positive_scores
        .iter()
        .map(|&s| {
            let sp = s * inv_tau;
            let m = sp.max(neg_max);
            let rest: f64 = negs.iter().map(|&sn| libm::exp(sn - m)).sum();
            if sp >= neg_max {
                libm::log1p(rest)
            } else {
                libm::log(libm::exp(sp - m) + rest) - (sp - m)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_params(image_dim: usize, text_dim: usize, e: usize, tau: f64) -> EncoderParams {
        let eye = |rows: usize| {
            let mut w = vec![0.0; rows * e];
            for i in 0..rows.min(e) {
                w[i * e + i] = 1.0;
            }
            w
        };
        EncoderParams::new(image_dim, text_dim, e, tau, eye(image_dim), eye(image_dim + text_dim)).unwrap()
    }

    #[test]
    fn encode_query_examples() {
        let p = identity_params(3, 1, 2, 1.0);
        let q = encode_query(&p, &[3.0, 4.0, 0.0]).unwrap();
        assert!((q[0] - 0.6).abs() < 1e-15 && (q[1] - 0.8).abs() < 1e-15);
        let q2 = encode_query(&p, &[6.0, 8.0, 0.0]).unwrap();
        assert_eq!(q, q2);
        assert!(matches!(
            encode_query(&p, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(
            encode_query(&p, &[0.0, 0.0, 5.0]),
            Err(Error::DegenerateEmbedding("query"))
        );
    }

    #[test]
    fn encode_doc_examples() {
        let p = EncoderParams::random(4, 3, 5, 0.1, 1).unwrap();
        let d = encode_doc(&p, &[1.0, -2.0, 0.5, 0.0], Some(&[0.3, 0.2, 0.1])).unwrap();
        assert!((libm::sqrt(dot(&d, &d)) - 1.0).abs() < 1e-9);
        let again = encode_doc(&p, &[1.0, -2.0, 0.5, 0.0], Some(&[0.3, 0.2, 0.1])).unwrap();
        assert_eq!(d, again);
        assert_eq!(
            encode_doc(&p, &[1.0, -2.0, 0.5, 0.0], None),
            Err(Error::MissingTextFeatures("document".into()))
        );
    }

    #[test]
    fn relevance_examples() {
        assert_eq!(relevance(&[0.6, 0.8], &[0.6, 0.8]), 1.0);
        assert_eq!(relevance(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(relevance(&[1.0, 0.0], &[-1.0, 0.0]), -1.0);
    }

    #[test]
    fn loss_closed_forms() {
        // ln(1 + e^-1)
        let l = loss_from_scores(&[1.0], &[0.0], 1.0);
        assert!((l - 0.313_261_687_518_222_8).abs() < 1e-12);
        let l = loss_from_scores(&[0.5], &[0.5], 1.0);
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let l = loss_from_scores(&[1.0], &[0.2, -0.3], 0.01);
        assert!(l < 1e-12);
    }

    #[test]
    fn contrastive_loss_matches_scores() {
        // E = 2, identity projections: query (1,0); positive (1,0); negative (0,1)
        let p = identity_params(2, 1, 2, 1.0);
        let pos = DocFeatures {
            image: &[1.0, 0.0],
            text: &[0.0],
        };
        let neg = DocFeatures {
            image: &[0.0, 1.0],
            text: &[0.0],
        };
        let (l, _) = contrastive_loss(&p, &[1.0, 0.0], &[pos], &[neg], &[]).unwrap();
        assert!((l - 0.313_261_687_518_222_8).abs() < 1e-12);
        let (l, _) = contrastive_loss(&p, &[1.0, 0.0], &[pos], &[pos], &[]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(
            contrastive_loss(&p, &[1.0, 0.0], &[], &[neg], &[]).err(),
            Some(Error::NoPositives)
        );
        assert_eq!(
            contrastive_loss(&p, &[1.0, 0.0], &[pos], &[], &[]).err(),
            Some(Error::NoNegatives)
        );
    }

    #[test]
    fn invalid_params() {
        assert!(EncoderParams::random(3, 2, 1, 0.1, 0).is_err());
        assert!(EncoderParams::random(3, 2, 4, 0.0, 0).is_err());
        assert!(EncoderParams::new(1, 1, 2, 1.0, vec![f64::NAN, 0.0], vec![0.0; 4]).is_err());
    }
}
