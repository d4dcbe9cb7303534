//! Span representation, projection and label scoring.
//!
//! For a span `(i, j)` with hidden vectors `h_i`, `h_j`:
//!
//! ```text
//! s = h_i ⊕ h_j ⊕ (h_i − h_j) ⊕ (h_i ⊙ h_j)      (4·d_h)
//! r = tanh(W s)                                  (d_r)
//! z = V r,  p = softmax(z)                       (L)
//! ```
//!
//! `p` is the model's label distribution; the cross-entropy loss is the sum
//! of `−ln p(gold)` over the instances of a batch.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::corpus::LabelId;
use crate::math::{self, Matrix};
use crate::rng::Rng;
use crate::{Diagnostics, Error, Result};

/// Floor applied to `p(gold)` before taking the logarithm.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpanRep(Vec<f64>);

impl SpanRep {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRep(Vec<f64>);

impl ProjectedRep {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Probability vector over the label set. Retrieval distributions may sum
/// to less than one after the non-entity entry is zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, label: LabelId) -> f64 {
        self.0[label.0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> LabelId {
        let mut best = 0;
        for (k, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = k;
            }
        }
        LabelId(best)
    }
}

/// `W` (`d_r × 4·d_h`) and `V` (`L × d_r`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringParams {
    pub projection: Matrix,
    pub output: Matrix,
}

impl ScoringParams {
    pub fn init(hidden_dim: usize, rep_dim: usize, num_labels: usize, rng: &mut Rng) -> Self {
        let mut draw = |_, _| rng.random_range(-0.1..0.1);
        let projection = Matrix::from_fn(rep_dim, 4 * hidden_dim, &mut draw);
        let output = Matrix::from_fn(num_labels, rep_dim, &mut draw);
        Self { projection, output }
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.cols() / 4
    }

    pub fn rep_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn num_labels(&self) -> usize {
        self.output.rows()
    }
}

pub fn span_rep(h_i: &[f64], h_j: &[f64]) -> Result<SpanRep> {
    if h_i.len() != h_j.len() {
        return Err(Error::Dimension {
            expected: h_i.len(),
            actual: h_j.len(),
            context: "span endpoint vectors",
        });
    }
    let mut s = Vec::with_capacity(4 * h_i.len());
    s.extend_from_slice(h_i);
    s.extend_from_slice(h_j);
    s.extend(h_i.iter().zip(h_j).map(|(a, b)| a - b));
    s.extend(h_i.iter().zip(h_j).map(|(a, b)| a * b));
    Ok(SpanRep(s))
}

/// `r = tanh(W s)`.
pub fn project(s: &SpanRep, w: &Matrix) -> Result<ProjectedRep> {
    if s.0.len() != w.cols() {
        return Err(Error::Dimension {
            expected: w.cols(),
            actual: s.0.len(),
            context: "span representation vs projection",
        });
    }
    if !math::all_finite(&s.0) {
        return Err(Error::NonFinite("span representation".into()));
    }
    let r: Vec<f64> = w.matvec(&s.0).into_iter().map(math::tanh).collect();
    if !math::all_finite(&r) {
        return Err(Error::NonFinite("projection".into()));
    }
    Ok(ProjectedRep(r))
}

/// `z_l = v_lᵀ r`.
pub fn label_logits(r: &[f64], v: &Matrix) -> Vec<f64> {
    v.matvec(r)
}

pub fn label_dist(z: &[f64]) -> LabelDistribution {
    LabelDistribution(math::softmax(z))
}

/// `Σ −ln p(gold)` over the batch, with `p(gold)` floored at [`CE_FLOOR`].
pub fn ce_loss<'a>(
    batch: impl IntoIterator<Item = (LabelId, &'a LabelDistribution)>,
    diag: &mut Diagnostics,
) -> f64 {
    let mut total = 0.0;
    for (gold, p) in batch {
        let mut pg = p.get(gold);
        if pg < CE_FLOOR {
            diag.ce_clamped += 1;
            pg = CE_FLOOR;
        }
        total -= math::ln(pg);
    }
    total
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return alloc::vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

pub fn apply_dropout(x: &[f64], rate: f64, rng: &mut Rng, training: bool) -> Vec<f64> {
    if !training || rate <= 0.0 {
        return x.to_vec();
    }
    dropout_mask(x.len(), rate, rng)
        .into_iter()
        .zip(x)
        .map(|(m, v)| m * v)
        .collect()
}
