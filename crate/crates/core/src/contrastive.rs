//! Span-level supervised contrastive loss.
//!
//! For an anchor `a` with label `l` and a positive `p ≠ a` with the same label,
//!
//! ```text
//! F(a, p) = d(a, p)/τ − log Σ_{m ∈ D_l̄} exp(d(a, m)/τ)
//! loss    = −Σ_l Σ_{a ∈ D_l} 1/(N_l − 1) Σ_{p ∈ D_l, p ≠ a} F(a, p)
//! ```
//!
//! where `d` is cosine similarity and `D_l̄` holds the batch instances whose
//! label is not `l`. The positive term is not part of the denominator.
//! Labels with a single instance contribute nothing, and so do anchors whose
//! `D_l̄` is empty.
//!
//! Every sum is taken over sorted terms so the loss is bitwise independent of
//! batch order.

use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::LabelId;
use crate::math;
use crate::{Diagnostics, Error, Result};

/// Vectors with a norm below this are treated as degenerate.
pub const MIN_NORM: f64 = 1e-12;

/// Projected representations of one batch and their labels.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<'a> {
    reps: Vec<&'a [f64]>,
    labels: Vec<LabelId>,
}

impl<'a> ContrastiveBatch<'a> {
    pub fn new(reps: Vec<&'a [f64]>, labels: Vec<LabelId>) -> Result<Self> {
        if reps.len() != labels.len() {
            return Err(Error::Contract(alloc::format!(
                "{} representations but {} labels",
                reps.len(),
                labels.len()
            )));
        }
        if let Some(first) = reps.first() {
            if let Some(bad) = reps.iter().find(|r| r.len() != first.len()) {
                return Err(Error::Dimension {
                    expected: first.len(),
                    actual: bad.len(),
                    context: "contrastive batch representation",
                });
            }
        }
        Ok(Self { reps, labels })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn rep(&self, k: usize) -> &[f64] {
        self.reps[k]
    }

    pub fn label(&self, k: usize) -> LabelId {
        self.labels[k]
    }

    /// Indices of `D_l`.
    pub fn members(&self, label: LabelId) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.labels[k] == label)
            .collect()
    }

    /// Indices of `D_l̄`.
    pub fn non_members(&self, label: LabelId) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.labels[k] != label)
            .collect()
    }

    /// `N_l`.
    pub fn count(&self, label: LabelId) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Cosine similarity; `0` (and a counter bump) when either norm is below
/// [`MIN_NORM`].
pub fn cosine(a: &[f64], b: &[f64], diag: &mut Diagnostics) -> f64 {
    let (na, nb) = (math::norm(a), math::norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        diag.degenerate_cosines += 1;
        return 0.0;
    }
    math::dot(a, b) / (na * nb)
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    xs.iter().sum()
}

fn sorted_lse(mut xs: Vec<f64>) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    math::log_sum_exp(&xs)
}

/// `F(anchor, positive)` against the given negatives. `None` when there are
/// no negatives (the term is skipped).
pub fn scl_pair_term(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
    diag: &mut Diagnostics,
) -> Option<f64> {
    if negatives.is_empty() {
        diag.skipped_scl_terms += 1;
        return None;
    }
    let pos = cosine(anchor, positive, diag) / tau;
    let neg: Vec<f64> = negatives
        .iter()
        .map(|m| cosine(anchor, m, diag) / tau)
        .collect();
    Some(pos - sorted_lse(neg))
}

struct Unit {
    dir: Vec<f64>,
    norm: f64,
}

fn units(batch: &ContrastiveBatch<'_>) -> Vec<Option<Unit>> {
    batch
        .reps
        .iter()
        .map(|r| {
            let norm = math::norm(r);
            (norm >= MIN_NORM).then(|| Unit {
                dir: r.iter().map(|x| x / norm).collect(),
                norm,
            })
        })
        .collect()
}

fn unit_cosine(a: &Option<Unit>, b: &Option<Unit>, diag: &mut Diagnostics) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => math::dot(&a.dir, &b.dir),
        _ => {
            diag.degenerate_cosines += 1;
            0.0
        }
    }
}

/// Loss value and, optionally, `∂loss/∂d(a, b)` for every ordered pair.
fn scl_core(
    batch: &ContrastiveBatch<'_>,
    tau: f64,
    diag: &mut Diagnostics,
    want_pair_grads: bool,
) -> (f64, Vec<Option<Unit>>, Vec<f64>, Vec<f64>) {
    let n = batch.len();
    let units = units(batch);
    let mut sim = vec![0.0; n * n];
    let mut pair_grad = if want_pair_grads {
        vec![0.0; n * n]
    } else {
        Vec::new()
    };
    if n < 2 {
        return (0.0, units, sim, pair_grad);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let d = unit_cosine(&units[a], &units[b], diag);
            sim[a * n + b] = d;
            sim[b * n + a] = d;
        }
    }
    let mut anchor_losses = Vec::new();
    for a in 0..n {
        let label = batch.labels[a];
        let positives: Vec<usize> = (0..n)
            .filter(|&p| p != a && batch.labels[p] == label)
            .collect();
        if positives.is_empty() {
            continue;
        }
        let negatives = batch.non_members(label);
        if negatives.is_empty() {
            diag.skipped_scl_terms += positives.len() as u64;
            continue;
        }
        let neg_logits: Vec<f64> = negatives.iter().map(|&m| sim[a * n + m] / tau).collect();
        let lse = sorted_lse(neg_logits.clone());
        let terms: Vec<f64> = positives
            .iter()
            .map(|&p| sim[a * n + p] / tau - lse)
            .collect();
        let weight = 1.0 / positives.len() as f64;
        anchor_losses.push(-weight * sorted_sum(terms));
        if want_pair_grads {
            for &p in &positives {
                pair_grad[a * n + p] -= weight / tau;
            }
            for (&m, &logit) in negatives.iter().zip(&neg_logits) {
                pair_grad[a * n + m] += math::exp(logit - lse) / tau;
            }
        }
    }
    (sorted_sum(anchor_losses), units, sim, pair_grad)
}

pub fn scl_loss(batch: &ContrastiveBatch<'_>, tau: f64, diag: &mut Diagnostics) -> f64 {
    scl_core(batch, tau, diag, false).0
}

/// Loss and its gradient with respect to every representation in the batch.
pub fn scl_loss_with_grad(
    batch: &ContrastiveBatch<'_>,
    tau: f64,
    diag: &mut Diagnostics,
) -> (f64, Vec<Vec<f64>>) {
    let n = batch.len();
    let dim = batch.reps.first().map_or(0, |r| r.len());
    let (loss, units, sim, pair_grad) = scl_core(batch, tau, diag, true);
    let mut grads = vec![vec![0.0; dim]; n];
    if n < 2 {
        return (loss, grads);
    }
    // ∂d(a,b)/∂r_a = (u_b − d·u_a) / |r_a|
    for a in 0..n {
        let Some(ua) = &units[a] else { continue };
        for b in 0..n {
            if a == b {
                continue;
            }
            let Some(ub) = &units[b] else { continue };
            let g = pair_grad[a * n + b] + pair_grad[b * n + a];
            if g == 0.0 {
                continue;
            }
            let d = sim[a * n + b];
            let scale = g / ua.norm;
            for ((out, &xb), &xa) in grads[a].iter_mut().zip(&ub.dir).zip(&ua.dir) {
                *out += scale * (xb - d * xa);
            }
        }
    }
    (loss, grads)
}

/// `(1 − λ)·ce + λ·scl`.
pub fn combined_loss(ce: f64, scl: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * ce + lambda * scl
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let mut d = Diagnostics::default();
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0], &mut d) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0], &mut d), 0.0);
        let a = [0.3, -1.2, 0.8];
        let b = [2.0, 0.1, -0.4];
        let base = cosine(&a, &b, &mut d);
        for c in [0.001, 2.0, 1e6] {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            assert!((cosine(&scaled, &b, &mut d) - base).abs() <= 1e-12);
        }
        assert_eq!(d.degenerate_cosines, 0);
        assert_eq!(cosine(&[0.0, 0.0], &b, &mut d), 0.0);
        assert_eq!(d.degenerate_cosines, 1);
    }

    #[test]
    fn pair_term_by_hand() {
        let mut d = Diagnostics::default();
        // d(r, r̂) = 1, d(r, neg) = 0, τ = 1  →  F = 1 − ln(e⁰) = 1
        let r = [1.0, 0.0];
        let f = scl_pair_term(&r, &[2.0, 0.0], &[&[0.0, 1.0]], 1.0, &mut d).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        // all distances equal with k negatives → F = −ln k
        let neg: [&[f64]; 3] = [&[1.0, 0.0], &[3.0, 0.0], &[0.5, 0.0]];
        let f = scl_pair_term(&r, &[1.0, 0.0], &neg, 1.0, &mut d).unwrap();
        assert!((f + 3f64.ln()).abs() < 1e-12);
        assert!(scl_pair_term(&r, &r, &[], 0.1, &mut d).is_none());
        assert_eq!(d.skipped_scl_terms, 1);
    }

    #[test]
    fn degenerate_batches_give_zero() {
        let mut d = Diagnostics::default();
        let reps: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]];
        let same = ContrastiveBatch::new(reps.clone(), vec![LabelId(1); 3]).unwrap();
        assert_eq!(scl_loss(&same, 0.1, &mut d), 0.0);
        assert_eq!(d.skipped_scl_terms, 6);
        let singletons =
            ContrastiveBatch::new(reps.clone(), vec![LabelId(0), LabelId(1), LabelId(2)]).unwrap();
        assert_eq!(scl_loss(&singletons, 0.1, &mut d), 0.0);
        let one = ContrastiveBatch::new(vec![&[1.0, 0.0]], vec![LabelId(0)]).unwrap();
        assert_eq!(scl_loss(&one, 0.1, &mut d), 0.0);
    }

    #[test]
    fn combined_cases() {
        assert_eq!(combined_loss(2.0, -1.0, 0.0), 2.0);
        assert_eq!(combined_loss(2.0, -1.0, 1.0), -1.0);
        assert!((combined_loss(2.0, -1.0, 0.1) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn batch_partitions() {
        let reps: Vec<&[f64]> = vec![&[1.0], &[2.0], &[3.0]];
        let b = ContrastiveBatch::new(reps, vec![LabelId(0), LabelId(1), LabelId(0)]).unwrap();
        assert_eq!(b.members(LabelId(0)), vec![0, 2]);
        assert_eq!(b.non_members(LabelId(0)), vec![1]);
        assert_eq!(b.count(LabelId(0)), 2);
        assert!(ContrastiveBatch::new(vec![&[1.0]], vec![]).is_err());
        assert!(ContrastiveBatch::new(vec![&[1.0], &[1.0, 2.0]], vec![LabelId(0); 2]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let raw = [
            [0.3, -0.2, 0.5],
            [0.1, 0.4, -0.3],
            [-0.6, 0.2, 0.1],
            [0.2, 0.2, 0.7],
            [-0.1, -0.5, 0.3],
        ];
        let labels = vec![LabelId(0), LabelId(1), LabelId(0), LabelId(1), LabelId(1)];
        let loss_at = |reps: &[[f64; 3]]| {
            let refs: Vec<&[f64]> = reps.iter().map(|r| r.as_slice()).collect();
            let b = ContrastiveBatch::new(refs, labels.clone()).unwrap();
            scl_loss(&b, 0.1, &mut Diagnostics::default())
        };
        let refs: Vec<&[f64]> = raw.iter().map(|r| r.as_slice()).collect();
        let b = ContrastiveBatch::new(refs, labels.clone()).unwrap();
        let (loss, grads) = scl_loss_with_grad(&b, 0.1, &mut Diagnostics::default());
        assert_eq!(loss, loss_at(&raw));
        let h = 1e-6;
        for k in 0..raw.len() {
            for c in 0..3 {
                let mut plus = raw;
                plus[k][c] += h;
                let mut minus = raw;
                minus[k][c] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let an = grads[k][c];
                assert!(
                    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) <= 1e-4,
                    "{k},{c}: {fd} vs {an}"
                );
            }
        }
    }
}
