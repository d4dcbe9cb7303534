//! Retrieval-augmented inference.
//!
//! After training, each label gets a centroid: the mean projected
//! representation of its training instances. At inference the cosine
//! similarity of a span to every centroid goes through a softmax, the
//! non-entity entry is zeroed without renormalizing, and the result is mixed
//! into the model distribution:
//!
//! ```text
//! p_final = (1 − α)·o_model + α·o_RA
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::contrastive::cosine;
use crate::corpus::{LabelId, LabelSet};
use crate::span_model::LabelDistribution;
use crate::{Diagnostics, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    labels: LabelSet,
    dim: usize,
    counts: Vec<u64>,
    centroids: Vec<Option<Vec<f64>>>,
}

impl CentroidTable {
    /// `centroids[l]` must be `Some` exactly when `counts[l] > 0`.
    pub fn from_parts(
        labels: LabelSet,
        dim: usize,
        counts: Vec<u64>,
        centroids: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        if counts.len() != labels.len() || centroids.len() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                actual: counts.len().min(centroids.len()),
                context: "centroid table entries vs labels",
            });
        }
        for (l, (count, c)) in counts.iter().zip(&centroids).enumerate() {
            match c {
                Some(v) if *count > 0 => {
                    if v.len() != dim {
                        return Err(Error::Dimension {
                            expected: dim,
                            actual: v.len(),
                            context: "centroid dimension",
                        });
                    }
                    if !crate::math::all_finite(v) {
                        return Err(Error::NonFinite(format!("centroid for label {l}")));
                    }
                }
                None if *count == 0 => {}
                _ => {
                    return Err(Error::Contract(format!(
                        "label {l}: centroid presence does not match count {count}"
                    )))
                }
            }
        }
        Ok(Self {
            labels,
            dim,
            counts,
            centroids,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self, label: LabelId) -> u64 {
        self.counts[label.0]
    }

    pub fn centroid(&self, label: LabelId) -> Option<&[f64]> {
        self.centroids[label.0].as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.iter().all(Option::is_none)
    }

    /// Rounds every centroid entry to `f32`, the file precision.
    pub fn quantize_f32(&mut self) {
        for c in self.centroids.iter_mut().flatten() {
            crate::math::round_to_f32(c);
        }
    }

    /// Entity labels without a centroid.
    pub fn missing_entity_labels(&self) -> Vec<LabelId> {
        self.labels
            .entity_ids()
            .filter(|l| self.centroids[l.0].is_none())
            .collect()
    }
}

/// Per-label arithmetic mean of the given representations.
pub fn build_centroid_table<'a>(
    labels: &LabelSet,
    dim: usize,
    instances: impl IntoIterator<Item = (LabelId, &'a [f64])>,
) -> Result<CentroidTable> {
    let mut sums = vec![vec![0.0; dim]; labels.len()];
    let mut counts = vec![0u64; labels.len()];
    for (label, rep) in instances {
        if label.0 >= labels.len() {
            return Err(Error::Contract(format!(
                "label id {} out of range",
                label.0
            )));
        }
        if rep.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: rep.len(),
                context: "centroid instance",
            });
        }
        counts[label.0] += 1;
        for (s, x) in sums[label.0].iter_mut().zip(rep) {
            *s += x;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &n)| (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect()))
        .collect();
    CentroidTable::from_parts(labels.clone(), dim, counts, centroids)
}

/// `o_RA`: softmax over cosine similarities to the available centroids, with
/// the non-entity entry set to zero afterwards (no renormalization).
pub fn ra_distribution(
    r: &[f64],
    table: &CentroidTable,
    diag: &mut Diagnostics,
) -> LabelDistribution {
    let sims: Vec<f64> = (0..table.labels.len())
        .map(|l| match &table.centroids[l] {
            Some(c) => cosine(r, c, diag),
            None => f64::NEG_INFINITY,
        })
        .collect();
    let mut p = crate::math::softmax(&sims);
    p[table.labels.non_entity().0] = 0.0;
    if p.iter().all(|&x| x == 0.0) {
        diag.empty_retrievals += 1;
    }
    LabelDistribution::new(p)
}

/// `(1 − α)·o_model + α·o_RA`, componentwise, without renormalization.
pub fn interpolate(
    model: &LabelDistribution,
    retrieved: &LabelDistribution,
    alpha: f64,
) -> Result<LabelDistribution> {
    if model.len() != retrieved.len() {
        return Err(Error::Dimension {
            expected: model.len(),
            actual: retrieved.len(),
            context: "interpolated distributions",
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(LabelDistribution::new(
        model
            .as_slice()
            .iter()
            .zip(retrieved.as_slice())
            .map(|(m, r)| (1.0 - alpha) * m + alpha * r)
            .collect(),
    ))
}
