//! Multi-seed experiment protocols: the robustness Δ table and the batch
//! size sweep.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::Dataset;
use crate::training::{evaluate, init_model, train, Architecture, Hyperparams, TrainHooks};
use crate::{Diagnostics, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// λ = 0, α = 0.
    CeOnly,
    /// Configured λ, α = 0.
    SclOnly,
    /// Configured λ and α.
    SclRai,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::CeOnly, Variant::SclOnly, Variant::SclRai];

    pub fn name(self) -> &'static str {
        match self {
            Variant::CeOnly => "ce_only",
            Variant::SclOnly => "scl_only",
            Variant::SclRai => "scl_rai",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    pub fn apply(self, hyper: &Hyperparams) -> Hyperparams {
        match self {
            Variant::CeOnly => Hyperparams {
                lambda: 0.0,
                alpha: 0.0,
                ..*hyper
            },
            Variant::SclOnly => Hyperparams {
                alpha: 0.0,
                ..*hyper
            },
            Variant::SclRai => *hyper,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trains one model and returns its test F1 (percent).
pub fn train_and_score(
    train_set: &Dataset,
    dev_set: &Dataset,
    test_set: &Dataset,
    hyper: &Hyperparams,
    arch: Architecture,
) -> Result<f64> {
    let model = init_model(train_set, arch, hyper.seed)?;
    let out = train(model, train_set, dev_set, hyper, TrainHooks::default())?;
    let mut diag = Diagnostics::default();
    let report = evaluate(
        &out.model,
        Some(&out.centroids),
        test_set,
        hyper.alpha,
        hyper.max_span_len,
        &mut diag,
    )?;
    Ok(report.f1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessRow {
    pub variant: Variant,
    pub seed: u64,
    pub f1_clean: f64,
    pub f1_noisy: f64,
}

impl RobustnessRow {
    pub fn delta(&self) -> f64 {
        self.f1_noisy - self.f1_clean
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

/// Per-variant means over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessSummary {
    pub variant: Variant,
    pub f1_clean: f64,
    pub f1_noisy: f64,
    pub delta: f64,
    pub seeds: usize,
}

impl RobustnessTable {
    pub fn summary(&self) -> Vec<RobustnessSummary> {
        let mut groups: BTreeMap<Variant, Vec<&RobustnessRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(r.variant).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(variant, rows)| {
                let n = rows.len() as f64;
                RobustnessSummary {
                    variant,
                    f1_clean: rows.iter().map(|r| r.f1_clean).sum::<f64>() / n,
                    f1_noisy: rows.iter().map(|r| r.f1_noisy).sum::<f64>() / n,
                    delta: rows.iter().map(|r| r.delta()).sum::<f64>() / n,
                    seeds: rows.len(),
                }
            })
            .collect()
    }

    pub fn mean_delta(&self, variant: Variant) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.variant == variant)
            .map(|s| s.delta)
    }

    /// Header plus one line per variant: means over seeds.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variant\tseeds\tf1_clean\tf1_noisy\tdelta\n");
        for s in self.summary() {
            out.push_str(&format!(
                "{}\t{}\t{:.2}\t{:.2}\t{:.2}\n",
                s.variant, s.seeds, s.f1_clean, s.f1_noisy, s.delta
            ));
        }
        out
    }

    /// Header plus one line per (variant, seed) run.
    pub fn runs_tsv(&self) -> String {
        let mut out = String::from("variant\tseed\tf1_clean\tf1_noisy\tdelta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.2}\t{:.2}\t{:.2}\n",
                r.variant,
                r.seed,
                r.f1_clean,
                r.f1_noisy,
                r.delta()
            ));
        }
        out
    }
}

/// Experiment inputs shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentData<'a> {
    pub train: &'a Dataset,
    pub dev: &'a Dataset,
    pub test: &'a Dataset,
}

/// For each variant and seed, trains on `train` and on `train + noisy_extra`
/// and records both test F1 values.
pub fn robustness_experiment(
    data: ExperimentData<'_>,
    noisy_extra: &Dataset,
    variants: &[Variant],
    seeds: &[u64],
    hyper: &Hyperparams,
    arch: Architecture,
    progress: &mut dyn FnMut(&RobustnessRow),
) -> Result<RobustnessTable> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config(
            "robustness experiment needs variants and seeds".into(),
        ));
    }
    let combined = data.train.concat(noisy_extra)?;
    let mut table = RobustnessTable::default();
    for &variant in variants {
        for &seed in seeds {
            let h = Hyperparams {
                seed,
                ..variant.apply(hyper)
            };
            let row = RobustnessRow {
                variant,
                seed,
                f1_clean: train_and_score(data.train, data.dev, data.test, &h, arch)?,
                f1_noisy: train_and_score(&combined, data.dev, data.test, &h, arch)?,
            };
            progress(&row);
            table.rows.push(row);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub batch_size: usize,
    pub seed: u64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean test F1 per batch size, in ascending size order.
    pub fn means(&self) -> Vec<(usize, f64)> {
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(r.batch_size).or_default().push(r.f1);
        }
        groups
            .into_iter()
            .map(|(size, v)| (size, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    /// Max minus min of the per-size means.
    pub fn spread(&self) -> f64 {
        let means = self.means();
        let max = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        if means.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("batch_size\tseeds\tmean_f1\n");
        for (size, mean) in self.means() {
            let n = self.rows.iter().filter(|r| r.batch_size == size).count();
            out.push_str(&format!("{size}\t{n}\t{mean:.2}\n"));
        }
        out.push_str(&format!("spread\t\t{:.2}\n", self.spread()));
        out
    }
}

/// One model per (batch size, seed), scored on the test set.
pub fn batch_size_sweep(
    data: ExperimentData<'_>,
    sizes: &[usize],
    seeds: &[u64],
    hyper: &Hyperparams,
    arch: Architecture,
    progress: &mut dyn FnMut(&SweepRow),
) -> Result<SweepTable> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("batch sweep needs sizes and seeds".into()));
    }
    let mut table = SweepTable::default();
    for &batch_size in sizes {
        for &seed in seeds {
            let h = Hyperparams {
                seed,
                batch_size,
                ..*hyper
            };
            let row = SweepRow {
                batch_size,
                seed,
                f1: train_and_score(data.train, data.dev, data.test, &h, arch)?,
            };
            progress(&row);
            table.rows.push(row);
        }
    }
    Ok(table)
}
