use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::corpus::{LabelId, LabelSet, Sentence, SpanInstance};
use crate::encoder::{HiddenSequence, PrecomputedFeatures, Vocabulary};
use crate::model::{DropoutMasks, Objective, SpanModel, TrainBatch};
use crate::rng;
use crate::{Diagnostics, Error, Result};

/// A small random problem checked against central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub dropout: f64,
    pub frozen: bool,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub rep_dim: usize,
    pub num_labels: usize,
    pub num_instances: usize,
    /// Adds a unit error to the first analytic entry of this block.
    pub corrupt_block: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda: 0.1,
            tau: 0.1,
            dropout: 0.4,
            frozen: false,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            embed_dim: 8,
            hidden_dim: 16,
            rep_dim: 16,
            num_labels: 3,
            num_instances: 6,
            corrupt_block: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.blocks
            .iter()
            .filter(|b| !b.passed)
            .map(|b| b.name)
            .collect()
    }
}

/// The random problem: model, sentences, instances and masks.
pub struct GradcheckProblem {
    pub model: SpanModel,
    pub sentences: Vec<Sentence>,
    pub instances: Vec<SpanInstance>,
}

impl GradcheckProblem {
    pub fn generate(cfg: &GradcheckConfig) -> Result<Self> {
        if cfg.num_labels < 2 || cfg.num_instances == 0 {
            return Err(Error::Config(
                "gradcheck needs at least 2 labels and 1 instance".into(),
            ));
        }
        let mut r = rng::stream(cfg.seed, "gradcheck", &[]);
        let words: Vec<String> = (0..10).map(|k| format!("w{k}")).collect();
        let sentences: Vec<Sentence> = (0..3u64)
            .map(|id| {
                let n = r.random_range(4..=6);
                Sentence::new(
                    id,
                    (0..n)
                        .map(|_| words[r.random_range(0..words.len())].clone())
                        .collect(),
                )
            })
            .collect::<Result<_>>()?;
        let instances = (0..cfg.num_instances)
            .map(|k| {
                let s = &sentences[r.random_range(0..sentences.len())];
                let i = r.random_range(0..s.len());
                let j = r.random_range(i..s.len());
                SpanInstance {
                    sentence_id: s.id(),
                    start: i,
                    end: j,
                    label: LabelId((k / 2) % cfg.num_labels),
                }
            })
            .collect();
        let types: Vec<String> = (1..cfg.num_labels).map(|k| format!("T{k}")).collect();
        let labels = LabelSet::from_entity_types(types.iter().map(String::as_str))?;
        let model = if cfg.frozen {
            let mut features = PrecomputedFeatures::new(cfg.hidden_dim);
            for s in &sentences {
                let data = (0..s.len() * cfg.hidden_dim)
                    .map(|_| r.random_range(-1.0..1.0))
                    .collect();
                features.insert(s.id(), HiddenSequence::new(cfg.hidden_dim, data)?)?;
            }
            SpanModel::init_precomputed(features, labels, cfg.rep_dim, cfg.seed)?
        } else {
            let vocab = Vocabulary::from_tokens(words);
            SpanModel::init_window(
                vocab,
                labels,
                cfg.embed_dim,
                cfg.hidden_dim,
                cfg.rep_dim,
                cfg.seed,
            )?
        };
        Ok(Self {
            model,
            sentences,
            instances,
        })
    }
}

/// Compares every analytic gradient entry with the Richardson extrapolation
/// of central differences at steps `h` and `h/2`.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let problem = GradcheckProblem::generate(cfg)?;
    let mut model = problem.model;
    let batch = TrainBatch::new(
        problem.sentences.iter().collect(),
        problem.instances.clone(),
    )?;
    let masks = DropoutMasks::sample(
        &batch,
        model.hidden_dim(),
        model.rep_dim(),
        cfg.dropout,
        &mut rng::stream(cfg.seed, "gradcheck-dropout", &[]),
    );
    let objective = Objective {
        lambda: cfg.lambda,
        tau: cfg.tau,
    };
    let mut diag = Diagnostics::default();
    let (_, grads) = model.loss_and_gradients(&batch, objective, Some(&masks), true, &mut diag)?;
    let mut grads = grads.expect("gradients requested");
    if let Some(name) = &cfg.corrupt_block {
        let block = grads
            .block_mut(name)
            .ok_or_else(|| Error::Config(format!("no gradient block named {name}")))?;
        block[0] += 1.0;
    }

    let names: Vec<&'static str> = model.blocks().iter().map(|(n, _)| *n).collect();
    let mut blocks = Vec::with_capacity(names.len());
    for name in names {
        let analytic: Vec<f64> = grads
            .blocks()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, g)| g.to_vec())
            .expect("gradient blocks mirror parameter blocks");
        let mut check = BlockCheck {
            name,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            passed: true,
        };
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = model.block_mut(name).expect("known block")[idx];
            let mut loss_at = |x: f64, model: &mut SpanModel| -> Result<f64> {
                model.block_mut(name).expect("known block")[idx] = x;
                let (l, _) =
                    model.loss_and_gradients(&batch, objective, Some(&masks), false, &mut diag)?;
                Ok(l.total)
            };
            let mut central = |h: f64, model: &mut SpanModel| -> Result<f64> {
                let plus = loss_at(orig + h, model)?;
                let minus = loss_at(orig - h, model)?;
                Ok((plus - minus) / (2.0 * h))
            };
            let coarse = central(cfg.step, &mut model)?;
            let fine = central(0.5 * cfg.step, &mut model)?;
            model.block_mut(name).expect("known block")[idx] = orig;
            let numeric = (4.0 * fine - coarse) / 3.0;
            let abs = libm::fabs(a - numeric);
            let rel = abs / libm::fabs(a).max(libm::fabs(numeric)).max(cfg.floor);
            if !(rel <= check.max_rel_error) {
                check.max_rel_error = rel;
                check.worst_index = idx;
            }
            check.max_abs_error = check.max_abs_error.max(abs);
        }
        check.passed = check.max_rel_error <= cfg.tolerance;
        blocks.push(check);
    }
    Ok(GradcheckReport { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_problem_passes() {
        let r = gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.blocks.len(), 5);
    }

    #[test]
    fn corrupted_block_is_named() {
        let cfg = GradcheckConfig {
            corrupt_block: Some("W".into()),
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert_eq!(r.failing(), ["W"]);
    }
}
