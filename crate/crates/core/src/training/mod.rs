//! Hyperparameters, the seeded training loop and the gradient checker.

mod adam;
mod gradcheck;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradcheck, BlockCheck, GradcheckConfig, GradcheckProblem, GradcheckReport};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::{negative_sample_with, Dataset, LabelSet, Sentence, SpanInstance};
use crate::encoder::Vocabulary;
use crate::eval::{predict_dataset, score, DecodeOptions, ScoreReport};
use crate::model::{reference_instances, DropoutMasks, Objective, SpanModel, TrainBatch};
use crate::rai::CentroidTable;
use crate::rng;
use crate::{Diagnostics, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub neg_ratio: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_span_len: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha: 0.5,
            tau: 0.1,
            neg_ratio: 0.35,
            dropout: 0.4,
            batch_size: 16,
            learning_rate: 1e-5,
            epochs: 30,
            max_span_len: 10,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau = {} must be positive",
                self.tau
            )));
        }
        if !(self.neg_ratio > 0.0 && self.neg_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "neg_ratio = {} must lie in (0, 1]",
                self.neg_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout = {} must lie in [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_span_len == 0 {
            return Err(Error::Config("max_span_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            lambda: self.lambda,
            tau: self.tau,
        }
    }
}

/// Sizes of the window encoder and scoring layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub rep_dim: usize,
    pub vocab_min_count: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            rep_dim: 256,
            vocab_min_count: 1,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.rep_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A freshly initialized window-encoder model whose vocabulary and label set
/// come from `train_set`.
pub fn init_model(train_set: &Dataset, arch: Architecture, seed: u64) -> Result<SpanModel> {
    arch.validate()?;
    let vocab = Vocabulary::build(
        train_set
            .sentences()
            .iter()
            .flat_map(|s| s.tokens())
            .map(String::as_str),
        arch.vocab_min_count,
    );
    SpanModel::init_window(
        vocab,
        train_set.label_set().clone(),
        arch.embed_dim,
        arch.hidden_dim,
        arch.rep_dim,
        seed,
    )
}

/// Dev-set precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DevScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&ScoreReport> for DevScores {
    fn from(r: &ScoreReport) -> Self {
        Self {
            precision: r.precision(),
            recall: r.recall(),
            f1: r.f1(),
        }
    }
}

/// One line of the training log. Losses are means per span instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_scl: f64,
    pub loss_final: f64,
    pub dev: DevScores,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.2}\t{:.2}\t{:.2}\t{:.3}",
            self.epoch,
            self.loss_ce,
            self.loss_scl,
            self.loss_final,
            self.dev.precision,
            self.dev.recall,
            self.dev.f1,
            self.wall_seconds
        )
    }
}

#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Seconds since an arbitrary origin. Without it every wall time is 0.
    pub clock: Option<&'a dyn Fn() -> f64>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// The selected checkpoint.
    pub model: SpanModel,
    pub centroids: CentroidTable,
    pub log: Vec<EpochRecord>,
    /// Epoch of the selected checkpoint, 0 for the untrained model.
    pub best_epoch: usize,
    pub dev_report: Option<ScoreReport>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
}

/// The checkpoint as saved: parameters and centroid table, both rounded to
/// `f32`, the table built over the training set.
pub fn snapshot(
    model: &SpanModel,
    train_set: &Dataset,
    hyper: &Hyperparams,
) -> Result<(SpanModel, CentroidTable)> {
    let mut m = model.clone();
    m.quantize_f32();
    let instances = reference_instances(train_set, hyper.neg_ratio, hyper.max_span_len, hyper.seed);
    let mut table = m.centroid_table(train_set, &instances)?;
    table.quantize_f32();
    Ok((m, table))
}

/// Scores `dataset` with retrieval-interpolated decoding.
pub fn evaluate(
    model: &SpanModel,
    table: Option<&CentroidTable>,
    dataset: &Dataset,
    alpha: f64,
    max_span_len: usize,
    diag: &mut Diagnostics,
) -> Result<ScoreReport> {
    let pred = predict_dataset(
        model,
        dataset,
        DecodeOptions {
            table,
            alpha,
            max_span_len,
        },
        diag,
    )?;
    score(&pred, dataset)
}

/// Training instances of one sentence at `epoch`: its gold spans plus fresh
/// negatives drawn from the epoch-indexed stream.
pub fn epoch_instances(
    sentence: &Sentence,
    gold: &[crate::corpus::GoldSpan],
    labels: &LabelSet,
    hyper: &Hyperparams,
    epoch: usize,
) -> Vec<SpanInstance> {
    let mut out: Vec<SpanInstance> = gold
        .iter()
        .map(|g| SpanInstance {
            sentence_id: sentence.id(),
            start: g.start,
            end: g.end,
            label: g.label,
        })
        .collect();
    let mut r = rng::stream(hyper.seed, "negatives", &[epoch as u64, sentence.id()]);
    out.extend(negative_sample_with(
        sentence,
        gold,
        labels,
        hyper.neg_ratio,
        hyper.max_span_len,
        &mut r,
    ));
    out
}

/// Runs the seeded loop and returns the checkpoint with the best dev F1.
pub fn train(
    mut model: SpanModel,
    train_set: &Dataset,
    dev_set: &Dataset,
    hyper: &Hyperparams,
    mut hooks: TrainHooks<'_>,
) -> Result<TrainOutput> {
    hyper.validate()?;
    let train_set = train_set.relabel(&model.labels)?;
    let mut diag = Diagnostics::default();
    let mut warnings = Vec::new();
    let start = hooks.clock.map(|c| c());

    let shapes: Vec<usize> = model.blocks().iter().map(|(_, b)| b.len()).collect();
    let mut adam = AdamState::new(&shapes, AdamConfig::default());
    let mut log = Vec::with_capacity(hyper.epochs);

    let (init_model, init_table) = snapshot(&model, &train_set, hyper)?;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best: (usize, SpanModel, CentroidTable, Option<ScoreReport>) =
        (0, init_model, init_table, None);
    if dev_set.is_empty() {
        warnings.push("dev set is empty; keeping the final epoch".into());
    } else if hyper.epochs == 0 {
        let report = evaluate(
            &best.1,
            Some(&best.2),
            &dev_set,
            hyper.alpha,
            hyper.max_span_len,
            &mut diag,
        )?;
        best.3 = Some(report);
    }

    let labels = model.labels.clone();
    for epoch in 1..=hyper.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(hyper.seed, "shuffle", &[epoch as u64]));
        let (mut ce, mut scl, mut total, mut count) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let mut sentences = Vec::with_capacity(chunk.len());
            let mut instances = Vec::new();
            for &k in chunk {
                let sentence = &train_set.sentences()[k];
                sentences.push(sentence);
                instances.extend(epoch_instances(
                    sentence,
                    &train_set.annotations()[k],
                    &labels,
                    hyper,
                    epoch,
                ));
            }
            if instances.is_empty() {
                continue;
            }
            let batch = TrainBatch::new(sentences, instances)?;
            let masks = DropoutMasks::sample(
                &batch,
                model.hidden_dim(),
                model.rep_dim(),
                hyper.dropout,
                &mut rng::stream(hyper.seed, "dropout", &[epoch as u64, b as u64]),
            );
            let (loss, grads) = model.loss_and_gradients(
                &batch,
                hyper.objective(),
                Some(&masks),
                true,
                &mut diag,
            )?;
            let grads = grads.expect("gradients requested");
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {b}"
                )));
            }
            if let Some(name) = grads.first_non_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of {name} at epoch {epoch}, batch {b}"
                )));
            }
            ce += loss.ce;
            scl += loss.scl;
            total += loss.total;
            count += batch.instances().len();
            let g = grads.blocks();
            let grad_slices: Vec<&[f64]> = g.iter().map(|(_, s)| *s).collect();
            let mut blocks = model.blocks_mut();
            let mut params: Vec<&mut [f64]> = blocks.iter_mut().map(|(_, s)| &mut **s).collect();
            adam.step(&mut params, &grad_slices, hyper.learning_rate)?;
        }

        let (snap, table) = snapshot(&model, &train_set, hyper)?;
        let report = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate(
                &snap,
                Some(&table),
                &dev_set,
                hyper.alpha,
                hyper.max_span_len,
                &mut diag,
            )?)
        };
        let n = count.max(1) as f64;
        let record = EpochRecord {
            epoch,
            loss_ce: ce / n,
            loss_scl: scl / n,
            loss_final: total / n,
            dev: report.as_ref().map(DevScores::from).unwrap_or_default(),
            wall_seconds: match (hooks.clock, start) {
                (Some(c), Some(s)) => c() - s,
                _ => 0.0,
            },
        };
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(&record);
        }
        log.push(record);
        let better = match &report {
            Some(r) => r.f1() > best_f1,
            None => true,
        };
        if better {
            best_f1 = report.as_ref().map_or(best_f1, ScoreReport::f1);
            best = (epoch, snap, table, report);
        }
    }

    let (best_epoch, model, centroids, dev_report) = best;
    Ok(TrainOutput {
        model,
        centroids,
        log,
        best_epoch,
        dev_report,
        warnings,
        diagnostics: diag,
    })
}
