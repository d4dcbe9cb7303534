//! The full span classifier: encoder, projection `W` and output `V`, with an
//! exact reverse pass through every parameter.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::contrastive::{combined_loss, scl_loss, scl_loss_with_grad, ContrastiveBatch};
use crate::corpus::{negative_sample_with, Dataset, LabelSet, Sentence, SpanInstance};
use crate::encoder::{
    Encode, Encoder, HiddenSequence, PrecomputedFeatures, Vocabulary, WindowCache, WindowEncoder,
    WindowGrads,
};
use crate::math::{self, Matrix};
use crate::rai::{build_centroid_table, CentroidTable};
use crate::rng::{self, Rng};
use crate::span_model::{
    ce_loss, dropout_mask, label_dist, label_logits, project, span_rep, LabelDistribution,
    ProjectedRep, ScoringParams,
};
use crate::{Diagnostics, Error, Result};

/// Parameter block names, in the order used by the optimizer and checkpoints.
pub const BLOCK_NAMES: [&str; 5] = ["E", "U", "b", "W", "V"];

#[derive(Debug, Clone, PartialEq)]
pub struct SpanModel {
    pub encoder: Encoder,
    pub scoring: ScoringParams,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `None` for frozen encoders.
    pub encoder: Option<WindowGrads>,
    pub projection: Matrix,
    pub output: Matrix,
}

impl Gradients {
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(5);
        if let Some(e) = &self.encoder {
            out.push(("E", e.embeddings.as_slice()));
            out.push(("U", e.mixing.as_slice()));
            out.push(("b", e.bias.as_slice()));
        }
        out.push(("W", self.projection.as_slice()));
        out.push(("V", self.output.as_slice()));
        out
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        match (name, &mut self.encoder) {
            ("E", Some(e)) => Some(e.embeddings.as_mut_slice()),
            ("U", Some(e)) => Some(e.mixing.as_mut_slice()),
            ("b", Some(e)) => Some(e.bias.as_mut_slice()),
            ("W", _) => Some(self.projection.as_mut_slice()),
            ("V", _) => Some(self.output.as_mut_slice()),
            _ => None,
        }
    }

    /// Name of the first block holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .into_iter()
            .find(|(_, v)| !math::all_finite(v))
            .map(|(name, _)| name)
    }
}

/// Loss components of one batch. All are sums over the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub scl: f64,
    pub total: f64,
}

/// The weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub tau: f64,
}

/// Span instances pooled across the sentences of one batch.
#[derive(Debug, Clone)]
pub struct TrainBatch<'a> {
    sentences: Vec<&'a Sentence>,
    instances: Vec<SpanInstance>,
    slots: Vec<usize>,
}

impl<'a> TrainBatch<'a> {
    pub fn new(sentences: Vec<&'a Sentence>, instances: Vec<SpanInstance>) -> Result<Self> {
        let by_id: BTreeMap<u64, usize> = sentences
            .iter()
            .enumerate()
            .map(|(slot, s)| (s.id(), slot))
            .collect();
        let mut slots = Vec::with_capacity(instances.len());
        for inst in &instances {
            let slot = *by_id.get(&inst.sentence_id).ok_or_else(|| {
                Error::Contract(format!(
                    "instance refers to sentence {} outside the batch",
                    inst.sentence_id
                ))
            })?;
            if inst.start > inst.end || inst.end >= sentences[slot].len() {
                return Err(Error::Contract(format!(
                    "instance ({}, {}) out of range for sentence {}",
                    inst.start, inst.end, inst.sentence_id
                )));
            }
            slots.push(slot);
        }
        Ok(Self {
            sentences,
            instances,
            slots,
        })
    }

    pub fn sentences(&self) -> &[&'a Sentence] {
        &self.sentences
    }

    pub fn instances(&self) -> &[SpanInstance] {
        &self.instances
    }
}

/// Fixed dropout masks for one batch: one per sentence over its hidden
/// vectors and one per instance over its projected representation.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub hidden: Vec<Vec<f64>>,
    pub reps: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample(
        batch: &TrainBatch<'_>,
        hidden_dim: usize,
        rep_dim: usize,
        rate: f64,
        rng: &mut Rng,
    ) -> Self {
        let hidden = batch
            .sentences
            .iter()
            .map(|s| dropout_mask(s.len() * hidden_dim, rate, rng))
            .collect();
        let reps = batch
            .instances
            .iter()
            .map(|_| dropout_mask(rep_dim, rate, rng))
            .collect();
        Self { hidden, reps }
    }
}

enum EncoderTrace {
    Window(WindowCache),
    Frozen(HiddenSequence),
}

impl EncoderTrace {
    fn hidden(&self) -> &HiddenSequence {
        match self {
            EncoderTrace::Window(c) => c.hidden(),
            EncoderTrace::Frozen(h) => h,
        }
    }
}

struct InstanceTrace {
    span: Vec<f64>,
    rep: Vec<f64>,
    dropped: Vec<f64>,
    dist: LabelDistribution,
}

impl SpanModel {
    pub fn new(encoder: Encoder, scoring: ScoringParams, labels: LabelSet) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Contract(
                "a model needs at least one entity label".into(),
            ));
        }
        if scoring.hidden_dim() != encoder.hidden_dim() || scoring.projection.cols() % 4 != 0 {
            return Err(Error::Dimension {
                expected: 4 * encoder.hidden_dim(),
                actual: scoring.projection.cols(),
                context: "projection columns vs encoder dimension",
            });
        }
        if scoring.output.cols() != scoring.rep_dim() {
            return Err(Error::Dimension {
                expected: scoring.rep_dim(),
                actual: scoring.output.cols(),
                context: "output columns vs representation dimension",
            });
        }
        if scoring.num_labels() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                actual: scoring.num_labels(),
                context: "output rows vs label set",
            });
        }
        Ok(Self {
            encoder,
            scoring,
            labels,
        })
    }

    pub fn init_window(
        vocab: Vocabulary,
        labels: LabelSet,
        embed_dim: usize,
        hidden_dim: usize,
        rep_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed, "init", &[]);
        let encoder = WindowEncoder::init(vocab, embed_dim, hidden_dim, &mut rng);
        let scoring = ScoringParams::init(hidden_dim, rep_dim, labels.len(), &mut rng);
        Self::new(Encoder::Window(encoder), scoring, labels)
    }

    pub fn init_precomputed(
        features: PrecomputedFeatures,
        labels: LabelSet,
        rep_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed, "init", &[]);
        let scoring = ScoringParams::init(features.dim(), rep_dim, labels.len(), &mut rng);
        Self::new(Encoder::Precomputed(features), scoring, labels)
    }

    #[inline]
    pub fn hidden_dim(&self) -> usize {
        self.scoring.hidden_dim()
    }

    #[inline]
    pub fn rep_dim(&self) -> usize {
        self.scoring.rep_dim()
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self.encoder, Encoder::Precomputed(_))
    }

    pub fn encode(&self, sentence: &Sentence) -> Result<HiddenSequence> {
        self.encoder.encode(sentence)
    }

    /// Projected representation of span `(i, j)` in inference mode.
    pub fn projected(&self, hidden: &HiddenSequence, i: usize, j: usize) -> Result<ProjectedRep> {
        let s = span_rep(hidden.row(i), hidden.row(j))?;
        project(&s, &self.scoring.projection)
    }

    /// Projected representation and model label distribution, inference mode.
    pub fn span_output(
        &self,
        hidden: &HiddenSequence,
        i: usize,
        j: usize,
    ) -> Result<(ProjectedRep, LabelDistribution)> {
        let r = self.projected(hidden, i, j)?;
        let p = label_dist(&label_logits(r.as_slice(), &self.scoring.output));
        Ok((r, p))
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(5);
        if let Encoder::Window(w) = &self.encoder {
            out.push(("E", w.embeddings.as_slice()));
            out.push(("U", w.mixing.as_slice()));
            out.push(("b", w.bias.as_slice()));
        }
        out.push(("W", self.scoring.projection.as_slice()));
        out.push(("V", self.scoring.output.as_slice()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(5);
        if let Encoder::Window(w) = &mut self.encoder {
            out.push(("E", w.embeddings.as_mut_slice()));
            out.push(("U", w.mixing.as_mut_slice()));
            out.push(("b", w.bias.as_mut_slice()));
        }
        out.push(("W", self.scoring.projection.as_mut_slice()));
        out.push(("V", self.scoring.output.as_mut_slice()));
        out
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.blocks_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }

    /// Rounds every parameter to `f32`, the checkpoint precision.
    pub fn quantize_f32(&mut self) {
        for (_, block) in self.blocks_mut() {
            crate::math::round_to_f32(block);
        }
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            encoder: match &self.encoder {
                Encoder::Window(w) => Some(w.zero_grads()),
                Encoder::Precomputed(_) => None,
            },
            projection: Matrix::zeros(
                self.scoring.projection.rows(),
                self.scoring.projection.cols(),
            ),
            output: Matrix::zeros(self.scoring.output.rows(), self.scoring.output.cols()),
        }
    }

    /// Combined loss of a batch and, when `want_grads`, its exact gradient.
    /// `masks` of `None` means inference mode (no dropout).
    pub fn loss_and_gradients(
        &self,
        batch: &TrainBatch<'_>,
        objective: Objective,
        masks: Option<&DropoutMasks>,
        want_grads: bool,
        diag: &mut Diagnostics,
    ) -> Result<(LossBreakdown, Option<Gradients>)> {
        let d_h = self.hidden_dim();
        let d_r = self.rep_dim();
        let traces: Vec<EncoderTrace> = batch
            .sentences
            .iter()
            .map(|s| match &self.encoder {
                Encoder::Window(w) => Ok(EncoderTrace::Window(w.forward(s))),
                Encoder::Precomputed(p) => p.encode(s).map(EncoderTrace::Frozen),
            })
            .collect::<Result<_>>()?;
        let hidden: Vec<Vec<f64>> = traces
            .iter()
            .enumerate()
            .map(|(slot, t)| {
                let raw = t.hidden().as_slice();
                match masks {
                    Some(m) => raw
                        .iter()
                        .zip(&m.hidden[slot])
                        .map(|(x, k)| x * k)
                        .collect(),
                    None => raw.to_vec(),
                }
            })
            .collect();

        let mut inst = Vec::with_capacity(batch.instances.len());
        for (k, (instance, &slot)) in batch.instances.iter().zip(&batch.slots).enumerate() {
            let h = &hidden[slot];
            let hi = &h[instance.start * d_h..(instance.start + 1) * d_h];
            let hj = &h[instance.end * d_h..(instance.end + 1) * d_h];
            let s = span_rep(hi, hj)?;
            let r = project(&s, &self.scoring.projection)?.into_vec();
            let dropped: Vec<f64> = match masks {
                Some(m) => r.iter().zip(&m.reps[k]).map(|(x, k)| x * k).collect(),
                None => r.clone(),
            };
            let dist = label_dist(&label_logits(&dropped, &self.scoring.output));
            inst.push(InstanceTrace {
                span: s.as_slice().to_vec(),
                rep: r,
                dropped,
                dist,
            });
        }

        let ce = ce_loss(
            batch
                .instances
                .iter()
                .zip(&inst)
                .map(|(i, t)| (i.label, &t.dist)),
            diag,
        );
        let cbatch = ContrastiveBatch::new(
            inst.iter().map(|t| t.dropped.as_slice()).collect(),
            batch.instances.iter().map(|i| i.label).collect(),
        )?;
        let need_scl_grad = want_grads && objective.lambda != 0.0;
        let (scl, scl_grads) = if need_scl_grad {
            let (loss, g) = scl_loss_with_grad(&cbatch, objective.tau, diag);
            (loss, Some(g))
        } else {
            (scl_loss(&cbatch, objective.tau, diag), None)
        };
        let losses = LossBreakdown {
            ce,
            scl,
            total: combined_loss(ce, scl, objective.lambda),
        };
        if !want_grads {
            return Ok((losses, None));
        }

        let mut grads = self.zero_grads();
        let mut d_hidden: Vec<Vec<f64>> = hidden.iter().map(|h| vec![0.0; h.len()]).collect();
        let ce_weight = 1.0 - objective.lambda;
        let mut d_rep = vec![0.0; d_r];
        let mut d_pre = vec![0.0; d_r];
        let mut d_span = vec![0.0; 4 * d_h];
        for (k, (instance, t)) in batch.instances.iter().zip(&inst).enumerate() {
            d_rep.iter_mut().for_each(|x| *x = 0.0);
            if ce_weight != 0.0 {
                let dz: Vec<f64> = t
                    .dist
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(l, &p)| ce_weight * (p - if l == instance.label.0 { 1.0 } else { 0.0 }))
                    .collect();
                grads.output.add_outer(&dz, &t.dropped);
                self.scoring.output.matvec_t_acc(&dz, &mut d_rep);
            }
            if let Some(g) = &scl_grads {
                for (d, s) in d_rep.iter_mut().zip(&g[k]) {
                    *d += objective.lambda * s;
                }
            }
            for c in 0..d_r {
                let mask = masks.map_or(1.0, |m| m.reps[k][c]);
                d_pre[c] = d_rep[c] * mask * (1.0 - t.rep[c] * t.rep[c]);
            }
            grads.projection.add_outer(&d_pre, &t.span);
            d_span.iter_mut().for_each(|x| *x = 0.0);
            self.scoring.projection.matvec_t_acc(&d_pre, &mut d_span);

            let slot = batch.slots[k];
            let (i, j) = (instance.start, instance.end);
            let h = &hidden[slot];
            let dh = &mut d_hidden[slot];
            for c in 0..d_h {
                let (hi, hj) = (h[i * d_h + c], h[j * d_h + c]);
                let (s_i, s_j, s_diff, s_prod) = (
                    d_span[c],
                    d_span[d_h + c],
                    d_span[2 * d_h + c],
                    d_span[3 * d_h + c],
                );
                dh[i * d_h + c] += s_i + s_diff + s_prod * hj;
                dh[j * d_h + c] += s_j - s_diff + s_prod * hi;
            }
        }

        if let (Encoder::Window(w), Some(eg)) = (&self.encoder, grads.encoder.as_mut()) {
            for (slot, trace) in traces.iter().enumerate() {
                let EncoderTrace::Window(cache) = trace else {
                    continue;
                };
                let mut dh = core::mem::take(&mut d_hidden[slot]);
                if let Some(m) = masks {
                    for (d, k) in dh.iter_mut().zip(&m.hidden[slot]) {
                        *d *= k;
                    }
                }
                w.backward(cache, &dh, eg);
            }
        }
        Ok((losses, Some(grads)))
    }

    /// Centroid table over `instances`, computed in inference mode.
    pub fn centroid_table(
        &self,
        dataset: &Dataset,
        instances: &[SpanInstance],
    ) -> Result<CentroidTable> {
        let reps = self.instance_reps(dataset, instances)?;
        build_centroid_table(
            &self.labels,
            self.rep_dim(),
            instances
                .iter()
                .zip(&reps)
                .map(|(i, r)| (i.label, r.as_slice())),
        )
    }

    /// Inference-mode projected representation of each instance, in order.
    pub fn instance_reps(
        &self,
        dataset: &Dataset,
        instances: &[SpanInstance],
    ) -> Result<Vec<ProjectedRep>> {
        let by_id: BTreeMap<u64, &Sentence> =
            dataset.sentences().iter().map(|s| (s.id(), s)).collect();
        let mut out = Vec::with_capacity(instances.len());
        let mut cached: Option<(u64, HiddenSequence)> = None;
        for inst in instances {
            if cached.as_ref().map(|(id, _)| *id) != Some(inst.sentence_id) {
                let sentence = by_id
                    .get(&inst.sentence_id)
                    .ok_or(Error::MissingSentence(inst.sentence_id))?;
                cached = Some((inst.sentence_id, self.encode(sentence)?));
            }
            let (_, hidden) = cached.as_ref().expect("filled above");
            out.push(self.projected(hidden, inst.start, inst.end)?);
        }
        Ok(out)
    }
}

/// Gold spans plus seeded negatives for every sentence of `dataset`: the
/// instance set used for centroids and representation dumps.
pub fn reference_instances(
    dataset: &Dataset,
    neg_ratio: f64,
    max_span_len: usize,
    seed: u64,
) -> Vec<SpanInstance> {
    let mut out = Vec::new();
    for (sentence, spans) in dataset.iter() {
        out.extend(spans.iter().map(|g| SpanInstance {
            sentence_id: sentence.id(),
            start: g.start,
            end: g.end,
            label: g.label,
        }));
        let mut rng = rng::stream(seed, "reference-negatives", &[sentence.id()]);
        out.extend(negative_sample_with(
            sentence,
            spans,
            dataset.label_set(),
            neg_ratio,
            max_span_len,
            &mut rng,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_bio, LabelId};

    fn setup() -> (SpanModel, Dataset) {
        let ds = parse_bio(
            "John\tB-PER\nlives\tO\nin\tO\nParis\tB-LOC\n\nAcme\tB-ORG\nhired\tO\nMary\tB-PER\n",
        )
        .unwrap()
        .dataset;
        let vocab = Vocabulary::build(
            ds.sentences()
                .iter()
                .flat_map(|s| s.tokens())
                .map(|t| t.as_str()),
            1,
        );
        let model = SpanModel::init_window(vocab, ds.label_set().clone(), 4, 6, 5, 1).unwrap();
        (model, ds)
    }

    #[test]
    fn dimensions_are_checked() {
        let (model, ds) = setup();
        let mut bad = model.scoring.clone();
        bad.output = Matrix::zeros(2, 5);
        assert!(SpanModel::new(model.encoder.clone(), bad, ds.label_set().clone()).is_err());
        let only_o = LabelSet::from_entity_types([]).unwrap();
        assert!(SpanModel::new(model.encoder.clone(), model.scoring.clone(), only_o).is_err());
    }

    #[test]
    fn batch_rejects_foreign_instances() {
        let (_, ds) = setup();
        let s = &ds.sentences()[0];
        let inst = SpanInstance {
            sentence_id: 99,
            start: 0,
            end: 0,
            label: LabelId(0),
        };
        assert!(TrainBatch::new(vec![s], vec![inst]).is_err());
        let inst = SpanInstance {
            sentence_id: 0,
            start: 0,
            end: 4,
            label: LabelId(0),
        };
        assert!(TrainBatch::new(vec![s], vec![inst]).is_err());
    }

    #[test]
    fn lambda_zero_matches_pure_ce() {
        let (model, ds) = setup();
        let sentences: Vec<&Sentence> = ds.sentences().iter().collect();
        let batch = TrainBatch::new(sentences, reference_instances(&ds, 0.5, 3, 2)).unwrap();
        let mut d = Diagnostics::default();
        let (loss, grads) = model
            .loss_and_gradients(
                &batch,
                Objective {
                    lambda: 0.0,
                    tau: 0.1,
                },
                None,
                true,
                &mut d,
            )
            .unwrap();
        assert_eq!(loss.total, loss.ce);
        assert!(grads.unwrap().first_non_finite().is_none());
    }

    #[test]
    fn instance_reps_match_direct_projection() {
        let (model, ds) = setup();
        let insts = reference_instances(&ds, 0.5, 3, 2);
        let reps = model.instance_reps(&ds, &insts).unwrap();
        for (inst, r) in insts.iter().zip(&reps) {
            let s = ds
                .sentences()
                .iter()
                .find(|s| s.id() == inst.sentence_id)
                .unwrap();
            let h = model.encode(s).unwrap();
            assert_eq!(&model.projected(&h, inst.start, inst.end).unwrap(), r);
        }
    }

    #[test]
    fn quantization_is_idempotent() {
        let (mut model, _) = setup();
        model.quantize_f32();
        let once = model.clone();
        model.quantize_f32();
        assert_eq!(model, once);
        for (_, b) in model.blocks() {
            assert!(b.iter().all(|x| *x == *x as f32 as f64));
        }
    }
}
