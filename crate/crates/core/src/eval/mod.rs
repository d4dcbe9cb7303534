//! Span decoding and phrase-level scoring with conlleval semantics.

pub mod experiment;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::corpus::{enumerate_spans, spans_from_bio, Dataset, GoldSpan, LabelId, Sentence, Tag};
use crate::model::{reference_instances, SpanModel};
use crate::rai::{interpolate, ra_distribution, CentroidTable};
use crate::{Diagnostics, Error, Result};

/// A predicted span and the final probability of its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub start: usize,
    pub end: usize,
    pub label: LabelId,
    pub score: f64,
}

impl Prediction {
    pub fn overlaps(&self, other: &Prediction) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

fn candidate_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start.cmp(&b.start))
        .then(a.end.cmp(&b.end))
        .then(a.label.cmp(&b.label))
}

/// Greedy overlap resolution: highest score first, ties broken by `(i, j)`.
/// The result is sorted by start.
pub fn resolve_overlaps(mut candidates: Vec<Prediction>) -> Vec<Prediction> {
    candidates.sort_by(candidate_order);
    let mut accepted: Vec<Prediction> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|a| !a.overlaps(&c)) {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|p| (p.start, p.end));
    accepted
}

/// Inference settings. `table: None` disables retrieval entirely.
#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions<'a> {
    pub table: Option<&'a CentroidTable>,
    pub alpha: f64,
    pub max_span_len: usize,
}

/// Predicted entity spans of one sentence.
pub fn decode(
    sentence: &Sentence,
    model: &SpanModel,
    opts: DecodeOptions<'_>,
    diag: &mut Diagnostics,
) -> Result<Vec<Prediction>> {
    let hidden = model.encode(sentence)?;
    let mut candidates = Vec::new();
    for (i, j) in enumerate_spans(sentence.len(), opts.max_span_len) {
        let (r, p) = model.span_output(&hidden, i, j)?;
        let p_final = match opts.table {
            Some(table) => {
                interpolate(&p, &ra_distribution(r.as_slice(), table, diag), opts.alpha)?
            }
            None => p,
        };
        let label = p_final.argmax();
        if model.labels.is_entity(label) {
            candidates.push(Prediction {
                start: i,
                end: j,
                label,
                score: p_final.get(label),
            });
        }
    }
    Ok(resolve_overlaps(candidates))
}

/// The sentences of `dataset` annotated with decoded predictions.
pub fn predict_dataset(
    model: &SpanModel,
    dataset: &Dataset,
    opts: DecodeOptions<'_>,
    diag: &mut Diagnostics,
) -> Result<Dataset> {
    let mut annotations = Vec::with_capacity(dataset.len());
    for sentence in dataset.sentences() {
        let preds = decode(sentence, model, opts, diag)?;
        annotations.push(
            preds
                .into_iter()
                .map(|p| GoldSpan::new(p.start, p.end, p.label))
                .collect(),
        );
    }
    Dataset::new(
        dataset.sentences().to_vec(),
        annotations,
        model.labels.clone(),
        dataset.provenance(),
    )
}

/// Gold, predicted and correct phrase counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhraseCounts {
    pub gold: u64,
    pub predicted: u64,
    pub correct: u64,
}

impl PhraseCounts {
    /// Percent, 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: PhraseCounts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub tokens: u64,
    pub overall: PhraseCounts,
    pub per_type: BTreeMap<String, PhraseCounts>,
}

impl ScoreReport {
    pub fn precision(&self) -> f64 {
        self.overall.precision()
    }

    pub fn recall(&self) -> f64 {
        self.overall.recall()
    }

    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    pub fn merge(&mut self, other: &ScoreReport) {
        self.tokens += other.tokens;
        self.overall.add(other.overall);
        for (k, v) in &other.per_type {
            self.per_type.entry(k.clone()).or_default().add(*v);
        }
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "processed {} tokens with {} phrases; found: {} phrases; correct: {}.",
            self.tokens, self.overall.gold, self.overall.predicted, self.overall.correct
        )?;
        writeln!(
            f,
            "precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}",
            self.precision(),
            self.recall(),
            self.f1()
        )?;
        for (kind, c) in &self.per_type {
            writeln!(
                f,
                "{:>17}: precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}  {}",
                kind,
                c.precision(),
                c.recall(),
                c.f1(),
                c.predicted
            )?;
        }
        Ok(())
    }
}

/// Phrase-level scores of one tagged sentence. Phrases are the conlleval
/// chunks of each sequence, orphan `I-` tags included.
pub fn score_tags(gold: &[Tag], pred: &[Tag]) -> Result<ScoreReport> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            sentence: 0,
            token: gold.len().min(pred.len()),
            detail: format!("gold has {} tokens, prediction {}", gold.len(), pred.len()),
        });
    }
    let (gold_spans, _) = spans_from_bio(gold);
    let (pred_spans, _) = spans_from_bio(pred);
    let mut report = ScoreReport {
        tokens: gold.len() as u64,
        ..ScoreReport::default()
    };
    for g in &gold_spans {
        report.per_type.entry(g.kind.clone()).or_default().gold += 1;
    }
    for p in &pred_spans {
        let entry = report.per_type.entry(p.kind.clone()).or_default();
        entry.predicted += 1;
        if gold_spans
            .binary_search_by(|g| (g.start, g.end).cmp(&(p.start, p.end)))
            .is_ok_and(|k| gold_spans[k].kind == p.kind)
        {
            entry.correct += 1;
        }
    }
    for c in report.per_type.values() {
        report.overall.add(*c);
    }
    Ok(report)
}

/// Scores a whole document given as tag sequences per sentence.
pub fn score_documents(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<ScoreReport> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            sentence: gold.len().min(pred.len()) as u64,
            token: 0,
            detail: format!(
                "gold has {} sentences, prediction {}",
                gold.len(),
                pred.len()
            ),
        });
    }
    let mut total = ScoreReport::default();
    for (s, (g, p)) in gold.iter().zip(pred).enumerate() {
        let r = score_tags(g, p).map_err(|e| match e {
            Error::Alignment { token, detail, .. } => Error::Alignment {
                sentence: s as u64,
                token,
                detail,
            },
            other => other,
        })?;
        total.merge(&r);
    }
    Ok(total)
}

/// Scores predicted against gold datasets over identical token streams.
pub fn score(pred: &Dataset, gold: &Dataset) -> Result<ScoreReport> {
    if pred.len() != gold.len() {
        return Err(Error::Alignment {
            sentence: pred.len().min(gold.len()) as u64,
            token: 0,
            detail: format!(
                "gold has {} sentences, prediction {}",
                gold.len(),
                pred.len()
            ),
        });
    }
    let mut total = ScoreReport::default();
    for ((gs, ga), (ps, pa)) in gold.iter().zip(pred.iter()) {
        if let Some(pos) =
            (0..gs.len().max(ps.len())).find(|&k| gs.tokens().get(k) != ps.tokens().get(k))
        {
            return Err(Error::Alignment {
                sentence: gs.id(),
                token: pos,
                detail: format!(
                    "gold token {:?} vs predicted {:?}",
                    gs.tokens().get(pos),
                    ps.tokens().get(pos)
                ),
            });
        }
        let g = sentence_tags(gs, ga, gold);
        let p = sentence_tags(ps, pa, pred);
        total.merge(&score_tags(&g, &p)?);
    }
    Ok(total)
}

/// BIO tags of one annotated sentence.
pub fn sentence_tags(sentence: &Sentence, spans: &[GoldSpan], dataset: &Dataset) -> Vec<Tag> {
    let labels = dataset.label_set();
    let mut tags = alloc::vec![Tag::Outside; sentence.len()];
    for span in spans {
        let kind = labels.name(span.label);
        tags[span.start] = Tag::Begin(kind.into());
        for t in &mut tags[span.start + 1..=span.end] {
            *t = Tag::Inside(kind.into());
        }
    }
    tags
}

/// `token<TAB>gold<TAB>pred` lines with blank lines between sentences.
pub fn triple_bio(gold: &Dataset, pred: &Dataset) -> Result<String> {
    let mut out = String::new();
    for (k, ((gs, ga), (ps, pa))) in gold.iter().zip(pred.iter()).enumerate() {
        if gs.tokens() != ps.tokens() {
            return Err(Error::Alignment {
                sentence: gs.id(),
                token: 0,
                detail: "token streams differ".into(),
            });
        }
        if k > 0 {
            out.push('\n');
        }
        let g = sentence_tags(gs, ga, gold);
        let p = sentence_tags(ps, pa, pred);
        for ((tok, gt), pt) in gs.tokens().iter().zip(&g).zip(&p) {
            out.push_str(&format!("{tok}\t{gt}\t{pt}\n"));
        }
    }
    Ok(out)
}

/// One projected representation with its span and label.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationRecord {
    pub sentence_id: u64,
    pub start: usize,
    pub end: usize,
    pub label: LabelId,
    pub rep: Vec<f64>,
}

/// Representations of every gold span and every sampled negative.
pub fn representation_records(
    model: &SpanModel,
    dataset: &Dataset,
    neg_ratio: f64,
    max_span_len: usize,
    seed: u64,
) -> Result<Vec<RepresentationRecord>> {
    let dataset = dataset.relabel(&model.labels)?;
    let instances = reference_instances(&dataset, neg_ratio, max_span_len, seed);
    let reps = model.instance_reps(&dataset, &instances)?;
    Ok(instances
        .into_iter()
        .zip(reps)
        .map(|(i, r)| {
            let mut rep = r.into_vec();
            crate::math::round_to_f32(&mut rep);
            RepresentationRecord {
                sentence_id: i.sentence_id,
                start: i.start,
                end: i.end,
                label: i.label,
                rep,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tags(s: &str) -> Vec<Tag> {
        s.split_whitespace()
            .map(|t| Tag::parse(t).unwrap())
            .collect()
    }

    fn pred(start: usize, end: usize, score: f64) -> Prediction {
        Prediction {
            start,
            end,
            label: LabelId(1),
            score,
        }
    }

    #[test]
    fn higher_score_wins_overlap() {
        let out = resolve_overlaps(vec![pred(1, 2, 0.8), pred(0, 1, 0.9)]);
        assert_eq!(out, vec![pred(0, 1, 0.9)]);
    }

    #[test]
    fn ties_break_by_position() {
        let out = resolve_overlaps(vec![pred(1, 2, 0.5), pred(0, 1, 0.5), pred(3, 3, 0.1)]);
        assert_eq!(out, vec![pred(0, 1, 0.5), pred(3, 3, 0.1)]);
    }

    #[test]
    fn identical_documents_score_100() {
        let t = tags("B-PER I-PER O B-LOC");
        let r = score_tags(&t, &t).unwrap();
        assert_eq!(format!("{:.2}", r.f1()), "100.00");
        assert_eq!(format!("{:.2}", r.precision()), "100.00");
    }

    #[test]
    fn boundary_error_is_not_correct() {
        let r = score_tags(&tags("B-A O"), &tags("B-A I-A")).unwrap();
        assert_eq!(
            r.overall,
            PhraseCounts {
                gold: 1,
                predicted: 1,
                correct: 0
            }
        );
    }

    #[test]
    fn hand_computed_scores() {
        let gold = tags("B-A O B-B O B-A");
        let pred = tags("B-A O O O B-B");
        let r = score_tags(&gold, &pred).unwrap();
        assert_eq!(
            r.overall,
            PhraseCounts {
                gold: 3,
                predicted: 2,
                correct: 1
            }
        );
        assert_eq!(format!("{:.2}", r.precision()), "50.00");
        assert_eq!(format!("{:.2}", r.recall()), "33.33");
        assert_eq!(format!("{:.2}", r.f1()), "40.00");
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let r = score_tags(&tags("B-A O"), &tags("O O")).unwrap();
        assert_eq!(r.f1(), 0.0);
        assert_eq!(r.precision(), 0.0);
    }

    #[test]
    fn length_mismatch_is_alignment_error() {
        assert!(matches!(
            score_tags(&tags("O"), &tags("O O")),
            Err(Error::Alignment { .. })
        ));
    }
}
