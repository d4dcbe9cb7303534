//! Corpus data model and construction of (noisy) training sets.

mod bio;
mod distant;
mod sampling;

pub use bio::{bio_from_spans, parse_bio, spans_from_bio, BioWarning, ParsedBio, Tag, TaggedSpan};
pub use distant::{
    build_entity_dictionary, corrupt_by_rate, corrupt_by_surface, distant_supervise, Collision,
    EntityDictionary,
};
pub use sampling::{enumerate_spans, negative_count, negative_sample, negative_sample_with};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

pub const NON_ENTITY: &str = "O";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub usize);

/// Ordered label names with one distinguished non-entity label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    non_entity: LabelId,
}

impl LabelSet {
    pub fn new(labels: Vec<String>, non_entity: usize) -> Result<Self> {
        if non_entity >= labels.len() {
            return Err(Error::Contract(format!(
                "non-entity index {non_entity} out of range for {} labels",
                labels.len()
            )));
        }
        let unique: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if unique.len() != labels.len() {
            return Err(Error::Contract("duplicate label names".into()));
        }
        if labels.iter().any(|l| l.is_empty()) {
            return Err(Error::Contract("empty label name".into()));
        }
        Ok(Self {
            labels,
            non_entity: LabelId(non_entity),
        })
    }

    /// `"O"` at index 0 followed by the entity types in sorted order.
    pub fn from_entity_types<'a>(types: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let sorted: BTreeSet<&str> = types.into_iter().filter(|t| *t != NON_ENTITY).collect();
        let mut labels = Vec::with_capacity(sorted.len() + 1);
        labels.push(NON_ENTITY.to_string());
        labels.extend(sorted.into_iter().map(String::from));
        Self::new(labels, 0)
    }

    pub fn union(&self, other: &LabelSet) -> Result<Self> {
        Self::from_entity_types(self.entity_names().chain(other.entity_names()))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn non_entity(&self) -> LabelId {
        self.non_entity
    }

    #[inline]
    pub fn is_entity(&self, id: LabelId) -> bool {
        id != self.non_entity && id.0 < self.labels.len()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == name).map(LabelId)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.labels.len())
            .map(LabelId)
            .filter(move |&id| id != self.non_entity)
    }

    pub fn entity_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.entity_ids().map(move |id| self.name(id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    id: u64,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: u64, tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Contract(format!("sentence {id} has no tokens")));
        }
        if tokens.iter().any(String::is_empty) {
            return Err(Error::Contract(format!("sentence {id} has an empty token")));
        }
        Ok(Self { id, tokens })
    }

    /// Splits on ASCII/Unicode whitespace.
    pub fn from_text(id: u64, text: &str) -> Result<Self> {
        Self::new(id, text.split_whitespace().map(String::from).collect())
    }

    #[inline]
    pub fn id(&self) -> u64 {
        self.id
    }

    #[inline]
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The same tokens under another id.
    pub fn with_id(&self, id: u64) -> Self {
        Self {
            id,
            tokens: self.tokens.clone(),
        }
    }
}

/// An annotated entity: inclusive token range plus entity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoldSpan {
    pub start: usize,
    pub end: usize,
    pub label: LabelId,
}

impl GoldSpan {
    pub fn new(start: usize, end: usize, label: LabelId) -> Self {
        Self { start, end, label }
    }

    #[inline]
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start <= end && start <= self.end
    }
}

/// One classification unit: a span of a sentence with its training label
/// (an entity label, or the non-entity label for sampled negatives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanInstance {
    pub sentence_id: u64,
    pub start: usize,
    pub end: usize,
    pub label: LabelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    WellAnnotated,
    DistantlySupervised,
    Corrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sentences: Vec<Sentence>,
    annotations: Vec<Vec<GoldSpan>>,
    label_set: LabelSet,
    provenance: Provenance,
}

impl Dataset {
    /// Validates span indices, entity labels, non-overlap and unique
    /// sentence ids. Spans are stored sorted by start.
    pub fn new(
        sentences: Vec<Sentence>,
        mut annotations: Vec<Vec<GoldSpan>>,
        label_set: LabelSet,
        provenance: Provenance,
    ) -> Result<Self> {
        if sentences.len() != annotations.len() {
            return Err(Error::Contract(format!(
                "{} sentences but {} annotation lists",
                sentences.len(),
                annotations.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for (sentence, spans) in sentences.iter().zip(annotations.iter_mut()) {
            if !ids.insert(sentence.id) {
                return Err(Error::Contract(format!(
                    "duplicate sentence id {}",
                    sentence.id
                )));
            }
            spans.sort();
            for (k, span) in spans.iter().enumerate() {
                if span.start > span.end || span.end >= sentence.len() {
                    return Err(Error::Contract(format!(
                        "span ({}, {}) out of range in sentence {} of length {}",
                        span.start,
                        span.end,
                        sentence.id,
                        sentence.len()
                    )));
                }
                if !label_set.is_entity(span.label) {
                    return Err(Error::Contract(format!(
                        "span ({}, {}) in sentence {} has a non-entity label",
                        span.start, span.end, sentence.id
                    )));
                }
                if k > 0 && spans[k - 1].end >= span.start {
                    return Err(Error::Contract(format!(
                        "overlapping spans in sentence {}",
                        sentence.id
                    )));
                }
            }
        }
        Ok(Self {
            sentences,
            annotations,
            label_set,
            provenance,
        })
    }

    pub fn empty(label_set: LabelSet, provenance: Provenance) -> Self {
        Self {
            sentences: Vec::new(),
            annotations: Vec::new(),
            label_set,
            provenance,
        }
    }

    #[inline]
    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    #[inline]
    pub fn annotations(&self) -> &[Vec<GoldSpan>] {
        &self.annotations
    }

    #[inline]
    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    #[inline]
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sentence, &[GoldSpan])> {
        self.sentences
            .iter()
            .zip(self.annotations.iter().map(Vec::as_slice))
    }

    pub fn num_spans(&self) -> usize {
        self.annotations.iter().map(Vec::len).sum()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Re-expresses every span label in `label_set` (matched by name).
    pub fn relabel(&self, label_set: &LabelSet) -> Result<Self> {
        let mut map = Vec::with_capacity(self.label_set.len());
        for name in self.label_set.names() {
            map.push(label_set.id(name));
        }
        let annotations = self
            .annotations
            .iter()
            .map(|spans| {
                spans
                    .iter()
                    .map(|s| match map[s.label.0] {
                        Some(id) => Ok(GoldSpan::new(s.start, s.end, id)),
                        None => Err(Error::Contract(format!(
                            "label {} missing from target label set",
                            self.label_set.name(s.label)
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            self.sentences.clone(),
            annotations,
            label_set.clone(),
            self.provenance,
        )
    }

    /// Appends `other` after `self`. Labels are unified; `other`'s sentences
    /// are renumbered to follow the largest id in `self`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        let labels = self.label_set.union(&other.label_set)?;
        let a = self.relabel(&labels)?;
        let b = other.relabel(&labels)?;
        let next = a.sentences.iter().map(|s| s.id + 1).max().unwrap_or(0);
        let mut sentences = a.sentences;
        let mut annotations = a.annotations;
        for (k, (s, spans)) in b.sentences.iter().zip(b.annotations).enumerate() {
            sentences.push(s.with_id(next + k as u64));
            annotations.push(spans);
        }
        let provenance = if self.provenance == other.provenance {
            self.provenance
        } else if self.provenance == Provenance::Corrupted
            || other.provenance == Provenance::Corrupted
        {
            Provenance::Corrupted
        } else {
            Provenance::DistantlySupervised
        };
        Dataset::new(sentences, annotations, labels, provenance)
    }

    /// Every gold span as a [`SpanInstance`].
    pub fn gold_instances(&self) -> Vec<SpanInstance> {
        self.iter()
            .flat_map(|(s, spans)| {
                spans.iter().map(move |g| SpanInstance {
                    sentence_id: s.id,
                    start: g.start,
                    end: g.end,
                    label: g.label,
                })
            })
            .collect()
    }

    /// Serializes as `token<TAB>tag` lines with a blank line between sentences.
    pub fn to_bio(&self) -> String {
        let mut out = String::new();
        for (k, (sentence, spans)) in self.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let tagged: Vec<TaggedSpan> = spans
                .iter()
                .map(|g| TaggedSpan::new(g.start, g.end, self.label_set.name(g.label)))
                .collect();
            let tags = bio_from_spans(sentence.len(), &tagged)
                .expect("dataset spans are validated as non-overlapping");
            for (token, tag) in sentence.tokens.iter().zip(&tags) {
                out.push_str(token);
                out.push('\t');
                out.push_str(&tag.to_string());
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels() -> LabelSet {
        LabelSet::from_entity_types(["PER", "LOC"]).unwrap()
    }

    #[test]
    fn label_set_puts_non_entity_first() {
        let ls = labels();
        assert_eq!(ls.names(), &["O", "LOC", "PER"]);
        assert_eq!(ls.non_entity(), LabelId(0));
        assert_eq!(ls.entity_names().collect::<Vec<_>>(), vec!["LOC", "PER"]);
    }

    #[test]
    fn label_set_rejects_duplicates_and_bad_index() {
        assert!(LabelSet::new(vec!["O".into(), "O".into()], 0).is_err());
        assert!(LabelSet::new(vec!["O".into(), "A".into()], 2).is_err());
    }

    #[test]
    fn sentence_rejects_empty_tokens() {
        assert!(Sentence::new(0, vec![]).is_err());
        assert!(Sentence::new(0, vec!["a".into(), "".into()]).is_err());
    }

    #[test]
    fn dataset_validates_spans() {
        let s = Sentence::from_text(0, "a b c").unwrap();
        let ls = labels();
        let per = ls.id("PER").unwrap();
        assert!(Dataset::new(
            vec![s.clone()],
            vec![vec![GoldSpan::new(0, 3, per)]],
            ls.clone(),
            Provenance::WellAnnotated
        )
        .is_err());
        assert!(Dataset::new(
            vec![s.clone()],
            vec![vec![GoldSpan::new(0, 1, per), GoldSpan::new(1, 2, per)]],
            ls.clone(),
            Provenance::WellAnnotated
        )
        .is_err());
        assert!(Dataset::new(
            vec![s.clone()],
            vec![vec![GoldSpan::new(0, 0, ls.non_entity())]],
            ls.clone(),
            Provenance::WellAnnotated
        )
        .is_err());
        assert!(Dataset::new(
            vec![s.clone(), s],
            vec![vec![], vec![]],
            ls,
            Provenance::WellAnnotated
        )
        .is_err());
    }

    #[test]
    fn concat_renumbers_and_unifies_labels() {
        let a = parse_bio("x\tB-PER\n\ny\tO\n").unwrap().dataset;
        let b = parse_bio("z\tB-LOC\n").unwrap().dataset;
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.sentences()[2].id(), 2);
        assert_eq!(c.label_set().names(), &["O", "LOC", "PER"]);
        let loc = c.label_set().id("LOC").unwrap();
        assert_eq!(c.annotations()[2], vec![GoldSpan::new(0, 0, loc)]);
    }
}
