//! Entity dictionaries, greedy longest-match distant supervision and random
//! entity dropping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Dataset, GoldSpan, LabelId, LabelSet, Provenance, Sentence};
use crate::rng;
use crate::Result;

/// A surface form that was seen with a second label and rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub surface: Vec<String>,
    pub kept: String,
    pub rejected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDictionary {
    label_set: LabelSet,
    entries: BTreeMap<Vec<String>, LabelId>,
    max_len: usize,
    collisions: Vec<Collision>,
}

impl EntityDictionary {
    /// Builds from `(surface tokens, label name)` pairs in order. Empty
    /// surfaces and `O` labels are skipped; the first label seen for a
    /// surface wins and later conflicting ones are recorded as collisions.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<String>, S)>,
        S: AsRef<str>,
    {
        let pairs: Vec<(Vec<String>, S)> = entries
            .into_iter()
            .filter(|(surface, label)| !surface.is_empty() && label.as_ref() != super::NON_ENTITY)
            .collect();
        let label_set = LabelSet::from_entity_types(pairs.iter().map(|(_, l)| l.as_ref()))?;
        let mut dict = Self {
            label_set,
            entries: BTreeMap::new(),
            max_len: 0,
            collisions: Vec::new(),
        };
        for (surface, label) in pairs {
            let id = dict
                .label_set
                .id(label.as_ref())
                .expect("label collected above");
            dict.insert(surface, id);
        }
        Ok(dict)
    }

    fn insert(&mut self, surface: Vec<String>, label: LabelId) {
        match self.entries.get(&surface) {
            Some(&kept) if kept == label => {}
            Some(&kept) => self.collisions.push(Collision {
                surface,
                kept: self.label_set.name(kept).into(),
                rejected: self.label_set.name(label).into(),
            }),
            None => {
                self.max_len = self.max_len.max(surface.len());
                self.entries.insert(surface, label);
            }
        }
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    pub fn get(&self, surface: &[String]) -> Option<LabelId> {
        self.entries.get(surface).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &str)> {
        self.entries
            .iter()
            .map(|(k, &v)| (k.as_slice(), self.label_set.name(v)))
    }

    /// Longest entry length in tokens.
    pub fn max_len(&self) -> usize {
        self.max_len
    }
}

/// One entry per distinct gold-span surface form, in document order.
pub fn build_entity_dictionary(dataset: &Dataset) -> Result<EntityDictionary> {
    let labels = dataset.label_set();
    EntityDictionary::from_entries(dataset.iter().flat_map(|(sentence, spans)| {
        spans.iter().map(move |g| {
            (
                sentence.tokens()[g.start..=g.end].to_vec(),
                labels.name(g.label),
            )
        })
    }))
}

/// Greedy left-to-right longest exact match. Unmatched sentences are kept.
pub fn distant_supervise(raw: &[Sentence], dict: &EntityDictionary) -> Result<Dataset> {
    let mut annotations = Vec::with_capacity(raw.len());
    for sentence in raw {
        let tokens = sentence.tokens();
        let mut spans = Vec::new();
        let mut cursor = 0;
        while cursor < tokens.len() {
            let longest = dict.max_len().min(tokens.len() - cursor);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| dict.get(&tokens[cursor..cursor + len]).map(|l| (len, l)));
            match hit {
                Some((len, label)) => {
                    spans.push(GoldSpan::new(cursor, cursor + len - 1, label));
                    cursor += len;
                }
                None => cursor += 1,
            }
        }
        annotations.push(spans);
    }
    Dataset::new(
        raw.to_vec(),
        annotations,
        dict.label_set().clone(),
        Provenance::DistantlySupervised,
    )
}

/// Drops each gold span independently with probability `drop_prob`.
pub fn corrupt_by_rate(dataset: &Dataset, drop_prob: f64, seed: u64) -> Result<Dataset> {
    let mut rng = rng::stream(seed, "corrupt-rate", &[]);
    let annotations = dataset
        .annotations()
        .iter()
        .map(|spans| {
            spans
                .iter()
                .filter(|_| rng.random::<f64>() >= drop_prob)
                .copied()
                .collect()
        })
        .collect();
    Dataset::new(
        dataset.sentences().to_vec(),
        annotations,
        dataset.label_set().clone(),
        Provenance::Corrupted,
    )
}

/// Removes each distinct entity surface form with probability `drop_prob`
/// and unlabels every mention of the removed forms, as an incomplete
/// dictionary would.
pub fn corrupt_by_surface(dataset: &Dataset, drop_prob: f64, seed: u64) -> Result<Dataset> {
    let labels = dataset.label_set();
    let surfaces: BTreeSet<(&[String], &str)> = dataset
        .iter()
        .flat_map(|(s, spans)| {
            spans
                .iter()
                .map(move |g| (&s.tokens()[g.start..=g.end], labels.name(g.label)))
        })
        .collect();
    let mut rng = rng::stream(seed, "corrupt-surface", &[]);
    let dropped: BTreeSet<(&[String], &str)> = surfaces
        .into_iter()
        .filter(|_| rng.random::<f64>() < drop_prob)
        .collect();
    let annotations = dataset
        .iter()
        .map(|(s, spans)| {
            spans
                .iter()
                .filter(|g| {
                    !dropped.contains(&(&s.tokens()[g.start..=g.end], labels.name(g.label)))
                })
                .copied()
                .collect()
        })
        .collect();
    Dataset::new(
        dataset.sentences().to_vec(),
        annotations,
        labels.clone(),
        Provenance::Corrupted,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_bio;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn dictionary_from_dataset() {
        let ds = parse_bio("in\tO\nNew\tB-LOC\nYork\tI-LOC\n")
            .unwrap()
            .dataset;
        let dict = build_entity_dictionary(&ds).unwrap();
        assert_eq!(dict.len(), 1);
        assert_eq!(
            dict.iter().collect::<Vec<_>>(),
            vec![(toks("New York").as_slice(), "LOC")]
        );
    }

    #[test]
    fn collision_keeps_first_label() {
        let ds = parse_bio("Jordan\tB-PER\n\nJordan\tB-LOC\n\nJordan\tB-PER\n")
            .unwrap()
            .dataset;
        let dict = build_entity_dictionary(&ds).unwrap();
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.iter().next().unwrap().1, "PER");
        assert_eq!(
            dict.collisions(),
            &[Collision {
                surface: toks("Jordan"),
                kept: "PER".into(),
                rejected: "LOC".into()
            }]
        );
    }

    #[test]
    fn empty_annotations_give_empty_dictionary() {
        let ds = parse_bio("a\tO\n").unwrap().dataset;
        assert!(build_entity_dictionary(&ds).unwrap().is_empty());
    }

    #[test]
    fn exact_matches_everywhere() {
        let dict = EntityDictionary::from_entries([(toks("NBA"), "ORG")]).unwrap();
        let raw = [Sentence::from_text(0, "NBA is in NBA").unwrap()];
        let ds = distant_supervise(&raw, &dict).unwrap();
        let org = ds.label_set().id("ORG").unwrap();
        assert_eq!(
            ds.annotations()[0],
            vec![GoldSpan::new(0, 0, org), GoldSpan::new(3, 3, org)]
        );
        assert_eq!(ds.provenance(), Provenance::DistantlySupervised);
    }

    #[test]
    fn longest_match_wins() {
        let dict =
            EntityDictionary::from_entries([(toks("New York"), "LOC"), (toks("York"), "LOC")])
                .unwrap();
        let raw = [Sentence::from_text(0, "New York").unwrap()];
        let ds = distant_supervise(&raw, &dict).unwrap();
        assert_eq!(ds.annotations()[0], vec![GoldSpan::new(0, 1, LabelId(1))]);
    }

    #[test]
    fn matching_is_case_sensitive_and_keeps_unmatched() {
        let dict = EntityDictionary::from_entries([(toks("NBA"), "ORG")]).unwrap();
        let raw = [
            Sentence::from_text(0, "nba games").unwrap(),
            Sentence::from_text(1, "NBA games").unwrap(),
        ];
        let ds = distant_supervise(&raw, &dict).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.annotations()[0].is_empty());
        assert_eq!(ds.annotations()[1].len(), 1);
    }

    #[test]
    fn corruption_extremes() {
        let ds = parse_bio("a\tB-X\nb\tO\nc\tB-Y\n\nd\tB-X\n")
            .unwrap()
            .dataset;
        let kept = corrupt_by_rate(&ds, 0.0, 3).unwrap();
        assert_eq!(kept.annotations(), ds.annotations());
        assert_eq!(kept.sentences(), ds.sentences());
        assert_eq!(kept.provenance(), Provenance::Corrupted);
        assert_eq!(corrupt_by_rate(&ds, 1.0, 3).unwrap().num_spans(), 0);
        assert_eq!(
            corrupt_by_rate(&ds, 0.5, 9).unwrap(),
            corrupt_by_rate(&ds, 0.5, 9).unwrap()
        );
    }
}
