//! BIO tag sequences and the `token<TAB>tag` document format.
//!
//! Chunking follows conlleval: `B-X` always opens a phrase, and an `I-X` that
//! does not continue a phrase of type `X` opens one as well.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::{Dataset, GoldSpan, LabelSet, Provenance, Sentence, NON_ENTITY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn parse(s: &str) -> Option<Tag> {
        if s == NON_ENTITY {
            return Some(Tag::Outside);
        }
        let (prefix, kind) = s.split_once('-')?;
        if kind.is_empty() || kind == NON_ENTITY {
            return None;
        }
        match prefix {
            "B" => Some(Tag::Begin(kind.into())),
            "I" => Some(Tag::Inside(kind.into())),
            _ => None,
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(k) | Tag::Inside(k) => Some(k),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str(NON_ENTITY),
            Tag::Begin(k) => write!(f, "B-{k}"),
            Tag::Inside(k) => write!(f, "I-{k}"),
        }
    }
}

/// A phrase with its type given by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedSpan {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl TaggedSpan {
    pub fn new(start: usize, end: usize, kind: &str) -> Self {
        Self {
            start,
            end,
            kind: kind.into(),
        }
    }
}

/// Maximal phrases of a tag sequence, sorted by start, plus the number of
/// orphan `I-` tags that had to open a phrase.
pub fn spans_from_bio(tags: &[Tag]) -> (Vec<TaggedSpan>, usize) {
    let mut spans: Vec<TaggedSpan> = Vec::new();
    let mut orphans = 0;
    let mut open: Option<(usize, &str)> = None;
    for (pos, tag) in tags.iter().enumerate() {
        let continues = match (tag, open) {
            (Tag::Inside(k), Some((_, cur))) => k == cur,
            _ => false,
        };
        if continues {
            continue;
        }
        if let Some((start, kind)) = open.take() {
            spans.push(TaggedSpan::new(start, pos - 1, kind));
        }
        match tag {
            Tag::Outside => {}
            Tag::Begin(k) => open = Some((pos, k)),
            Tag::Inside(k) => {
                orphans += 1;
                open = Some((pos, k));
            }
        }
    }
    if let Some((start, kind)) = open {
        spans.push(TaggedSpan::new(start, tags.len() - 1, kind));
    }
    (spans, orphans)
}

pub fn bio_from_spans(n: usize, spans: &[TaggedSpan]) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::Outside; n];
    let mut used = vec![false; n];
    for span in spans {
        if span.start > span.end || span.end >= n {
            return Err(Error::Contract(format!(
                "span ({}, {}) out of range for length {n}",
                span.start, span.end
            )));
        }
        for pos in span.start..=span.end {
            if used[pos] {
                return Err(Error::Contract(format!("overlapping spans at token {pos}")));
            }
            used[pos] = true;
            tags[pos] = if pos == span.start {
                Tag::Begin(span.kind.clone())
            } else {
                Tag::Inside(span.kind.clone())
            };
        }
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBio {
    pub dataset: Dataset,
    pub warnings: Vec<BioWarning>,
}

/// Parses a blank-line separated `token<TAB>tag` document. Sentence ids are
/// assigned 0, 1, 2, ... in document order. Lines are right-trimmed first.
pub fn parse_bio(text: &str) -> Result<ParsedBio> {
    let mut raw: Vec<(Vec<String>, Vec<Tag>, usize)> = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut first_line = 0;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end();
        if line.is_empty() {
            if !tokens.is_empty() {
                raw.push((
                    core::mem::take(&mut tokens),
                    core::mem::take(&mut tags),
                    first_line,
                ));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token".into(),
            });
        }
        let tag = Tag::parse(fields[1]).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("invalid tag {:?}", fields[1]),
        })?;
        if tokens.is_empty() {
            first_line = line_no;
        }
        tokens.push(String::from(fields[0]));
        tags.push(tag);
    }
    if !tokens.is_empty() {
        raw.push((tokens, tags, first_line));
    }

    let kinds: BTreeSet<&str> = raw
        .iter()
        .flat_map(|(_, tags, _)| tags.iter().filter_map(Tag::kind))
        .collect();
    let label_set = LabelSet::from_entity_types(kinds.iter().copied())?;

    let mut warnings = Vec::new();
    let mut sentences = Vec::with_capacity(raw.len());
    let mut annotations = Vec::with_capacity(raw.len());
    for (id, (tokens, tags, first_line)) in raw.iter().enumerate() {
        let mut open_kind: Option<&str> = None;
        for (pos, tag) in tags.iter().enumerate() {
            if let Tag::Inside(k) = tag {
                if open_kind != Some(k.as_str()) {
                    warnings.push(BioWarning {
                        line: first_line + pos,
                        message: format!(
                            "I-{k} does not continue a {k} phrase; treated as phrase start"
                        ),
                    });
                }
            }
            open_kind = tag.kind();
        }
        let (spans, _) = spans_from_bio(tags);
        annotations.push(
            spans
                .iter()
                .map(|s| {
                    let label = label_set.id(&s.kind).expect("kind collected above");
                    GoldSpan::new(s.start, s.end, label)
                })
                .collect(),
        );
        sentences.push(Sentence::new(id as u64, tokens.clone())?);
    }
    let dataset = Dataset::new(sentences, annotations, label_set, Provenance::WellAnnotated)?;
    Ok(ParsedBio { dataset, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelId;

    fn tags(s: &[&str]) -> Vec<Tag> {
        s.iter().map(|t| Tag::parse(t).unwrap()).collect()
    }

    #[test]
    fn single_token_span() {
        let parsed = parse_bio("EU\tB-ORG\nrejects\tO\n").unwrap();
        let ds = parsed.dataset;
        assert_eq!(ds.len(), 1);
        let org = ds.label_set().id("ORG").unwrap();
        assert_eq!(ds.annotations()[0], vec![GoldSpan::new(0, 0, org)]);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn continuation_span() {
        let ds = parse_bio("John\tB-PER\nSmith\tI-PER\nsaid\tO\n")
            .unwrap()
            .dataset;
        assert_eq!(ds.annotations()[0], vec![GoldSpan::new(0, 1, LabelId(1))]);
    }

    #[test]
    fn orphan_inside_is_lenient() {
        let parsed = parse_bio("x\tI-PER\ny\tI-PER\n").unwrap();
        assert_eq!(
            parsed.dataset.annotations()[0],
            vec![GoldSpan::new(0, 1, LabelId(1))]
        );
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].line, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_bio("a\tO\n\nb\tO\textra\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                message: "expected 2 tab-separated fields, found 3".into()
            }
        );
        assert!(matches!(
            parse_bio("a\tX-PER\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_bio("a\tB-\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn span_extraction_cases() {
        assert_eq!(spans_from_bio(&tags(&["O", "O", "O"])).0, vec![]);
        assert_eq!(
            spans_from_bio(&tags(&["B-A", "I-A", "O", "B-B"])).0,
            vec![TaggedSpan::new(0, 1, "A"), TaggedSpan::new(3, 3, "B")]
        );
        assert_eq!(
            spans_from_bio(&tags(&["B-A", "B-A"])).0,
            vec![TaggedSpan::new(0, 0, "A"), TaggedSpan::new(1, 1, "A")]
        );
        // type switch inside a phrase opens a new one
        let (spans, orphans) = spans_from_bio(&tags(&["B-A", "I-B", "I-B"]));
        assert_eq!(
            spans,
            vec![TaggedSpan::new(0, 0, "A"), TaggedSpan::new(1, 2, "B")]
        );
        assert_eq!(orphans, 1);
    }

    #[test]
    fn emission_cases() {
        assert_eq!(bio_from_spans(3, &[]).unwrap(), tags(&["O", "O", "O"]));
        assert_eq!(
            bio_from_spans(4, &[TaggedSpan::new(0, 1, "A"), TaggedSpan::new(3, 3, "B")]).unwrap(),
            tags(&["B-A", "I-A", "O", "B-B"])
        );
        assert!(
            bio_from_spans(4, &[TaggedSpan::new(0, 1, "A"), TaggedSpan::new(1, 2, "B")]).is_err()
        );
        assert!(bio_from_spans(2, &[TaggedSpan::new(1, 2, "A")]).is_err());
    }

    #[test]
    fn document_round_trip() {
        let text =
            "EU\tB-ORG\nrejects\tO\nGerman\tB-MISC\ncall\tO\n\nPeter\tB-PER\nBlackburn\tI-PER\n";
        let ds = parse_bio(text).unwrap().dataset;
        assert_eq!(ds.to_bio(), text);
    }

    #[test]
    fn blank_runs_and_crlf() {
        let ds = parse_bio("\n\na\tB-X\r\n\n\n\nb\tO\r\n").unwrap().dataset;
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sentences()[1].id(), 1);
    }
}
