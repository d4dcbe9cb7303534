mod oracles;

use proptest::prelude::*;
use sclrai_core::corpus::{
    bio_from_spans, parse_bio, spans_from_bio, LabelId, Sentence, Tag, TaggedSpan,
};
use sclrai_core::eval::{decode, resolve_overlaps, DecodeOptions, Prediction};
use sclrai_core::model::reference_instances;
use sclrai_core::training::{init_model, Architecture};
use sclrai_core::Diagnostics;

const KINDS: [&str; 3] = ["A", "B", "C"];

/// Non-overlapping spans laid out left to right with random gaps.
fn spans_strategy() -> impl Strategy<Value = (usize, Vec<TaggedSpan>)> {
    prop::collection::vec((0usize..3, 1usize..4, 0usize..3), 0..6).prop_map(|pieces| {
        let mut pos = 0;
        let mut spans = Vec::new();
        for (gap, len, kind) in pieces {
            pos += gap;
            spans.push(TaggedSpan::new(pos, pos + len - 1, KINDS[kind]));
            pos += len;
        }
        (pos.max(1), spans)
    })
}

fn tag_strategy() -> impl Strategy<Value = Vec<Tag>> {
    let tag = prop_oneof![
        Just(Tag::Outside),
        prop::sample::select(KINDS.to_vec()).prop_map(|k| Tag::Begin(k.into())),
        prop::sample::select(KINDS.to_vec()).prop_map(|k| Tag::Inside(k.into())),
    ];
    prop::collection::vec(tag, 1..16)
}

fn candidates_strategy() -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec((0usize..12, 0usize..4, 1usize..4, 0u32..8), 0..20).prop_map(|v| {
        v.into_iter()
            .map(|(start, len, label, score)| Prediction {
                start,
                end: start + len,
                label: LabelId(label),
                score: f64::from(score) / 8.0,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spans_survive_a_bio_round_trip((n, spans) in spans_strategy()) {
        let tags = bio_from_spans(n, &spans).unwrap();
        let (back, orphans) = spans_from_bio(&tags);
        prop_assert_eq!(back, spans);
        prop_assert_eq!(orphans, 0);
    }

    #[test]
    fn tags_are_canonical_after_one_pass(tags in tag_strategy()) {
        let (spans, orphans) = spans_from_bio(&tags);
        let canonical = bio_from_spans(tags.len(), &spans).unwrap();
        prop_assert_eq!(spans_from_bio(&canonical), (spans, 0));
        if orphans == 0 {
            prop_assert_eq!(canonical, tags);
        }
    }

    #[test]
    fn documents_survive_parse_and_print((n, spans) in spans_strategy()) {
        let tags = bio_from_spans(n, &spans).unwrap();
        let text: String = tags.iter().enumerate().map(|(k, t)| format!("w{k}\t{t}\n")).collect();
        let parsed = parse_bio(&text).unwrap();
        prop_assert!(parsed.warnings.is_empty());
        prop_assert_eq!(parsed.dataset.to_bio(), text);
    }

    #[test]
    fn greedy_resolution_is_disjoint_maximal_and_order_free(cands in candidates_strategy(), rot in 0usize..20) {
        let out = resolve_overlaps(cands.clone());
        let ranges: Vec<(usize, usize)> = out.iter().map(|p| (p.start, p.end)).collect();
        prop_assert!(oracles::pairwise_disjoint(&ranges));
        for c in &cands {
            prop_assert!(out.iter().any(|a| a.overlaps(c)));
        }
        let mut rotated = cands.clone();
        if !rotated.is_empty() {
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
        }
        prop_assert_eq!(resolve_overlaps(rotated), out);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decoded_spans_never_overlap(seed in any::<u64>(), words in prop::collection::vec(0usize..6, 1..9)) {
        let ds = parse_bio("a\tB-A\nb\tO\nc\tB-B\nd\tI-B\n\ne\tB-C\nf\tO\n").unwrap().dataset;
        let arch = Architecture { embed_dim: 3, hidden_dim: 4, rep_dim: 5, vocab_min_count: 1 };
        let model = init_model(&ds, arch, seed).unwrap();
        let table = model.centroid_table(&ds, &reference_instances(&ds, 0.5, 4, seed)).unwrap();
        let vocab = ["a", "b", "c", "d", "e", "f"];
        let sentence = Sentence::new(0, words.iter().map(|&w| vocab[w].to_string()).collect()).unwrap();
        let opts = DecodeOptions { table: Some(&table), alpha: 0.5, max_span_len: 4 };
        let preds = decode(&sentence, &model, opts, &mut Diagnostics::default()).unwrap();
        let ranges: Vec<(usize, usize)> = preds.iter().map(|p| (p.start, p.end)).collect();
        prop_assert!(oracles::pairwise_disjoint(&ranges));
        for p in &preds {
            prop_assert!(p.end < sentence.len() && p.end - p.start < 4);
            prop_assert!((0.0..=1.0).contains(&p.score));
            prop_assert!(model.labels.is_entity(p.label));
        }
    }
}
