//! Span enumeration and negative sampling.

use alloc::vec::Vec;

use rand::SeedableRng;

use super::{GoldSpan, LabelSet, Sentence, SpanInstance};
use crate::rng::Rng;

/// All `(i, j)` with `i <= j < n` and `j - i + 1 <= max_len`, lexicographic.
pub fn enumerate_spans(n: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n.min(i + max_len) {
            out.push((i, j));
        }
    }
    out
}

/// `⌈ratio · n⌉`, with a small tolerance so that products such as
/// `0.35 * 20` are not pushed up by representation error.
pub fn negative_count(n: usize, ratio: f64) -> usize {
    let raw = ratio * n as f64;
    libm::ceil(raw - 1e-9).max(0.0) as usize
}

/// Uniformly samples `min(⌈ratio·n⌉, pool)` non-entity spans without
/// replacement from the spans that are not gold boundaries. The result is
/// sorted by `(start, end)`.
pub fn negative_sample(
    sentence: &Sentence,
    gold: &[GoldSpan],
    labels: &LabelSet,
    ratio: f64,
    max_len: usize,
    seed: u64,
) -> Vec<SpanInstance> {
    let mut rng = Rng::seed_from_u64(seed);
    negative_sample_with(sentence, gold, labels, ratio, max_len, &mut rng)
}

pub fn negative_sample_with(
    sentence: &Sentence,
    gold: &[GoldSpan],
    labels: &LabelSet,
    ratio: f64,
    max_len: usize,
    rng: &mut Rng,
) -> Vec<SpanInstance> {
    let pool: Vec<(usize, usize)> = enumerate_spans(sentence.len(), max_len)
        .into_iter()
        .filter(|&(i, j)| !gold.iter().any(|g| g.start == i && g.end == j))
        .collect();
    let k = negative_count(sentence.len(), ratio).min(pool.len());
    if k == 0 {
        return Vec::new();
    }
    let mut picked: Vec<(usize, usize)> = rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|idx| pool[idx])
        .collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|(start, end)| SpanInstance {
            sentence_id: sentence.id(),
            start,
            end,
            label: labels.non_entity(),
        })
        .collect()
}
