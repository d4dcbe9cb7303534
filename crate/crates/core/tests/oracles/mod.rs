//! Independent reference implementations used as test oracles. None of them
//! call into the library's numeric code.

#![allow(dead_code)]

use std::collections::BTreeMap;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Double loop over ordered (anchor, positive) pairs with a naive
/// denominator over the anchor's negatives.
pub fn scl_loss(reps: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let n = reps.len();
    let mut loss = 0.0;
    for a in 0..n {
        let n_l = labels.iter().filter(|&&l| l == labels[a]).count();
        if n_l < 2 {
            continue;
        }
        let mut denom = 0.0;
        let mut any_negative = false;
        for m in 0..n {
            if labels[m] != labels[a] {
                denom += (cosine(&reps[a], &reps[m]) / tau).exp();
                any_negative = true;
            }
        }
        if !any_negative {
            continue;
        }
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let f = (cosine(&reps[a], &reps[p]) / tau).exp() / denom;
            loss -= f.ln() / (n_l - 1) as f64;
        }
    }
    loss
}

/// Per-label means accumulated in a fresh pass.
pub fn centroids(reps: &[Vec<f64>], labels: &[usize], num_labels: usize) -> Vec<Option<Vec<f64>>> {
    (0..num_labels)
        .map(|l| {
            let members: Vec<&Vec<f64>> = reps
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y == l)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                return None;
            }
            let dim = members[0].len();
            Some(
                (0..dim)
                    .map(|k| members.iter().map(|r| r[k]).sum::<f64>() / members.len() as f64)
                    .collect(),
            )
        })
        .collect()
}

/// Phrase counts per type.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub gold: u64,
    pub found: u64,
    pub correct: u64,
}

fn split_tag(t: &str) -> (&str, &str) {
    match t.split_once('-') {
        Some((prefix, kind)) => (prefix, kind),
        None => (t, ""),
    }
}

fn end_of_chunk(prev: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    matches!(
        (prev, tag),
        ("B", "B") | ("B", "O") | ("I", "B") | ("I", "O")
    ) || prev == "E"
        || prev == "S"
        || matches!((prev, tag), ("B", "S") | ("I", "S"))
        || (prev != "O" && prev != "." && prev_type != ty)
}

fn start_of_chunk(prev: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    tag == "B"
        || tag == "S"
        || matches!(
            (prev, tag),
            ("E", "E") | ("E", "I") | ("S", "E") | ("S", "I") | ("O", "E") | ("O", "I")
        )
        || (tag != "O" && tag != "." && prev_type != ty)
}

/// The conlleval token-stream state machine. Sentences are separated by a
/// boundary token that resets both streams to `O`.
pub fn conlleval(sentences: &[(Vec<&str>, Vec<&str>)]) -> (Counts, BTreeMap<String, Counts>) {
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    let mut stream: Vec<(&str, &str)> = Vec::new();
    for (gold, pred) in sentences {
        stream.extend(gold.iter().copied().zip(pred.iter().copied()));
        stream.push(("O", "O"));
    }
    let (mut last_c, mut last_ct, mut last_g, mut last_gt) = ("O", "", "O", "");
    let mut in_correct = false;
    for (c_tag, g_tag) in stream {
        let (c, ct) = split_tag(c_tag);
        let (g, gt) = split_tag(g_tag);
        let end_c = end_of_chunk(last_c, c, last_ct, ct);
        let end_g = end_of_chunk(last_g, g, last_gt, gt);
        let start_c = start_of_chunk(last_c, c, last_ct, ct);
        let start_g = start_of_chunk(last_g, g, last_gt, gt);
        if in_correct {
            if end_c && end_g && last_gt == last_ct {
                in_correct = false;
                per_type.entry(last_ct.to_string()).or_default().correct += 1;
            } else if end_c != end_g || gt != ct {
                in_correct = false;
            }
        }
        if start_c && start_g && gt == ct {
            in_correct = true;
        }
        if start_c {
            per_type.entry(ct.to_string()).or_default().gold += 1;
        }
        if start_g {
            per_type.entry(gt.to_string()).or_default().found += 1;
        }
        (last_c, last_ct, last_g, last_gt) = (c, ct, g, gt);
    }
    if in_correct {
        per_type.entry(last_ct.to_string()).or_default().correct += 1;
    }
    let overall = per_type.values().fold(Counts::default(), |acc, c| Counts {
        gold: acc.gold + c.gold,
        found: acc.found + c.found,
        correct: acc.correct + c.correct,
    });
    (overall, per_type)
}

/// Precision, recall and FB1 in percent with the original script's rule
/// that an empty denominator yields 0.
pub fn prf(c: Counts) -> (f64, f64, f64) {
    let p = if c.found > 0 {
        100.0 * c.correct as f64 / c.found as f64
    } else {
        0.0
    };
    let r = if c.gold > 0 {
        100.0 * c.correct as f64 / c.gold as f64
    } else {
        0.0
    };
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f)
}

pub struct GoldenCase {
    pub name: String,
    pub gold: Vec<Vec<String>>,
    pub pred: Vec<Vec<String>>,
    pub counts: Counts,
    pub formatted: [String; 3],
}

fn sentences(field: &str) -> Vec<Vec<String>> {
    field
        .split('|')
        .map(|s| s.split_whitespace().map(String::from).collect())
        .collect()
}

pub fn golden_cases() -> Vec<GoldenCase> {
    include_str!("../data/conlleval_golden.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            GoldenCase {
                name: f[0].into(),
                gold: sentences(f[1]),
                pred: sentences(f[2]),
                counts: Counts {
                    gold: f[3].parse().unwrap(),
                    found: f[4].parse().unwrap(),
                    correct: f[5].parse().unwrap(),
                },
                formatted: [f[6].into(), f[7].into(), f[8].into()],
            }
        })
        .collect()
}

/// True when no two `(start, end)` ranges share a token.
pub fn pairwise_disjoint(spans: &[(usize, usize)]) -> bool {
    for (k, a) in spans.iter().enumerate() {
        for b in &spans[k + 1..] {
            if a.0 <= b.1 && b.0 <= a.1 {
                return false;
            }
        }
    }
    true
}
