mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sclrai_core::contrastive::{combined_loss, cosine, scl_loss, scl_pair_term, ContrastiveBatch};
use sclrai_core::corpus::LabelId;
use sclrai_core::Diagnostics;

fn library_loss(reps: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let batch = ContrastiveBatch::new(
        reps.iter().map(Vec::as_slice).collect(),
        labels.iter().map(|&l| LabelId(l)).collect(),
    )
    .unwrap();
    scl_loss(&batch, tau, &mut Diagnostics::default())
}

fn random_batch(r: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = r.random_range(1..=8);
    let num_labels = r.random_range(1..=4);
    let dim = r.random_range(2..=6);
    let reps = (0..n)
        .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..n).map(|_| r.random_range(0..num_labels)).collect();
    (reps, labels)
}

#[test]
fn two_hundred_random_batches_match_the_double_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut singleton_classes = 0;
    let mut single_label_batches = 0;
    for _ in 0..200 {
        let (reps, labels) = random_batch(&mut r);
        for tau in [0.1, 0.5, 1.0] {
            let a = library_loss(&reps, &labels, tau);
            let b = oracles::scl_loss(&reps, &labels, tau);
            assert!((a - b).abs() <= 1e-9, "{a} vs {b} for {labels:?}");
        }
        if labels
            .iter()
            .any(|l| labels.iter().filter(|m| *m == l).count() == 1)
        {
            singleton_classes += 1;
        }
        if labels.iter().all(|&l| l == labels[0]) {
            single_label_batches += 1;
        }
    }
    assert!(singleton_classes > 0 && single_label_batches > 0);
}

#[test]
fn degenerate_batches_have_zero_loss() {
    let reps = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    assert_eq!(library_loss(&reps, &[0, 0, 0], 0.1), 0.0);
    assert_eq!(library_loss(&reps, &[0, 1, 2], 0.1), 0.0);
    assert_eq!(library_loss(&reps[..1], &[0], 0.1), 0.0);
}

#[test]
fn hand_evaluated_pair_terms() {
    let mut d = Diagnostics::default();
    let f = scl_pair_term(&[1.0, 0.0], &[2.0, 0.0], &[&[0.0, 1.0]], 1.0, &mut d).unwrap();
    assert!((f - 1.0).abs() < 1e-15);
    let negs: [&[f64]; 3] = [&[1.0, 0.0], &[3.0, 0.0], &[0.5, 0.0]];
    let f = scl_pair_term(&[1.0, 0.0], &[1.0, 0.0], &negs, 1.0, &mut d).unwrap();
    assert!((f + 3f64.ln()).abs() < 1e-12);
    assert!(scl_pair_term(&[1.0, 0.0], &[1.0, 0.0], &[], 1.0, &mut d).is_none());
    assert_eq!(d.skipped_scl_terms, 1);
}

#[test]
fn combined_loss_weights() {
    assert!((combined_loss(2.0, -1.0, 0.1) - 1.7).abs() < 1e-15);
    assert_eq!(combined_loss(2.0, -1.0, 0.0), 2.0);
    assert_eq!(combined_loss(2.0, -1.0, 1.0), -1.0);
}

#[test]
fn cosine_matches_oracle_and_handles_zero() {
    let mut d = Diagnostics::default();
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0], &mut d), 0.0);
    assert_eq!(d.degenerate_cosines, 1);
    assert!(
        (cosine(&[1.0, 2.0], &[-3.0, 0.5], &mut d) - oracles::cosine(&[1.0, 2.0], &[-3.0, 0.5]))
            .abs()
            < 1e-15
    );
}

#[test]
fn lowering_cross_label_similarity_never_raises_the_loss() {
    // Label 1 sits on one ray; rotating it away from label 0 lowers every
    // cross-label cosine while both within-label cosines stay fixed.
    let tau = 0.1;
    let base = |angle: f64| {
        vec![
            vec![1.0, 0.0],
            vec![1.0, 0.05],
            vec![angle.cos(), angle.sin()],
            vec![2.0 * angle.cos(), 2.0 * angle.sin()],
        ]
    };
    let labels = [0, 0, 1, 1];
    let mut last = f64::INFINITY;
    for step in 1..=12 {
        let angle = step as f64 * 0.25;
        let loss = library_loss(&base(angle), &labels, tau);
        assert!(loss <= last + 1e-12, "angle {angle}: {loss} > {last}");
        last = loss;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scale_invariance(seed in any::<u64>(), c in prop::sample::select(vec![0.01, 1.0, 100.0])) {
        let (reps, labels) = random_batch(&mut ChaCha8Rng::seed_from_u64(seed));
        let scaled: Vec<Vec<f64>> = reps.iter().map(|r| r.iter().map(|x| c * x).collect()).collect();
        let a = library_loss(&reps, &labels, 0.1);
        let b = library_loss(&scaled, &labels, 0.1);
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn permutation_invariance(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (reps, labels) = random_batch(&mut r);
        let mut order: Vec<usize> = (0..reps.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        let p_reps: Vec<Vec<f64>> = order.iter().map(|&k| reps[k].clone()).collect();
        let p_labels: Vec<usize> = order.iter().map(|&k| labels[k]).collect();
        let a = library_loss(&reps, &labels, 0.1);
        let b = library_loss(&p_reps, &p_labels, 0.1);
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
