mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sclrai_core::corpus::{parse_bio, LabelId, LabelSet};
use sclrai_core::eval::{decode, predict_dataset, DecodeOptions};
use sclrai_core::model::reference_instances;
use sclrai_core::rai::{build_centroid_table, interpolate, ra_distribution};
use sclrai_core::span_model::LabelDistribution;
use sclrai_core::training::{init_model, Architecture};
use sclrai_core::Diagnostics;

fn labels(n: usize) -> LabelSet {
    let names: Vec<String> = (1..n).map(|k| format!("T{k}")).collect();
    LabelSet::from_entity_types(names.iter().map(String::as_str)).unwrap()
}

#[test]
fn centroids_match_brute_force_means() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let num_labels = r.random_range(2..=5);
        let dim = r.random_range(1..=12);
        let n = r.random_range(1..=50);
        let reps: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..num_labels)).collect();
        let set = labels(num_labels);
        let table = build_centroid_table(
            &set,
            dim,
            ys.iter()
                .zip(&reps)
                .map(|(&y, v)| (LabelId(y), v.as_slice())),
        )
        .unwrap();
        let expected = oracles::centroids(&reps, &ys, num_labels);
        for (l, e) in expected.iter().enumerate() {
            match (table.centroid(LabelId(l)), e) {
                (Some(c), Some(e)) => {
                    for (a, b) in c.iter().zip(e) {
                        assert!((a - b).abs() <= 1e-12);
                    }
                }
                (None, None) => {}
                other => panic!("coverage mismatch for label {l}: {other:?}"),
            }
            assert_eq!(
                table.count(LabelId(l)) as usize,
                ys.iter().filter(|&&y| y == l).count()
            );
        }
    }
}

#[test]
fn opposite_instances_average_to_zero() {
    let set = labels(2);
    let t = build_centroid_table(
        &set,
        2,
        [
            (LabelId(1), &[1.0, -2.0][..]),
            (LabelId(1), &[-1.0, 2.0][..]),
        ],
    )
    .unwrap();
    assert_eq!(t.centroid(LabelId(1)).unwrap(), &[0.0, 0.0]);
    assert!(t.centroid(LabelId(0)).is_none());
}

fn random_distribution(r: &mut ChaCha8Rng, n: usize) -> LabelDistribution {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    LabelDistribution::new(raw.into_iter().map(|x| x / s).collect())
}

#[test]
fn interpolation_identities() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let set = labels(4);
    for _ in 0..200 {
        let reps: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let table = build_centroid_table(
            &set,
            6,
            reps.iter()
                .enumerate()
                .map(|(k, v)| (LabelId(k % 4), v.as_slice())),
        )
        .unwrap();
        let query: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let o_ra = ra_distribution(&query, &table, &mut Diagnostics::default());
        let o = random_distribution(&mut r, 4);
        let v = set.non_entity().0;
        assert_eq!(o_ra.as_slice()[v], 0.0);
        assert_eq!(interpolate(&o, &o_ra, 0.0).unwrap(), o);
        assert_eq!(interpolate(&o, &o_ra, 1.0).unwrap(), o_ra);
        let alpha = r.random_range(0.0..=1.0);
        let p = interpolate(&o, &o_ra, alpha).unwrap();
        assert_eq!(p.as_slice()[v], (1.0 - alpha) * o.as_slice()[v]);
    }
}

#[test]
fn hand_evaluated_retrieval_distribution() {
    // Entity labels first, non-entity last.
    let set = LabelSet::new(vec!["A".into(), "B".into(), "O".into()], 2).unwrap();
    let t = build_centroid_table(
        &set,
        3,
        [
            (LabelId(0), &[1.0, 0.0, 0.0][..]),
            (LabelId(1), &[0.0, 1.0, 0.0][..]),
            (LabelId(2), &[0.0, 0.0, 1.0][..]),
        ],
    )
    .unwrap();
    let o = ra_distribution(&[2.0, 0.0, 0.0], &t, &mut Diagnostics::default());
    let e = std::f64::consts::E;
    let expected = [e / (e + 2.0), 1.0 / (e + 2.0), 0.0];
    for (a, b) in o.as_slice().iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    let p = interpolate(
        &LabelDistribution::new(vec![0.7, 0.2, 0.1]),
        &LabelDistribution::new(vec![0.6, 0.4, 0.0]),
        0.5,
    )
    .unwrap();
    for (a, b) in p.as_slice().iter().zip([0.65, 0.3, 0.05]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn alpha_zero_decoding_equals_the_retrieval_free_path() {
    let ds = parse_bio(
        "Ann\tB-PER\nmet\tO\nBob\tB-PER\nin\tO\nRome\tB-LOC\n\nRome\tB-LOC\nis\tO\nbig\tO\n\nBob\tB-PER\nleft\tO\n",
    )
    .unwrap()
    .dataset;
    let arch = Architecture {
        embed_dim: 4,
        hidden_dim: 6,
        rep_dim: 8,
        vocab_min_count: 1,
    };
    let mut predicted = 0;
    for seed in 0..20 {
        let model = init_model(&ds, arch, seed).unwrap();
        let table = model
            .centroid_table(&ds, &reference_instances(&ds, 0.35, 4, seed))
            .unwrap();
        let mut d = Diagnostics::default();
        let with = DecodeOptions {
            table: Some(&table),
            alpha: 0.0,
            max_span_len: 4,
        };
        let without = DecodeOptions {
            table: None,
            alpha: 0.5,
            max_span_len: 4,
        };
        for s in ds.sentences() {
            let a = decode(s, &model, with, &mut d).unwrap();
            assert_eq!(a, decode(s, &model, without, &mut d).unwrap());
            predicted += a.len();
        }
        assert_eq!(
            predict_dataset(&model, &ds, with, &mut d).unwrap(),
            predict_dataset(&model, &ds, without, &mut d).unwrap()
        );
    }
    assert!(
        predicted > 0,
        "untrained models should predict some entities"
    );
}
