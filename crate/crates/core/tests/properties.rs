//! Property tests for the module invariants.

mod common;

use fossil::data::{generate_blobs, BlobSpec};
use fossil::difficulty::{entropy_difficulty, softmax_difficulty, stratify, DifficultyRecord, ProbabilityVector};
use fossil::evaluation::{
    ece, kruskal_wallis, mann_whitney_u, roc_auc, wilcoxon_signed_rank, ScoredPredictions,
};
use fossil::oco::{project, FeasibleBall};
use fossil::weighting::fossil_weight;
use proptest::prelude::*;

fn probability_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("all zero", |raw| {
        let total: f64 = raw.iter().sum();
        (total > 1e-6).then(|| raw.iter().map(|v| v / total).collect())
    })
}

fn distinct_scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(0u32..1_000_000, 2..max).prop_flat_map(|set| {
        let v: Vec<f64> = set.into_iter().map(|s| s as f64 / 1e6).collect();
        Just(v).prop_shuffle()
    })
}

fn records(scores: &[f64]) -> Vec<DifficultyRecord> {
    scores.iter().enumerate().map(|(i, &s)| DifficultyRecord::new(format!("s{i}"), s, 0)).collect()
}

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..max)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn difficulty_scores_are_bounded(p in probability_vector()) {
        let c = p.len() as f64;
        let pv = ProbabilityVector::new(p).unwrap();
        let s = softmax_difficulty(&pv);
        let h = entropy_difficulty(&pv);
        prop_assert!((0.0..=1.0 - 1.0 / c + 1e-12).contains(&s));
        prop_assert!((0.0..=c.ln() + 1e-12).contains(&h));
    }

    #[test]
    fn difficulty_ignores_class_order(p in probability_vector(), rot in 0usize..8) {
        let mut q = p.clone();
        q.rotate_left(rot % p.len());
        q.reverse();
        let (pv, qv) = (ProbabilityVector::new(p).unwrap(), ProbabilityVector::new(q).unwrap());
        prop_assert!((softmax_difficulty(&pv) - softmax_difficulty(&qv)).abs() <= 1e-15);
        prop_assert!((entropy_difficulty(&pv) - entropy_difficulty(&qv)).abs() <= 1e-12);
    }

    #[test]
    fn difficulty_extremes(c in 2usize..8, hot in 0usize..8) {
        let mut one_hot = vec![0.0; c];
        one_hot[hot % c] = 1.0;
        let oh = ProbabilityVector::new(one_hot).unwrap();
        prop_assert_eq!(softmax_difficulty(&oh), 0.0);
        prop_assert_eq!(entropy_difficulty(&oh), 0.0);
        let uniform = ProbabilityVector::new(vec![1.0 / c as f64; c]).unwrap();
        prop_assert!((softmax_difficulty(&uniform) - (1.0 - 1.0 / c as f64)).abs() <= 1e-12);
        prop_assert!((entropy_difficulty(&uniform) - (c as f64).ln()).abs() <= 1e-12);
    }

    #[test]
    fn stratify_is_sort_and_slice(scores in distinct_scores(120), k in 2usize..6) {
        prop_assume!(scores.len() >= k);
        let part = stratify(&records(&scores), k).unwrap();
        let n = scores.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        for (pos, &i) in order.iter().enumerate() {
            let expected = (1..k).filter(|&s| pos > (n - 1) * s / k).count();
            prop_assert_eq!(part.stage(&format!("s{i}")), Some(expected));
        }
    }

    #[test]
    fn stratify_follows_score_swaps(scores in distinct_scores(60), i in 0usize..60, j in 0usize..60) {
        prop_assume!(scores.len() >= 4);
        let (i, j) = (i % scores.len(), j % scores.len());
        let before = stratify(&records(&scores), 4).unwrap();
        let mut swapped = scores.clone();
        swapped.swap(i, j);
        let after = stratify(&records(&swapped), 4).unwrap();
        let (si, sj) = (format!("s{i}"), format!("s{j}"));
        prop_assert_eq!(after.stage(&si), before.stage(&sj));
        prop_assert_eq!(after.stage(&sj), before.stage(&si));
    }

    #[test]
    fn weight_is_one_only_at_zero_difficulty(d in 0.0f64..3.0, t in 0.05f64..10.0) {
        let w = fossil_weight(d, t).unwrap();
        prop_assert_eq!(w == 1.0, d / t < f64::EPSILON / 2.0);
        prop_assert_eq!(fossil_weight(0.0, t).unwrap(), 1.0);
    }

    #[test]
    fn projection_is_idempotent_and_non_expansive(
        a in prop::collection::vec(-10.0f64..10.0, 3),
        b in prop::collection::vec(-10.0f64..10.0, 3),
        c in prop::collection::vec(-1.0f64..1.0, 3),
        r in 0.1f64..5.0,
    ) {
        let ball = FeasibleBall::new(c, r).unwrap();
        let pa = project(&a, &ball);
        prop_assert!(ball.contains(&pa));
        prop_assert_eq!(project(&pa, &ball), pa.clone());
        let pb = project(&b, &ball);
        let gap: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let orig: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&gap) <= norm(&orig) * (1.0 + 1e-12));
    }

    #[test]
    fn auc_equals_pair_count(scores in prop::collection::vec(0u8..20, 2..50), bits in prop::collection::vec(any::<bool>(), 50)) {
        let labels: Vec<u8> = scores.iter().zip(&bits).map(|(_, &b)| b as u8).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 / 20.0).collect();
        let (mut twice_wins, mut pairs) = (0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1;
                    twice_wins += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
                }
            }
        }
        let auc = roc_auc(&ScoredPredictions::new(s, labels).unwrap()).unwrap();
        prop_assert!((auc * 2.0 * pairs as f64 - twice_wins as f64).abs() < 1e-9);
    }

    #[test]
    fn auc_ignores_increasing_transforms(s in prop::collection::vec(0.001f64..0.999, 4..40), bits in prop::collection::vec(any::<bool>(), 40)) {
        let labels: Vec<u8> = s.iter().zip(&bits).map(|(_, &b)| b as u8).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let base = roc_auc(&ScoredPredictions::new(s.clone(), labels.clone()).unwrap()).unwrap();
        let squashed: Vec<f64> = s.iter().map(|v| v.powi(3)).collect();
        let moved = roc_auc(&ScoredPredictions::new(squashed, labels).unwrap()).unwrap();
        prop_assert_eq!(base, moved);
    }

    #[test]
    fn ece_is_zero_when_bins_are_calibrated(counts in prop::collection::vec(1usize..6, 1..5)) {
        // bin b holds 10 samples at confidence (b+6)/10, of which b+6 are right
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (b, &reps) in counts.iter().enumerate() {
            let right = b + 6;
            for _ in 0..reps {
                for i in 0..10 {
                    scores.push(right as f64 / 10.0);
                    labels.push(u8::from(i < right));
                }
            }
        }
        let e = ece(&ScoredPredictions::new(scores, labels).unwrap(), 15).unwrap();
        prop_assert!(e.abs() <= 1e-12);
    }

    #[test]
    fn mann_whitney_statistics_are_complementary(a in sample(15), b in sample(15)) {
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((ab.statistic + ba.statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((ab.statistic - common::u_pairwise(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn tests_ignore_within_group_order(a in sample(20).prop_shuffle(), b in sample(20)) {
        let mut ra = a.clone();
        ra.reverse();
        let mut rb = b.clone();
        rb.rotate_left(b.len() / 2);
        prop_assert_eq!(mann_whitney_u(&a, &b).unwrap(), mann_whitney_u(&ra, &rb).unwrap());
        prop_assert_eq!(kruskal_wallis(&[&a, &b]).unwrap(), kruskal_wallis(&[&ra, &rb]).unwrap());
        let d: Vec<f64> = a.iter().map(|v| v.round()).collect();
        let mut rd = d.clone();
        rd.reverse();
        match (wilcoxon_signed_rank(&d), wilcoxon_signed_rank(&rd)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn blob_generator_is_deterministic(seed in 0u64..1000, noise in 0.0f64..0.3) {
        let mut spec = BlobSpec::separated([12, 9], 3, 1.0, 1.0, seed);
        spec.label_noise = noise;
        prop_assert_eq!(generate_blobs(&spec).unwrap(), generate_blobs(&spec).unwrap());
    }
}
