use eegart_core::attention::{AttentionMap, EDGE_EXCLUSION_S};
use eegart_core::evaluation::*;
use eegart_core::signal::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: Label = Label::Artifact;
const C: Label = Label::Clean;

fn map(values: Vec<f64>) -> AttentionMap {
    AttentionMap { epoch_index: 0, time_scale_s_per_step: 0.5, values, edge_exclusion_s: EDGE_EXCLUSION_S, degenerate: false }
}

/// Loop reference: counts, rates and trapezoid written out longhand.
fn reference_roc(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> (Vec<(f64, f64, f64)>, f64) {
    let mut pts = Vec::new();
    for &t in thresholds {
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..scores.len() {
            let pos = scores[i] >= t;
            if pos && labels[i] {
                tp += 1.0
            } else if pos {
                fp += 1.0
            } else if labels[i] {
                fn_ += 1.0
            } else {
                tn += 1.0
            }
        }
        pts.push((t, tp / (tp + fn_), tn / (tn + fp)));
    }
    let mut curve: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 1.0)];
    for p in &pts {
        curve.push((1.0 - p.2, p.1));
    }
    curve.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut auc = 0.0;
    for k in 1..curve.len() {
        auc += (curve[k].0 - curve[k - 1].0) * (curve[k].1 + curve[k - 1].1) * 0.5;
    }
    (pts, auc)
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| {
            // coarse scores make threshold ties common
            let s: f64 = if l { rng.gen_range(0.2..1.0) } else { rng.gen_range(0.0..0.8) };
            if rng.gen_bool(0.3) { (s * 20.0).round() / 20.0 } else { s }
        })
        .collect();
    (scores, labels)
}

#[test]
fn roc_matches_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = probability_grid();
    for _ in 0..100 {
        let n = rng.gen_range(2..300);
        let (scores, labels) = random_problem(&mut rng, n);
        let roc = roc_auc(&scores, &labels).unwrap();
        let (pts, auc) = reference_roc(&scores, &labels, &grid);
        assert!((roc.auc - auc).abs() < 1e-12);
        for (p, q) in roc.points.iter().zip(&pts) {
            assert_eq!((p.threshold, p.se, p.sp), *q);
        }
        let best = pts
            .iter()
            .fold(None::<(f64, f64, f64)>, |b, p| match b {
                Some(b) if (b.1 * b.2).sqrt() >= (p.1 * p.2).sqrt() => Some(b),
                _ => Some(*p),
            })
            .unwrap();
        assert_eq!((roc.best.threshold, roc.best.se, roc.best.sp), best);
    }
}

#[test]
fn rank_auc_matches_pair_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.gen_range(2..200);
        let (scores, labels) = random_problem(&mut rng, n);
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((rank_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-12);
    }
}

#[test]
fn confusion_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pred: Vec<bool> = (0..1000).map(|_| rng.gen()).collect();
    let truth: Vec<bool> = (0..1000).map(|_| rng.gen()).collect();
    let cm = ConfusionMatrix::from_decisions(&pred, &truth).unwrap();
    let count = |p: bool, t: bool| pred.iter().zip(&truth).filter(|(&a, &b)| a == p && b == t).count() as u64;
    assert_eq!(cm, ConfusionMatrix { tp: count(true, true), fp: count(true, false), tn: count(false, false), fn_: count(false, true) });
    assert_eq!(cm.total(), 1000);
    let (se, sp) = sensitivity_specificity(&cm).unwrap();
    assert_eq!(se, cm.tp as f64 / (cm.tp + cm.fn_) as f64);
    assert_eq!(sp, cm.tn as f64 / (cm.tn + cm.fp) as f64);
}

#[test]
fn separated_scores_give_perfect_roc() {
    let scores = [0.05, 0.2, 0.3, 0.71, 0.8, 0.99];
    let labels = [false, false, false, true, true, true];
    let roc = roc_auc(&scores, &labels).unwrap();
    assert_eq!(roc.auc, 1.0);
    assert_eq!((roc.best.se, roc.best.sp), (1.0, 1.0));
    assert_eq!(roc.best.threshold, 0.31);
}

#[test]
fn uninformative_scores_give_half_auc() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let scores: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..4000).map(|_| rng.gen_bool(0.3)).collect();
        let roc = roc_auc(&scores, &labels).unwrap();
        assert!((roc.auc - 0.5).abs() < 0.05, "seed {seed}: {}", roc.auc);
    }
}

#[test]
fn one_class_is_an_error() {
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(roc_auc(&[0.1, 0.2], &[false, false]).is_err());
    assert!(roc_auc(&[0.1], &[true, false]).is_err());
}

#[test]
fn auc_under_increasing_affine_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (scores, labels) = random_problem(&mut rng, 500);
        let base = roc_auc(&scores, &labels).unwrap();
        let a = rng.gen_range(0.5..1.0);
        let b = rng.gen_range(0.0..(1.0 - a));
        let mapped: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let roc = roc_auc(&mapped, &labels).unwrap();
        assert!((roc.auc_exact - base.auc_exact).abs() < 1e-12);
        // the 0.01 grid resamples the curve, so grid AUC moves slightly
        assert!((roc.auc - base.auc).abs() < 0.02, "{} vs {}", roc.auc, base.auc);
    }
}

#[test]
fn best_point_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (scores, labels) = random_problem(&mut rng, 200);
        let mut idx: Vec<usize> = (0..200).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        assert_eq!(roc_auc(&scores, &labels).unwrap().best, roc_auc(&s2, &l2).unwrap().best);
    }
}

#[test]
fn localization_spec_examples() {
    assert!(localize(&map(vec![0.0; 40]), 0.3).is_empty());
    let mut v = vec![0.0; 40];
    for x in &mut v[10..=20] {
        *x = 0.8;
    }
    assert_eq!(localize(&map(v.clone()), 0.5), vec![(5.0, 10.5)]);
    assert_eq!(localize(&map(v), 0.0), vec![(1.0, 19.0)]);

    let rule1 = score_localization(&[(0.5, 3.0)], &[A, C, C, C, C]).unwrap();
    assert_eq!(rule1, ConfusionMatrix { tp: 1, fp: 0, tn: 4, fn_: 0 });
    let edge = window_verdicts(&[(3.0, 5.0)], &[C, A, C, C, C]).unwrap();
    assert_eq!(edge, [Verdict::Fp, Verdict::Fn, Verdict::Tn, Verdict::Tn, Verdict::Tn]);
    let none = score_localization(&[], &[C; 5]).unwrap();
    assert_eq!(none, ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 0 });
}

#[test]
fn overlap_rules() {
    // rule 2: a short prediction mostly inside one labeled window
    assert_eq!(window_verdicts(&[(3.5, 5.0)], &[C, A, C, C, C]).unwrap()[1], Verdict::Tp);
    // rule 1 needs strictly more than 2 s of a window
    assert_eq!(window_verdicts(&[(0.0, 2.0), (6.0, 8.0)], &[A, C, C, C, C]).unwrap()[0], Verdict::Tp);
    assert_eq!(window_verdicts(&[(2.0, 6.0)], &[A, A, C, C, C]).unwrap(), [Verdict::Fn, Verdict::Fn, Verdict::Tn, Verdict::Tn, Verdict::Tn]);
    assert_eq!(window_verdicts(&[(1.9, 6.0)], &[A, C, C, C, C]).unwrap()[0], Verdict::Tp);
    // one long prediction credits every window it covers by more than half
    assert_eq!(window_verdicts(&[(0.0, 20.0)], &[A, A, C, A, C]).unwrap(), [Verdict::Tp, Verdict::Tp, Verdict::Fp, Verdict::Tp, Verdict::Fp]);
    assert!(score_localization(&[(19.0, 20.5)], &[C; 5]).is_err());
    assert!(score_localization(&[(-0.5, 1.0)], &[C; 5]).is_err());
    assert!(score_localization(&[(3.0, 3.0)], &[C; 5]).is_err());
}

fn random_map(rng: &mut ChaCha8Rng) -> AttentionMap {
    let mut v: Vec<f64> = (0..40).map(|_| rng.gen::<f64>().powi(3)).collect();
    v[0] = 0.0;
    v[1] = 0.0;
    v[38] = 0.0;
    v[39] = 0.0;
    map(v)
}

fn random_labels(rng: &mut ChaCha8Rng) -> [Label; 5] {
    std::array::from_fn(|_| if rng.gen_bool(0.3) { A } else { C })
}

#[test]
fn false_positives_never_grow_with_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let maps: Vec<_> = (0..5).map(|_| random_map(&mut rng)).collect();
        let labels: Vec<_> = (0..5).map(|_| random_labels(&mut rng)).collect();
        let mut last = u64::MAX;
        for t in probability_grid() {
            let fp = localize_all(&maps, &labels, t).unwrap().confusion().fp;
            assert!(fp <= last, "threshold {t}");
            last = fp;
        }
    }
}

#[test]
fn verdicts_depend_only_on_their_own_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let maps: Vec<_> = (0..6).map(|_| random_map(&mut rng)).collect();
    let labels: Vec<_> = (0..6).map(|_| random_labels(&mut rng)).collect();
    let all = localize_all(&maps, &labels, 0.4).unwrap();
    for i in 0..6 {
        let single = localize_all(&maps[i..=i], &labels[i..=i], 0.4).unwrap();
        assert_eq!(single.window_verdicts[0], all.window_verdicts[i]);
    }
}

#[test]
fn flat_maps_never_find_artifacts() {
    let maps = vec![map(vec![0.0; 40]); 4];
    let labels = vec![[A, C, C, A, C]; 4];
    let sweep = sweep_localization_threshold(&maps, &labels).unwrap();
    assert!(sweep.points.iter().filter(|p| p.threshold > 0.0).all(|p| p.se == 0.0));
}

#[test]
fn sweep_finds_a_clean_separation() {
    let mut v = vec![0.05; 40];
    for x in &mut v[9..15] {
        *x = 0.9;
    }
    let labels = vec![[C, A, C, C, C]];
    let sweep = sweep_localization_threshold(&[map(v)], &labels).unwrap();
    assert_eq!((sweep.best.se, sweep.best.sp), (1.0, 1.0));
    assert_eq!(sweep.best.threshold, 0.05);
    assert!(sweep_localization_threshold(&[map(vec![0.0; 40])], &[[C; 5]]).is_err());
}

proptest! {
    #[test]
    fn intervals_lie_in_the_epoch(values in prop::collection::vec(0.0f64..1.0, 40), t in 0.0f64..1.0) {
        for (s, e) in localize(&map(values), t) {
            prop_assert!(s >= 1.0 && e <= 19.0 && s < e);
        }
    }
}
