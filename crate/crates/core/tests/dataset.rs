use eegart_core::dataset::corpus::{load_corpus, subject_epochs, write_synthetic_corpus};
use eegart_core::dataset::smote::{interpolate, nearest_neighbors, smote_plan};
use eegart_core::dataset::synth::subject_seed;
use eegart_core::dataset::*;
use eegart_core::signal::io::encode_raw;
use eegart_core::signal::{Epoch, Label, EPOCH_S, HEAD_TRIM_S};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn epoch(i: usize, label: Label) -> Epoch {
    Epoch {
        epoch_index: i,
        values: vec![0.0; 3],
        label,
        window_labels: [label; 5],
        degenerate: false,
    }
}

#[test]
fn synthetic_is_bit_identical_per_seed() {
    let spec = SyntheticSpec { seed: 7, ..Default::default() };
    let a = generate_synthetic(&spec).unwrap();
    let b = generate_synthetic(&spec).unwrap();
    assert_eq!(encode_raw(&a.recording, 1.0).unwrap().1, encode_raw(&b.recording, 1.0).unwrap().1);
    assert_eq!(a.truth, b.truth);
    let c = generate_synthetic(&SyntheticSpec { seed: 8, ..Default::default() }).unwrap();
    assert_ne!(a.recording.samples, c.recording.samples);
}

#[test]
fn zero_rate_means_no_artifacts() {
    let spec = SyntheticSpec { artifact_rate: 0.0, ..Default::default() };
    let s = generate_synthetic(&spec).unwrap();
    assert!(s.truth.is_empty());
    let labels = corpus::synthetic_labels(&s).unwrap();
    assert!(labels.iter().all(|l| l.label == Label::Clean));
}

#[test]
fn artifact_count_follows_rate() {
    let spec = SyntheticSpec {
        seed: 3,
        artifact_rate: 0.04,
        duration_s: HEAD_TRIM_S + 1000.0 * EPOCH_S,
        ..Default::default()
    };
    let s = generate_synthetic(&spec).unwrap();
    let labels = corpus::synthetic_labels(&s).unwrap();
    assert_eq!(labels.len(), 1000);
    let n = labels.iter().filter(|l| l.label == Label::Artifact).count();
    assert!((30..=50).contains(&n), "{n} artifact epochs");
}

#[test]
fn truth_is_sorted_disjoint_and_inside_scored_epochs() {
    for seed in 0..5 {
        let spec = SyntheticSpec { seed, artifact_rate: 0.3, ..Default::default() };
        let s = generate_synthetic(&spec).unwrap();
        assert_eq!(s.truth.len(), 30);
        for w in s.truth.windows(2) {
            assert!(w[0].end_s <= w[1].start_s);
        }
        for t in &s.truth {
            assert!(t.start_s >= HEAD_TRIM_S && t.end_s <= spec.duration_s);
            let e0 = ((t.start_s - HEAD_TRIM_S) / EPOCH_S).floor();
            let e1 = ((t.end_s - HEAD_TRIM_S) / EPOCH_S).floor();
            assert_eq!(e0, e1, "interval crosses an epoch boundary");
        }
    }
}

#[test]
fn labels_are_consistent_with_windows() {
    let s = generate_synthetic(&SyntheticSpec { seed: 2, artifact_rate: 0.3, ..Default::default() }).unwrap();
    for l in corpus::synthetic_labels(&s).unwrap() {
        assert_eq!(l.label == Label::Artifact, l.window_labels.contains(&Label::Artifact));
    }
}

#[test]
fn artifacts_change_only_their_interval() {
    let base = SyntheticSpec { seed: 11, artifact_rate: 0.0, drift_rate: 0.0, ..Default::default() };
    let clean = generate_synthetic(&base).unwrap();
    // Same seed with artifacts: the background draws come first, so the
    // two recordings agree outside the truth intervals.
    let dirty = generate_synthetic(&SyntheticSpec { artifact_rate: 0.2, ..base.clone() }).unwrap();
    let rate = base.rate_hz;
    for (i, (a, b)) in clean.recording.samples.iter().zip(&dirty.recording.samples).enumerate() {
        let t = i as f64 / rate;
        let inside = dirty.truth.iter().any(|iv| t >= iv.start_s && t < iv.end_s);
        if !inside {
            assert_eq!(a, b, "sample {i} at {t} s changed outside truth");
        }
    }
    assert!(!dirty.truth.is_empty());
}

#[test]
fn subject_seeds_differ() {
    let seeds: std::collections::HashSet<u64> = (0..24).map(|i| subject_seed(1, i)).collect();
    assert_eq!(seeds.len(), 24);
}

#[test]
fn corpus_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { seed: 4, subjects: 3, duration_s: 420.0, artifact_rate: 0.2, ..Default::default() };
    let ids = write_synthetic_corpus(dir.path(), &spec).unwrap();
    assert_eq!(ids, vec!["sub01", "sub02", "sub03"]);
    let subjects = load_corpus(dir.path()).unwrap();
    assert_eq!(subjects.len(), 3);
    for s in &subjects {
        let eps = subject_epochs(s).unwrap();
        assert_eq!(eps.len(), 20);
        assert_eq!(s.stages.as_ref().unwrap().len(), 20);
        let n_truth = s.truth.as_ref().unwrap().len();
        let n_art = eps.iter().filter(|e| e.label == Label::Artifact).count();
        assert_eq!(n_truth, n_art);
    }
}

#[test]
fn split_is_subject_disjoint() {
    let sets: Vec<(String, Vec<Epoch>)> =
        (0..24).map(|i| (format!("s{i}"), (0..10).map(|k| epoch(k, Label::Clean)).collect())).collect();
    let [tr, va, te] = split_by_subject(sets, Fractions::default()).unwrap();
    assert_eq!((tr.subjects().len(), va.subjects().len(), te.subjects().len()), (14, 4, 6));
    for a in tr.subjects() {
        assert!(!va.subjects().contains(&a) && !te.subjects().contains(&a));
    }
    for a in va.subjects() {
        assert!(!te.subjects().contains(&a));
    }
    assert_eq!(tr.epochs.len(), 140);
    let too_few = vec![("a".to_string(), vec![]), ("b".to_string(), vec![])];
    assert!(split_by_subject(too_few, Fractions::default()).is_err());
}

#[test]
fn split_counts_match_labels() {
    let sets = vec![
        ("a".to_string(), vec![epoch(0, Label::Artifact), epoch(1, Label::Clean)]),
        ("b".to_string(), vec![epoch(0, Label::Clean)]),
        ("c".to_string(), vec![epoch(0, Label::Artifact)]),
    ];
    let third = 1.0 / 3.0;
    let [tr, _, te] = split_by_subject(sets, Fractions { train: third, val: third, test: third }).unwrap();
    assert_eq!(tr.count(Label::Artifact), 1);
    assert_eq!(tr.artifact_fraction(), 0.5);
    assert_eq!(te.count(Label::Artifact), 1);
}

/// Brute-force nearest neighbours by full sort of explicit distances.
fn knn_reference(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d = Vec::new();
    for (j, p) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let mut s = 0.0;
        for c in 0..p.len() {
            s += (p[c] - points[i][c]).powi(2);
        }
        d.push((s.sqrt(), j));
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d.iter().take(k).map(|x| x.1).collect()
}

#[test]
fn smote_matches_reference_and_stays_on_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..100 {
        let m = rng.gen_range(7..20);
        let dim = rng.gen_range(1..12);
        let pts: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let plan = smote_plan(&pts, 5, 30, case).unwrap();
        let out = smote_oversample(&pts, 5, 30, case).unwrap();
        assert_eq!(out.len(), 30);
        for (d, s) in plan.iter().zip(&out) {
            assert!(knn_reference(&pts, d.parent, 5).contains(&d.neighbor));
            assert!((0.0..1.0).contains(&d.lambda));
            let (x, n) = (&pts[d.parent], &pts[d.neighbor]);
            for c in 0..dim {
                let expect = x[c] + d.lambda * (n[c] - x[c]);
                assert!((s[c] - expect).abs() < 1e-10);
                assert!(s[c] >= x[c].min(n[c]) - 1e-15 && s[c] <= x[c].max(n[c]) + 1e-15);
            }
        }
        assert_eq!(nearest_neighbors(&pts, 0, 5), knn_reference(&pts, 0, 5));
    }
    assert_eq!(interpolate(&[0.0, 0.0], &[1.0, 1.0], 0.5), vec![0.5, 0.5]);
}
