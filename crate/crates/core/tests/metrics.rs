use fsad_core::data::Label;
use fsad_core::evaluation::{
    classify, compute_auc, confusion_at_threshold, emit_report, mean_std, read_scores_csv, scored_set,
    select_threshold, FrameScore, MetricsSummary, ScoredSet, SweepEntry, SweepResult, PLOT_FILE, SCORES_FILE,
    SUMMARY_FILE,
};
use fsad_core::Error;
use proptest::prelude::*;

fn set(normal: &[f64], abnormal: &[f64]) -> ScoredSet {
    let mut items: Vec<(f64, Label)> = normal.iter().map(|&s| (s, Label::Normal)).collect();
    items.extend(abnormal.iter().map(|&s| (s, Label::Abnormal)));
    ScoredSet::new(items)
}

/// Fraction of (abnormal, normal) pairs ordered correctly, ties counted half.
fn pair_oracle(s: &ScoredSet) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for &(a, _) in s.items.iter().filter(|(_, l)| *l == Label::Abnormal) {
        for &(n, _) in s.items.iter().filter(|(_, l)| *l == Label::Normal) {
            pairs += 1;
            twice_wins += if a > n { 2 } else if a == n { 1 } else { 0 };
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

#[test]
fn auc_examples() {
    assert_eq!(compute_auc(&set(&[0.1, 0.2], &[0.9, 0.8])).unwrap(), 1.0);
    assert_eq!(compute_auc(&set(&[0.5, 0.5, 0.5], &[0.5, 0.5])).unwrap(), 0.5);
    assert_eq!(compute_auc(&set(&[0.2, 0.6], &[0.4, 0.8])).unwrap(), 0.75);
    assert!(matches!(compute_auc(&set(&[0.1, 0.2], &[])), Err(Error::Contract(_))));
    assert!(matches!(compute_auc(&set(&[], &[0.3])), Err(Error::Contract(_))));
}

fn scored_sets(max: usize) -> impl Strategy<Value = ScoredSet> {
    (1usize..max, 1usize..max).prop_flat_map(move |(n, a)| {
        let a = a.min(max - n).max(1);
        (prop::collection::vec(-6i32..6, n), prop::collection::vec(-6i32..6, a)).prop_map(|(n, a)| {
            let f = |v: &Vec<i32>| v.iter().map(|&x| x as f64 * 0.25).collect::<Vec<_>>();
            set(&f(&n), &f(&a))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_equals_pair_enumeration(s in scored_sets(20)) {
        prop_assert!(s.len() <= 20);
        prop_assert_eq!(compute_auc(&s).unwrap(), pair_oracle(&s));
    }

    #[test]
    fn auc_is_invariant_under_increasing_maps(s in scored_sets(20)) {
        let a = compute_auc(&s).unwrap();
        let map = |f: fn(f64) -> f64| ScoredSet::new(s.items.iter().map(|&(v, l)| (f(v), l)).collect());
        prop_assert_eq!(compute_auc(&map(|v| 3.0 * v + 7.0)).unwrap(), a);
        prop_assert_eq!(compute_auc(&map(|v| v * v * v + v)).unwrap(), a);
    }

    #[test]
    fn swapping_labels_mirrors_auc(s in scored_sets(20)) {
        let a = compute_auc(&s).unwrap();
        prop_assert!((compute_auc(&s.swapped()).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn confusion_counts_partition_the_set(s in scored_sets(20), tau in -2.0f64..2.0) {
        let c = confusion_at_threshold(&s, tau);
        prop_assert_eq!(c.total(), s.len());
        // positives are normal frames
        prop_assert_eq!(c.tp + c.fn_, s.count(Label::Normal));
        prop_assert_eq!(c.tn + c.fp, s.count(Label::Abnormal));
    }
}

#[test]
fn threshold_semantics() {
    assert_eq!(classify(0.5, 0.5), Label::Normal);
    assert_eq!(classify(0.5000001, 0.5), Label::Abnormal);
    let s = set(&[0.1, 0.4], &[0.3, 0.9]);
    let below = confusion_at_threshold(&s, -1.0);
    assert_eq!((below.tp, below.fn_, below.tn, below.fp), (0, 2, 2, 0));
    let above = confusion_at_threshold(&s, 5.0);
    assert_eq!((above.tp, above.fn_, above.tn, above.fp), (2, 0, 0, 2));
    // tau 0.35: 0.1 -> normal (TP), 0.4 -> abnormal (FN), 0.3 -> normal (FP), 0.9 -> abnormal (TN)
    let mid = confusion_at_threshold(&s, 0.35);
    assert_eq!((mid.tp, mid.fn_, mid.tn, mid.fp), (1, 1, 1, 1));
    let best = select_threshold(&s).unwrap();
    let c = confusion_at_threshold(&s, best);
    assert_eq!(c.balanced_accuracy(), 0.75);
}

fn frame_scores() -> Vec<FrameScore> {
    (0..12)
        .map(|i| FrameScore {
            frame_id: format!("{:03}_{i:04}", i % 4),
            patient_id: i % 4,
            label: if i % 3 == 0 { Label::Abnormal } else { Label::Normal },
            score: (i as f64 * 0.731).sin() * 3.0 + if i % 3 == 0 { 1.0 } else { 0.0 },
        })
        .collect()
}

#[test]
fn csv_round_trip_reproduces_auc() {
    let dir = tempfile::tempdir().unwrap();
    let scores = frame_scores();
    let summary = MetricsSummary::from_scores(&scores, Some(0.2)).unwrap();
    let files = emit_report(&scores, &summary, None, dir.path()).unwrap();
    let back = read_scores_csv(&dir.path().join(SCORES_FILE)).unwrap();
    assert_eq!(back, scores);
    assert_eq!(compute_auc(&scored_set(&back)).unwrap(), summary.auc.unwrap());
    assert!(files.plot.is_none());
}

#[test]
fn empty_sweep_writes_summary_only() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&[], &MetricsSummary::default(), Some(&SweepResult::default()), dir.path()).unwrap();
    assert_eq!(files.all(), vec![dir.path().join(SUMMARY_FILE)]);
    assert!(!dir.path().join(PLOT_FILE).exists());
    assert!(!dir.path().join(SCORES_FILE).exists());
}

#[test]
fn sweep_plot_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let entries = [10, 20, 40, 80]
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let aucs = vec![0.7 + 0.05 * i as f64, 0.72 + 0.05 * i as f64, 0.69 + 0.05 * i as f64];
            let (mean_auc, std_auc) = mean_std(&aucs);
            SweepEntry { k, mean_auc, std_auc, aucs, seeds: vec![1, 2, 3] }
        })
        .collect();
    let sweep = SweepResult { repeats: 3, entries };
    let files = emit_report(&[], &MetricsSummary::default(), Some(&sweep), dir.path()).unwrap();
    let plot = files.plot.unwrap();
    let svg = std::fs::read_to_string(&plot).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polygon") && svg.contains("AUC"));
    let summary: MetricsSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.sweep.unwrap(), sweep);
}

#[test]
fn population_std() {
    assert_eq!(mean_std(&[0.8]), (0.8, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
}
