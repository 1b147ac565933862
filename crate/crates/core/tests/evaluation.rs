use proptest::prelude::*;

use twostream_core::eval::{compare_runs, ComparisonTable, EvalReport};
use twostream_core::nn::model::argmax;
use twostream_core::report::{export_loss_curve, moving_average, LossSeries};
use twostream_core::train::{MetricRecord, RunMetrics, Split};

fn predictions_and_labels() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (2usize..=8, 1usize..=1000).prop_flat_map(|(k, n)| {
        (Just(k), prop::collection::vec(0..k, n), prop::collection::vec(0..k, n))
    })
}

proptest! {
    #[test]
    fn report_identities((k, pred, labels) in predictions_and_labels()) {
        let r = EvalReport::from_predictions(&pred, &labels, k).unwrap();
        let n = labels.len() as u64;
        prop_assert_eq!(r.total(), n);
        prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>(), n);
        let trace: u64 = (0..k).map(|i| r.confusion[i][i]).sum();
        prop_assert!((r.overall_accuracy - trace as f64 / n as f64).abs() < 1e-12);
        // Overall accuracy is the support-weighted mean of per-class accuracy.
        let weighted: f64 = r.per_class_accuracy.iter().zip(&r.class_support)
            .filter_map(|(a, &s)| a.map(|a| a * s as f64)).sum::<f64>() / n as f64;
        prop_assert!((weighted - r.overall_accuracy).abs() < 1e-9);
        for (i, row) in r.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<u64>(), labels.iter().filter(|&&y| y == i).count() as u64);
        }
        let correct = pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
        prop_assert!((r.overall_accuracy - correct as f64 / n as f64).abs() < 1e-12);
        prop_assert!(r.overall_accuracy >= 0.0 && r.overall_accuracy <= 1.0);
    }

    #[test]
    fn argmax_takes_lowest_index_on_ties(row in prop::collection::vec(-3i32..3, 1..9)) {
        let best = *row.iter().max().unwrap();
        let first = row.iter().position(|&v| v == best).unwrap();
        prop_assert_eq!(argmax(&row), first);
    }

    #[test]
    fn moving_average_matches_windowed_mean(values in prop::collection::vec(-10.0f64..10.0, 1..300), window in 1usize..50) {
        let fast = moving_average(&values, window);
        for i in 0..values.len() {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            let want = slice.iter().sum::<f64>() / slice.len() as f64;
            prop_assert!((fast[i] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn argmax_tie_examples() {
    assert_eq!(argmax(&[0.25f32; 4]), 0);
    assert_eq!(argmax(&[0.1f32, 0.7, 0.7, 0.2]), 1);
}

#[test]
fn constant_predictor_on_balanced_set() {
    let labels: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let r = EvalReport::from_predictions(&vec![2; 400], &labels, 4).unwrap();
    assert_eq!(r.overall_accuracy, 0.25);
    assert_eq!(r.macro_accuracy, 0.25);
    assert_eq!(r.per_class_accuracy, vec![Some(0.0), Some(0.0), Some(1.0), Some(0.0)]);
}

#[test]
fn hand_counted_twenty_examples() {
    // class 0: 6 examples, 4 right; class 1: 5, 5 right; class 2: 5, 2 right; class 3: 4, 0 right.
    let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3];
    let pred = [0, 0, 0, 0, 1, 2, 1, 1, 1, 1, 1, 2, 2, 0, 0, 3, 0, 1, 2, 2];
    let r = EvalReport::from_predictions(&pred, &labels, 4).unwrap();
    assert_eq!(r.class_support, vec![6, 5, 5, 4]);
    assert!((r.overall_accuracy - 11.0 / 20.0).abs() < 1e-12);
    let per: Vec<f64> = r.per_class_accuracy.iter().map(|a| a.unwrap()).collect();
    for (got, want) in per.iter().zip([4.0 / 6.0, 1.0, 0.4, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((r.macro_accuracy - (4.0 / 6.0 + 1.0 + 0.4) / 4.0).abs() < 1e-12);
    assert_eq!(r.confusion[0], vec![4, 1, 1, 0]);
    assert_eq!(r.confusion[2], vec![2, 0, 2, 1]);
    assert_eq!(r.confusion[3], vec![1, 1, 2, 0]);
}

#[test]
fn absent_class_is_undefined_not_zero() {
    let r = EvalReport::from_predictions(&[0, 1, 1], &[0, 1, 1], 3).unwrap();
    assert_eq!(r.per_class_accuracy[2], None);
    assert_eq!(r.macro_accuracy, 1.0);
}

#[test]
fn invalid_inputs_are_errors() {
    assert!(EvalReport::from_predictions(&[], &[], 4).is_err());
    assert!(EvalReport::from_predictions(&[0], &[0, 1], 4).is_err());
    assert!(EvalReport::from_predictions(&[5], &[0], 4).is_err());
}

#[test]
fn comparison_delta_from_percentages() {
    let mut t = ComparisonTable::new();
    t.push_percent("ucf", 31.47, 33.54);
    assert!((t.rows[0].delta_overall() - 2.07).abs() < 1e-9);
    let text = t.to_text();
    assert!(text.contains("Sup (Rand Init.)") && text.contains("Self-Sup"));
    assert!(text.contains("31.47") && text.contains("33.54") && text.contains("+2.07"), "{text}");
}

#[test]
fn per_class_delta_has_one_entry_per_class() {
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let a = EvalReport::from_predictions(&vec![0; 40], &labels, 4).unwrap();
    let b = EvalReport::from_predictions(&labels, &labels, 4).unwrap();
    let t = compare_runs(&a, &b).unwrap();
    assert_eq!(t.per_class_deltas[0].len(), 4);
    assert_eq!(t.per_class_deltas[0], vec![Some(0.0), Some(100.0), Some(100.0), Some(100.0)]);
    assert!((t.mean_delta_overall() - 75.0).abs() < 1e-9);
    assert_eq!(t.wins_or_ties(), 1);
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().next().unwrap().ends_with("delta_class_3"));
}

#[test]
fn comparison_refuses_different_test_sets() {
    let a = EvalReport::from_predictions(&[0, 1], &[0, 1], 2).unwrap();
    let b = EvalReport::from_predictions(&[0, 1], &[0, 0], 2).unwrap();
    assert!(compare_runs(&a, &b).is_err());
}

#[test]
fn multi_seed_table_has_mean_row() {
    let mut t = ComparisonTable::new();
    t.push_percent("seed 1", 40.0, 42.0);
    t.push_percent("seed 2", 50.0, 49.0);
    assert!((t.mean_delta_overall() - 0.5).abs() < 1e-12);
    assert_eq!(t.wins_or_ties(), 1);
    assert!(t.to_text().lines().any(|l| l.contains("mean") && l.contains("+0.50")));
}

fn metrics(n: usize, scale: f64) -> RunMetrics {
    RunMetrics {
        num_classes: 4,
        records: (0..n)
            .map(|i| MetricRecord {
                iteration: i,
                split: Split::Train,
                loss: scale / (1.0 + i as f64),
                accuracy_overall: 0.5,
                accuracy_per_class: Vec::new(),
            })
            .collect(),
    }
}

#[test]
fn loss_curve_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let m = metrics(10_000, 1.4);
    let files = export_loss_curve(&[LossSeries { label: "pretext", metrics: &m }], &dir.path().join("curve"), 500).unwrap();
    let csv = std::fs::read_to_string(&files.csv).unwrap();
    assert_eq!(csv.lines().count(), 10_001);
    assert_eq!(csv.lines().next().unwrap(), "series,iteration,loss,moving_average");
    let svg = std::fs::read_to_string(&files.image).unwrap();
    assert!(svg.starts_with("<svg") || svg.contains("<svg"));
}

#[test]
fn two_runs_give_two_labeled_series() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (metrics(50, 1.0), metrics(50, 2.0));
    let files = export_loss_curve(
        &[LossSeries { label: "random", metrics: &a }, LossSeries { label: "self_supervised", metrics: &b }],
        &dir.path().join("curves"),
        10,
    )
    .unwrap();
    let csv = std::fs::read_to_string(&files.csv).unwrap();
    let labels: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), ["random", "self_supervised"]);
    let svg = std::fs::read_to_string(&files.image).unwrap();
    assert!(svg.contains("random") && svg.contains("self_supervised"));
}

#[test]
fn single_point_curve_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let m = metrics(1, 1.0);
    assert!(export_loss_curve(&[LossSeries { label: "x", metrics: &m }], &dir.path().join("c"), 5).is_err());
}

#[test]
fn metrics_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = metrics(3, 1.0);
    m.records.push(MetricRecord {
        iteration: 3,
        split: Split::Heldout,
        loss: 0.9,
        accuracy_overall: 0.5,
        accuracy_per_class: vec![Some(0.25), None, Some(1.0), Some(0.0)],
    });
    let path = dir.path().join("metrics.csv");
    std::fs::write(&path, m.to_csv()).unwrap();
    let back = RunMetrics::read_csv(&path).unwrap();
    assert_eq!(back.to_csv(), m.to_csv());
    assert_eq!(back.records.len(), 4);
}
