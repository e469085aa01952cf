use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::json;
use tlvision::config::{merge_overrides, parse_override};
use tlvision::data::{compute_class_weights, TaskSpec};
use tlvision::eval::{argmax_labels, confusion};
use tlvision::inference::prediction_variance;
use tlvision::train::compute_patience;
use tlvision::ExperimentConfig;

fn task(k: usize) -> TaskSpec {
    let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
    TaskSpec::from_class_names(&names).unwrap()
}

fn labels(k: usize, max_len: usize) -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (Just(k), 0..max_len).prop_flat_map(move |(k, n)| {
        (
            Just(k),
            prop::collection::vec(0..k, n),
            prop::collection::vec(0..k, n),
        )
    })
}

proptest! {
    #[test]
    fn config_snapshot_round_trips(
        epochs in 1u32..200,
        batch in 1u32..512,
        lr in 1e-6f64..1.0,
        dense in prop::collection::vec(1u32..512, 0..4),
        dropout in 0.0f64..0.99,
        early in 0.0f64..=1.0,
        arch in prop::sample::select(vec!["TinyNet", "VGG16", "VGG19"]),
    ) {
        let partial = json!({
            "model": { "transfer_arch": arch, "dense_layers": dense, "dropout_rate": dropout },
            "training": {
                "epochs": epochs,
                "batch_size": batch,
                "learning_rate": lr,
                "early_stop": early,
            },
        });
        let cfg = ExperimentConfig::apply_defaults(&partial).unwrap();
        prop_assert_eq!(cfg.training.epochs, epochs);
        prop_assert_eq!(&cfg.model.dense_layers, &dense);
        let again = ExperimentConfig::apply_defaults(&cfg.snapshot()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.snapshot(), cfg.snapshot());
    }

    #[test]
    fn later_overrides_win(first in 1u32..100, second in 1u32..100) {
        let mut doc = json!({ "training": { "epochs": 3 } });
        let overrides = vec![
            parse_override(&format!("training.epochs={first}")).unwrap(),
            parse_override(&format!("training.epochs={second}")).unwrap(),
        ];
        merge_overrides(&mut doc, &overrides);
        let cfg = ExperimentConfig::apply_defaults(&doc).unwrap();
        prop_assert_eq!(cfg.training.epochs, second);
    }

    #[test]
    fn class_weights_balance(counts in prop::collection::vec(1usize..10_000, 2..12)) {
        let map: BTreeMap<String, usize> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("k{i:02}"), c))
            .collect();
        let w = compute_class_weights(&map).unwrap();
        let n: usize = counts.iter().sum();
        let k = counts.len() as f64;
        let total: f64 = map.iter().map(|(name, &c)| c as f64 * w[name]).sum();
        prop_assert!((total - n as f64).abs() <= 1e-9 * n as f64);
        // rarer classes never get smaller weights
        for (a, &ca) in &map {
            for (b, &cb) in &map {
                if ca < cb {
                    prop_assert!(w[a] > w[b]);
                }
            }
            prop_assert!((w[a] - n as f64 / (k * ca as f64)).abs() <= 1e-9);
        }
    }

    #[test]
    fn confusion_marginals((k, y_true, y_pred) in (2usize..7).prop_flat_map(|k| labels(k, 80))) {
        let cm = confusion(&y_true, &y_pred, k).unwrap();
        let mut true_counts = vec![0; k];
        let mut pred_counts = vec![0; k];
        for (&t, &p) in y_true.iter().zip(&y_pred) {
            true_counts[t] += 1;
            pred_counts[p] += 1;
        }
        prop_assert_eq!(cm.row_sums(), true_counts);
        prop_assert_eq!(cm.col_sums(), pred_counts);
        prop_assert_eq!(cm.total(), y_true.len());
    }

    #[test]
    fn variance_bounds(raw in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let sum: f64 = raw.iter().sum();
        prop_assume!(sum > 1e-6);
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let k = probs.len() as f64;
        let v = prediction_variance(&probs).unwrap();
        // the one-hot vector is the most spread distribution
        prop_assert!(v >= 0.0);
        prop_assert!(v <= (k - 1.0) / (k * k) + 1e-12);
    }

    #[test]
    fn argmax_is_a_maximum(rows in prop::collection::vec(prop::collection::vec(0u8..5, 4), 1..30)) {
        let rows: Vec<Vec<f32>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as f32 / 4.0).collect())
            .collect();
        let ids = argmax_labels(&rows, &task(4)).unwrap();
        for (row, id) in rows.iter().zip(ids) {
            prop_assert!(row.iter().all(|&p| p <= row[id]));
            prop_assert!(row[..id].iter().all(|&p| p < row[id]));
        }
    }

    #[test]
    fn patience_within_bounds(fraction in 0.0f64..=1.0, epochs in 1usize..500) {
        let p = compute_patience(fraction, epochs);
        if fraction == 0.0 {
            prop_assert_eq!(p, epochs);
        } else {
            prop_assert!(p >= 1);
            prop_assert!(p <= epochs.max(1));
            prop_assert!((p as f64 - fraction * epochs as f64).abs() <= 0.5 + 1e-6 || p == 1);
        }
    }
}
