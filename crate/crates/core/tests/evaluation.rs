use dap_core::evaluation::{compare_curves, piecewise_eval, piecewise_from_predictions, Confusion, Prediction};
use dap_core::datapipe::Example;
use dap_core::network::{Architecture, ModelParameters, NetworkConfig};
use dap_core::numeric::{Matrix, SeededRng};
use proptest::prelude::*;

fn pos(label: usize, tte: f64, predicted: usize) -> Prediction {
    Prediction {
        label,
        time_to_event: Some(tte),
        predicted,
    }
}

fn neg(predicted: usize) -> Prediction {
    Prediction {
        label: 0,
        time_to_event: None,
        predicted,
    }
}

/// Three-class task, 2 s horizon, 1 s bins.
///
/// bin (0,1]: class 1 right, class 2 predicted 1
/// bin (1,2]: class 1 predicted 0, class 2 right, class 2 right
/// negatives: right, right, predicted 2
fn eight() -> Vec<Prediction> {
    vec![
        pos(1, 0.4, 1),
        pos(2, 1.0, 1),
        pos(1, 1.5, 0),
        pos(2, 1.2, 2),
        pos(2, 2.0, 2),
        neg(0),
        neg(0),
        neg(2),
    ]
}

#[test]
fn hand_counted_eight_examples() {
    let m = piecewise_from_predictions(&eight(), 3, 2.0, 1.0).unwrap();
    assert_eq!(m.bins.len(), 2);

    let b0 = &m.bins[0];
    assert_eq!((b0.n_pos, b0.n_neg), (2, 3));
    // Class 1 recall 1/1, class 2 recall 0/1.
    assert_eq!(b0.tpr, Some(0.5));
    assert_eq!(b0.fpr, Some(1.0 / 3.0));
    // Correct: one positive, two negatives, out of 5.
    assert_eq!(b0.accuracy, Some(3.0 / 5.0));
    assert_eq!(b0.confusion.counts, vec![vec![2, 0, 1], vec![0, 1, 0], vec![0, 1, 0]]);

    let b1 = &m.bins[1];
    assert_eq!((b1.n_pos, b1.n_neg), (3, 3));
    // Class 1 recall 0/1, class 2 recall 2/2.
    assert_eq!(b1.tpr, Some(0.5));
    assert_eq!(b1.accuracy, Some(4.0 / 6.0));

    let a = &m.aggregate;
    assert_eq!((a.n_pos, a.n_neg), (5, 3));
    assert_eq!(a.accuracy, Some(5.0 / 8.0));
    assert_eq!(a.per_class_tpr, vec![Some(2.0 / 3.0), Some(0.5), Some(2.0 / 3.0)]);
    assert_eq!(a.tpr, Some((0.5 + 2.0 / 3.0) / 2.0));
    assert_eq!(a.fpr, Some(1.0 / 3.0));
    assert_eq!(a.confusion.counts, vec![vec![2, 0, 1], vec![1, 1, 0], vec![0, 1, 2]]);
}

#[test]
fn perfect_classifier() {
    let preds: Vec<Prediction> = (1..=10)
        .map(|k| pos(1, k as f64 * 0.5 - 0.1, 1))
        .chain((0..5).map(|_| neg(0)))
        .collect();
    let m = piecewise_from_predictions(&preds, 2, 5.0, 0.5).unwrap();
    for b in &m.bins {
        assert_eq!(b.accuracy, Some(1.0));
        assert_eq!(b.tpr, Some(1.0));
        assert_eq!(b.fpr, Some(0.0));
    }
    assert_eq!(m.aggregate.accuracy, Some(1.0));
}

#[test]
fn empty_bins_report_absent_tpr() {
    let m = piecewise_from_predictions(&[pos(1, 0.3, 1), neg(1)], 2, 2.0, 0.5).unwrap();
    assert_eq!(m.bins[0].tpr, Some(1.0));
    for b in &m.bins[1..] {
        assert_eq!(b.n_pos, 0);
        assert_eq!(b.tpr, None);
        // Only the shared negative, which is wrong.
        assert_eq!(b.accuracy, Some(0.0));
    }
    let only_pos = piecewise_from_predictions(&[pos(1, 0.3, 1)], 2, 2.0, 0.5).unwrap();
    assert_eq!(only_pos.aggregate.fpr, None);
    assert_eq!(only_pos.bins[1].accuracy, None);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(piecewise_from_predictions(&[], 2, 5.0, 0.5).is_err());
    assert!(piecewise_from_predictions(&eight(), 3, 5.0, 0.7).is_err());
    assert!(piecewise_from_predictions(&[pos(1, 5.5, 1)], 2, 5.0, 0.5).is_err());
    assert!(piecewise_from_predictions(&[pos(1, 0.0, 1)], 2, 5.0, 0.5).is_err());
    assert!(piecewise_from_predictions(&[pos(3, 1.0, 1)], 2, 5.0, 0.5).is_err());
}

#[test]
fn uniform_advantage_shows_in_every_delta() {
    // b misses one of the 20 positives in every bin, a misses none.
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    for k in 0..4 {
        for j in 0..20 {
            let tte = k as f64 + 0.5;
            pa.push(pos(1, tte, 1));
            pb.push(pos(1, tte, usize::from(j != 0)));
        }
    }
    let a = piecewise_from_predictions(&pa, 2, 4.0, 1.0).unwrap();
    let b = piecewise_from_predictions(&pb, 2, 4.0, 1.0).unwrap();
    let cmp = compare_curves(&a, &b, 0.0).unwrap();
    for d in &cmp.deltas {
        assert!((d.accuracy_delta.unwrap() - 0.05).abs() < 1e-12);
    }
    assert_eq!(cmp.earliest_advantage, Some((3.0, 4.0)));
    assert_eq!(compare_curves(&a, &b, 0.06).unwrap().earliest_advantage, None);

    let c = piecewise_from_predictions(&pa, 2, 4.0, 2.0).unwrap();
    assert!(compare_curves(&a, &c, 0.0).is_err());
}

#[test]
fn model_evaluation_matches_manual_argmax() {
    let mut rng = SeededRng::new(12);
    let m = ModelParameters::new(NetworkConfig::new(Architecture::Bidirectional, 3, 4, 2, 6), 2).unwrap();
    let examples: Vec<Example> = (0..30)
        .map(|i| {
            let data = (0..18).map(|_| rng.uniform(-2.0, 2.0)).collect();
            Example {
                window: Matrix::new(6, 3, data).unwrap(),
                label: i % 2,
                time_to_event: (i % 2 == 1).then(|| 0.5 * ((i % 10) as f64 + 1.0) - 0.25),
                session_id: "s".into(),
                end_time: i as f64,
            }
        })
        .collect();
    let metrics = piecewise_eval(&m, &examples, 5.0, 0.5).unwrap();
    let mut conf = Confusion::new(2);
    for e in &examples {
        let p = dap_core::network::predict(&m, &e.window).unwrap();
        let c = if p.get(1, 0) > p.get(0, 0) { 1 } else { 0 };
        conf.add(e.label, c);
    }
    assert_eq!(metrics.aggregate.confusion, conf);
}

fn arb_predictions() -> impl Strategy<Value = Vec<Prediction>> {
    proptest::collection::vec((0usize..3, 1u32..=50, 0usize..3), 1..60).prop_map(|v| {
        v.into_iter()
            .map(|(label, t, predicted)| Prediction {
                label,
                time_to_event: (label > 0).then(|| t as f64 * 0.1),
                predicted,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn confusion_cells_sum_to_counts(preds in arb_predictions()) {
        let m = piecewise_from_predictions(&preds, 3, 5.0, 0.5).unwrap();
        prop_assert_eq!(m.aggregate.confusion.total(), preds.len());
        let mut pos_total = 0;
        for b in &m.bins {
            prop_assert_eq!(b.confusion.total(), b.n_pos + b.n_neg);
            pos_total += b.n_pos;
            for r in [b.accuracy, b.tpr, b.fpr].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
        prop_assert_eq!(pos_total, m.aggregate.n_pos);
    }

    #[test]
    fn metrics_ignore_example_order(preds in arb_predictions(), seed in any::<u64>()) {
        let mut shuffled = preds.clone();
        SeededRng::new(seed).shuffle(&mut shuffled);
        let a = piecewise_from_predictions(&preds, 3, 5.0, 0.5).unwrap();
        let b = piecewise_from_predictions(&shuffled, 3, 5.0, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_bin_equals_whole_set(preds in arb_predictions()) {
        let m = piecewise_from_predictions(&preds, 3, 5.0, 5.0).unwrap();
        prop_assert_eq!(m.bins.len(), 1);
        let b = &m.bins[0];
        prop_assert_eq!(&b.confusion, &m.aggregate.confusion);
        prop_assert_eq!(b.accuracy, m.aggregate.accuracy);
        prop_assert_eq!(b.tpr, m.aggregate.tpr);
        prop_assert_eq!(b.fpr, m.aggregate.fpr);
    }

    #[test]
    fn self_comparison_is_flat(preds in arb_predictions()) {
        let m = piecewise_from_predictions(&preds, 3, 5.0, 0.5).unwrap();
        let cmp = compare_curves(&m, &m, 0.0).unwrap();
        prop_assert!(cmp.deltas.iter().all(|d| d.accuracy_delta.map_or(true, |x| x == 0.0)));
        prop_assert_eq!(cmp.earliest_advantage, None);
    }
}
