mod common;

use common::random_matrix;
use dap_core::datapipe::Example;
use dap_core::network::{Architecture, ModelParameters, NetworkConfig};
use dap_core::numeric::{Matrix, SeededRng};
use dap_core::training::{
    adam_step, bptt_gradients, clip_gradients, evaluate, lr_schedule, train, AdamState, TrainingConfig,
};
use dap_core::Error;
use proptest::prelude::*;

fn tiny_config() -> NetworkConfig {
    NetworkConfig::new(Architecture::Bidirectional, 4, 8, 2, 10)
}

fn tiny_set(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| Example {
            window: random_matrix(10, 4, 1.0, &mut rng),
            label: i % 2,
            time_to_event: (i % 2 == 1).then_some(2.0),
            session_id: format!("s{}", i % 3),
            end_time: i as f64,
        })
        .collect()
}

fn flat(m: &ModelParameters) -> Vec<f64> {
    m.named_matrices().iter().flat_map(|(_, x)| x.as_slice().to_vec()).collect()
}

#[test]
fn single_repeated_example_is_memorized() {
    let one = tiny_set(1, 1);
    let init = ModelParameters::new(tiny_config(), 1).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 200,
        ..TrainingConfig::default()
    };
    let out = train(&init, &one, &[], &cfg).unwrap();
    let (loss, _) = evaluate(&out.model, &one).unwrap();
    assert!(loss < 1e-3, "{loss}");
}

#[test]
fn overfitting_loss_trends_down() {
    let set = tiny_set(8, 2);
    let init = ModelParameters::new(tiny_config(), 2).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 200,
        batch_size: 8,
        ..TrainingConfig::default()
    };
    let out = train(&init, &set, &[], &cfg).unwrap();
    let losses: Vec<f64> = out.reports.iter().map(|r| r.train_loss).collect();
    for e in 0..losses.len() - 50 {
        assert!(losses[e + 50] <= losses[e], "epoch {e}: {} -> {}", losses[e], losses[e + 50]);
    }
    assert!(out.reports.iter().all(|r| r.train_loss >= 0.0));
}

#[test]
fn training_is_bitwise_reproducible() {
    let set = tiny_set(12, 3);
    let val = tiny_set(4, 4);
    let init = ModelParameters::new(tiny_config(), 3).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 15,
        batch_size: 5,
        seed: 9,
        ..TrainingConfig::default()
    };
    let a = train(&init, &set, &val, &cfg).unwrap();
    let b = train(&init, &set, &val, &cfg).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.model, b.model);
    let c = train(&init, &set, &val, &TrainingConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.reports, c.reports);
}

#[test]
fn returns_best_validation_checkpoint() {
    let set = tiny_set(16, 5);
    // Labels flipped relative to the pattern seen in training, so
    // validation loss rises once the model fits the training set.
    let mut val = tiny_set(6, 6);
    val.iter_mut().for_each(|e| e.label = 1 - e.label);
    let init = ModelParameters::new(tiny_config(), 5).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 30,
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let out = train(&init, &set, &val, &cfg).unwrap();
    let best = out.best_epoch.unwrap();
    let min = out.reports.iter().map(|r| r.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(out.reports[best].val_loss, Some(min));
    let (loss, acc) = evaluate(&out.model, &val).unwrap();
    assert_eq!(loss, min);
    assert_eq!(Some(acc), out.reports[best].val_accuracy);
}

#[test]
fn zero_epochs_returns_initial_model() {
    let init = ModelParameters::new(tiny_config(), 6).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 0,
        ..TrainingConfig::default()
    };
    let out = train(&init, &tiny_set(3, 1), &[], &cfg).unwrap();
    assert_eq!(out.model, init);
    assert!(out.reports.is_empty());
    assert_eq!(out.best_epoch, None);
}

#[test]
fn bad_datasets_are_rejected() {
    let init = ModelParameters::new(tiny_config(), 7).unwrap();
    let cfg = TrainingConfig::default();
    assert!(matches!(train(&init, &[], &[], &cfg), Err(Error::EmptyDataset)));
    let mut wrong = tiny_set(2, 1);
    wrong[1].window = Matrix::zeros(9, 4);
    assert!(matches!(train(&init, &wrong, &[], &cfg), Err(Error::Shape { .. })));
    let mut bad_label = tiny_set(2, 1);
    bad_label[0].label = 2;
    assert!(matches!(train(&init, &bad_label, &[], &cfg), Err(Error::LabelOutOfRange { .. })));
}

#[test]
fn confident_correct_batch_has_zero_gradient() {
    let mut m = ModelParameters::new(tiny_config(), 8).unwrap();
    m.output_w = Matrix::zeros(m.output_w.rows(), m.output_w.cols());
    m.output_b = Matrix::column(vec![800.0, 0.0]).unwrap();
    let mut batch = tiny_set(4, 2);
    batch.iter_mut().for_each(|e| e.label = 0);
    let (g, loss) = bptt_gradients(&m, &batch).unwrap();
    assert_eq!(loss, 0.0);
    assert!(flat(&g).iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_batch_keeps_mean_loss_and_gradient() {
    let m = ModelParameters::new(tiny_config(), 9).unwrap();
    let batch = tiny_set(5, 3);
    let doubled: Vec<Example> = batch.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
    let (g1, l1) = bptt_gradients(&m, &batch).unwrap();
    let (g2, l2) = bptt_gradients(&m, &doubled).unwrap();
    assert!((l1 - l2).abs() <= 1e-15 * l1.abs().max(1.0));
    for (a, b) in flat(&g1).iter().zip(flat(&g2)) {
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

/// Scalar Adam over a few steps, one parameter at a time.
#[test]
fn adam_matches_scalar_reference() {
    let mut rng = SeededRng::new(10);
    let mut p = ModelParameters::new(NetworkConfig::new(Architecture::Unidirectional, 2, 2, 2, 3), 1).unwrap();
    let mut state = AdamState::new(&p);
    let mut reference = flat(&p);
    let mut m1 = vec![0.0; reference.len()];
    let mut m2 = vec![0.0; reference.len()];
    for step in 1..=5 {
        let mut g = p.zeros_like();
        for mat in g.matrices_mut() {
            *mat = random_matrix(mat.rows(), mat.cols(), 3.0, &mut rng);
        }
        let gv = flat(&g);
        let lr = 1e-2 / step as f64;
        adam_step(&mut p, &g, &mut state, lr).unwrap();
        for k in 0..reference.len() {
            m1[k] = 0.9 * m1[k] + 0.1 * gv[k];
            m2[k] = 0.999 * m2[k] + 0.001 * gv[k] * gv[k];
            let mh = m1[k] / (1.0 - 0.9f64.powi(step));
            let vh = m2[k] / (1.0 - 0.999f64.powi(step));
            reference[k] -= lr * mh / (vh.sqrt() + 1e-8);
        }
        for (a, b) in flat(&p).iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-15, "step {step}: {a} vs {b}");
        }
    }
}

proptest! {
    #[test]
    fn clipped_gradients_stay_in_range(values in proptest::collection::vec(-1e4f64..1e4, 1..40), clip in 0.1f64..50.0) {
        let mut g = ModelParameters::zeros(NetworkConfig::new(Architecture::Unidirectional, 2, 2, 2, 3)).unwrap();
        let mut k = 0;
        for m in g.matrices_mut() {
            let data = (0..m.len()).map(|i| values[(k + i) % values.len()]).collect();
            k += m.len();
            *m = Matrix::new(m.rows(), m.cols(), data).unwrap();
        }
        let before = flat(&g);
        clip_gradients(&mut g, clip);
        for (a, b) in before.iter().zip(flat(&g)) {
            prop_assert!(b.abs() <= clip);
            if a.abs() <= clip {
                prop_assert_eq!(*a, b);
            } else {
                prop_assert_eq!(b, clip.copysign(*a));
            }
        }
    }

    #[test]
    fn schedule_is_piecewise_constant(epoch in 0usize..5000, every in 1usize..300, factor in 0.01f64..=1.0) {
        let cfg = TrainingConfig { decay_every: every, decay_factor: factor, ..TrainingConfig::default() };
        let start = (epoch / every) * every;
        prop_assert_eq!(lr_schedule(&cfg, epoch), lr_schedule(&cfg, start));
        prop_assert!(lr_schedule(&cfg, epoch) <= cfg.learning_rate);
    }
}
