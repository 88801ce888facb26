mod common;

use common::{gru_ref, lstm_ref, network_ref, random_matrix, simple_ref, to_vec};
use dap_core::cells::{gru_step, lstm_step, simple_rnn_step, CellKind, CellParams, CellState};
use dap_core::network::{
    brnn_layer_forward, dbrnn_forward, dbrnn_forward_unidirectional, window_to_sequence, Architecture,
    ModelParameters, NetworkConfig,
};
use dap_core::numeric::{InitScheme, SeededRng};

const TOL: f64 = 1e-12;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn cell_steps_match_scalar_loops() {
    let mut rng = SeededRng::new(42);
    for _ in 0..20 {
        let x = random_matrix(6, 1, 2.0, &mut rng);
        let h = random_matrix(5, 1, 1.0, &mut rng);
        let c = random_matrix(5, 1, 1.5, &mut rng);
        let (xs, hs, cs) = (to_vec(&x), to_vec(&h), to_vec(&c));

        let CellParams::Simple(p) = common::grad::random_cell(CellKind::Simple, 6, 5, &mut rng) else { unreachable!() };
        let (out, _) = simple_rnn_step(&p, &x, &h).unwrap();
        assert!(max_diff(&to_vec(&out), &simple_ref(&p, &xs, &hs)) <= TOL);

        let CellParams::Lstm(p) = common::grad::random_cell(CellKind::Lstm, 6, 5, &mut rng) else { unreachable!() };
        let (out, _) = lstm_step(&p, &x, &CellState { h: h.clone(), c: Some(c.clone()) }).unwrap();
        let (h_ref, c_ref) = lstm_ref(&p, &xs, &hs, &cs);
        assert!(max_diff(&to_vec(&out.h), &h_ref) <= TOL);
        assert!(max_diff(&to_vec(out.c.as_ref().unwrap()), &c_ref) <= TOL);

        let CellParams::Gru(p) = common::grad::random_cell(CellKind::Gru, 6, 5, &mut rng) else { unreachable!() };
        let (out, _) = gru_step(&p, &x, &h).unwrap();
        assert!(max_diff(&to_vec(&out), &gru_ref(&p, &xs, &hs)) <= TOL);
    }
}

#[test]
fn classifiers_match_scalar_loops() {
    let mut rng = SeededRng::new(9);
    for (arch, seed) in [(Architecture::Bidirectional, 1), (Architecture::Unidirectional, 2)] {
        let cfg = NetworkConfig::new(arch, 7, 6, 3, 12);
        let m = ModelParameters::new(cfg, seed).unwrap();
        for _ in 0..5 {
            let w = random_matrix(12, 7, 1.0, &mut rng);
            let probs = match arch {
                Architecture::Bidirectional => dbrnn_forward(&m, &w).unwrap().0,
                _ => dbrnn_forward_unidirectional(&m, &w).unwrap().0,
            };
            assert!(max_diff(&to_vec(&probs), &network_ref(&m, &w)) <= TOL);
        }
    }
}

#[test]
fn default_sized_classifier_matches() {
    let m = ModelParameters::new(NetworkConfig::default(), 3).unwrap();
    let w = random_matrix(50, 50, 1.0, &mut SeededRng::new(4));
    let probs = dbrnn_forward(&m, &w).unwrap().0;
    assert!(max_diff(&to_vec(&probs), &network_ref(&m, &w)) <= TOL);
}

#[test]
fn bidirectional_layer_concatenates_directions() {
    let mut rng = SeededRng::new(5);
    let f = CellParams::new(CellKind::Lstm, 3, 2, InitScheme::Uniform(0.7), &mut rng);
    let b = CellParams::new(CellKind::Lstm, 3, 2, InitScheme::Uniform(0.7), &mut rng);
    let w = random_matrix(6, 3, 1.0, &mut rng);
    let xs = window_to_sequence(&w);
    let out = brnn_layer_forward(&f, &b, &xs).unwrap();
    let rows: Vec<Vec<f64>> = xs.iter().map(to_vec).collect();
    let fr = common::run_cell_ref(&f, &rows, false);
    let br = common::run_cell_ref(&b, &rows, true);
    for t in 0..6 {
        let v = to_vec(&out[t]);
        assert!(max_diff(&v[..2], &fr[t]) <= TOL);
        assert!(max_diff(&v[2..], &br[t]) <= TOL);
    }
}
