//! Finite-difference gradient checks against the analytic backward passes.

use dap_core::cells::{cell_backward, CellKind, CellParams, CellState, ParamBlock};
use dap_core::datapipe::Example;
use dap_core::network::{predict, Architecture, ModelParameters, NetworkConfig};
use dap_core::numeric::{InitScheme, Matrix, SeededRng};
use dap_core::training::{bptt_gradients, cross_entropy_loss};

use super::{central_diff, random_matrix, rel_err};

pub const EPS: f64 = 1e-5;
/// Denominator floor for the relative error. A central difference at
/// `EPS = 1e-5` carries roughly 1e-11 to 1e-10 of absolute error (roundoff
/// plus truncation), so below this floor entries are judged on absolute
/// error `< 1e-5 * REL_FLOOR` instead.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Default, Clone, Copy)]
pub struct CheckResult {
    pub max_rel: f64,
    pub checked: usize,
    /// `(analytic, numeric)` at the worst entry.
    pub worst: (f64, f64),
}

impl CheckResult {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let e = rel_err(analytic, numeric, REL_FLOOR);
        if e >= self.max_rel {
            self.max_rel = e;
            self.worst = (analytic, numeric);
        }
        self.checked += 1;
    }
}

pub fn random_cell(kind: CellKind, input: usize, hidden: usize, rng: &mut SeededRng) -> CellParams {
    let mut cell = CellParams::new(kind, input, hidden, InitScheme::Zeros, rng);
    for m in cell.matrices_mut() {
        *m = random_matrix(m.rows(), m.cols(), 0.6, rng);
    }
    cell
}

pub fn random_model(config: NetworkConfig, rng: &mut SeededRng) -> ModelParameters {
    let mut model = ModelParameters::zeros(config).unwrap();
    for m in model.matrices_mut() {
        *m = random_matrix(m.rows(), m.cols(), 0.6, rng);
    }
    model
}

/// Loss `a·h' + b·c'` of one step, for fixed projection vectors.
fn step_loss(cell: &CellParams, x: &Matrix, state: &CellState, a: &[f64], b: &[f64]) -> f64 {
    let (next, _) = cell.step(x, state).unwrap();
    let mut l: f64 = next.h.as_slice().iter().zip(a).map(|(h, a)| h * a).sum();
    if let Some(c) = &next.c {
        l += c.as_slice().iter().zip(b).map(|(c, b)| c * b).sum::<f64>();
    }
    l
}

/// Checks parameter, input and previous-state gradients of one cell step.
pub fn check_cell(kind: CellKind, input: usize, hidden: usize, seed: u64) -> CheckResult {
    let mut rng = SeededRng::new(seed);
    let cell = random_cell(kind, input, hidden, &mut rng);
    let x = random_matrix(input, 1, 1.0, &mut rng);
    let h = random_matrix(hidden, 1, 0.8, &mut rng);
    let c = (kind == CellKind::Lstm).then(|| random_matrix(hidden, 1, 1.0, &mut rng));
    let state = CellState { h, c };
    let a: Vec<f64> = (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let b: Vec<f64> = (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect();

    let (_, tape) = cell.step(&x, &state).unwrap();
    let grad_out = CellState {
        h: Matrix::column(a.clone()).unwrap(),
        c: state.c.as_ref().map(|_| Matrix::column(b.clone()).unwrap()),
    };
    let (grads, dx, dstate) = cell_backward(&cell, &tape, &grad_out).unwrap();
    let mut res = CheckResult::default();

    let n_mats = cell.named().len();
    for j in 0..n_mats {
        let base = cell.named()[j].1.clone();
        let analytic = grads.named()[j].1.clone();
        for idx in 0..base.len() {
            let num = central_diff(&base, idx, EPS, &mut |m| {
                let mut p = cell.clone();
                *p.matrices_mut()[j] = m.clone();
                step_loss(&p, &x, &state, &a, &b)
            });
            res.record(analytic.as_slice()[idx], num);
        }
    }
    for idx in 0..input {
        let num = central_diff(&x, idx, EPS, &mut |m| step_loss(&cell, m, &state, &a, &b));
        res.record(dx.as_slice()[idx], num);
    }
    for idx in 0..hidden {
        let num = central_diff(&state.h, idx, EPS, &mut |m| {
            let s = CellState {
                h: m.clone(),
                c: state.c.clone(),
            };
            step_loss(&cell, &x, &s, &a, &b)
        });
        res.record(dstate.h.as_slice()[idx], num);
    }
    if let (Some(c), Some(dc)) = (&state.c, &dstate.c) {
        for idx in 0..hidden {
            let num = central_diff(c, idx, EPS, &mut |m| {
                let s = CellState {
                    h: state.h.clone(),
                    c: Some(m.clone()),
                };
                step_loss(&cell, &x, &s, &a, &b)
            });
            res.record(dc.as_slice()[idx], num);
        }
    }
    res
}

fn mean_loss(m: &ModelParameters, batch: &[Example]) -> f64 {
    batch
        .iter()
        .map(|e| cross_entropy_loss(&predict(m, &e.window).unwrap(), e.label).unwrap())
        .sum::<f64>()
        / batch.len() as f64
}

pub fn random_batch(config: &NetworkConfig, n: usize, rng: &mut SeededRng) -> Vec<Example> {
    (0..n)
        .map(|i| Example {
            window: random_matrix(config.window_length, config.input_size, 1.0, rng),
            label: i % config.num_classes,
            time_to_event: None,
            session_id: "g".into(),
            end_time: 0.0,
        })
        .collect()
}

/// Every parameter of `config`'s model against central differences of the
/// mean cross-entropy over a random batch.
pub fn check_model(config: NetworkConfig, batch_size: usize, seed: u64) -> CheckResult {
    let mut rng = SeededRng::new(seed);
    let model = random_model(config.clone(), &mut rng);
    let batch = random_batch(&config, batch_size, &mut rng);
    let (grads, _) = bptt_gradients(&model, &batch).unwrap();
    let mut res = CheckResult::default();
    let n_mats = model.named_matrices().len();
    for j in 0..n_mats {
        let base = model.named_matrices()[j].1.clone();
        let analytic = grads.named_matrices()[j].1.clone();
        for idx in 0..base.len() {
            let num = central_diff(&base, idx, EPS, &mut |mat| {
                let mut p = model.clone();
                *p.matrices_mut()[j] = mat.clone();
                mean_loss(&p, &batch)
            });
            res.record(analytic.as_slice()[idx], num);
        }
    }
    res
}

/// The checks behind the gradient-fidelity criterion: each cell kind, then
/// the Bi and Uni classifiers at hidden 3, T = 5, 2 classes, 4 features.
pub fn full_suite() -> Vec<(String, CheckResult)> {
    let mut out = Vec::new();
    for (i, kind) in [CellKind::Simple, CellKind::Lstm, CellKind::Gru].into_iter().enumerate() {
        out.push((format!("{} cell", kind.as_str()), check_cell(kind, 4, 3, 100 + i as u64)));
    }
    for arch in [Architecture::Bidirectional, Architecture::Unidirectional] {
        let cfg = NetworkConfig::new(arch, 4, 3, 2, 5);
        out.push((format!("{} model", arch.name()), check_model(cfg, 2, 7)));
    }
    out
}
