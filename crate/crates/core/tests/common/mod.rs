//! Independent reference implementations used as test oracles.
//!
//! Everything here works on plain nested `Vec`s with naive loops so it
//! shares no arithmetic code with the library.

#![allow(dead_code)]

use dap_core::cells::{CellParams, GruParams, LstmParams, SimpleRnnParams};
use dap_core::network::ModelParameters;
use dap_core::numeric::{Matrix, SeededRng};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &Matrix) -> Mat {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect()).collect()
}

pub fn to_vec(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, 0)).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W x + U h + b`, one row at a time.
fn affine(w: &Matrix, u: &Matrix, b: &Matrix, x: &[f64], h: &[f64]) -> Vec<f64> {
    let (w, u, b) = (to_mat(w), to_mat(u), to_vec(b));
    (0..b.len())
        .map(|r| {
            let mut s = b[r];
            for (c, xv) in x.iter().enumerate() {
                s += w[r][c] * xv;
            }
            for (c, hv) in h.iter().enumerate() {
                s += u[r][c] * hv;
            }
            s
        })
        .collect()
}

pub fn simple_ref(p: &SimpleRnnParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    affine(&p.w_xh, &p.w_hh, &p.b_h, x, h).into_iter().map(f64::tanh).collect()
}

/// Returns `(h, c)`.
pub fn lstm_ref(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let i: Vec<f64> = affine(&p.w_i, &p.u_i, &p.b_i, x, h).into_iter().map(sig).collect();
    let f: Vec<f64> = affine(&p.w_f, &p.u_f, &p.b_f, x, h).into_iter().map(sig).collect();
    let o: Vec<f64> = affine(&p.w_o, &p.u_o, &p.b_o, x, h).into_iter().map(sig).collect();
    let g: Vec<f64> = affine(&p.w_g, &p.u_g, &p.b_g, x, h).into_iter().map(f64::tanh).collect();
    let mut c_new = vec![0.0; h.len()];
    let mut h_new = vec![0.0; h.len()];
    for k in 0..h.len() {
        c_new[k] = f[k] * c[k] + i[k] * g[k];
        h_new[k] = o[k] * c_new[k].tanh();
    }
    (h_new, c_new)
}

pub fn gru_ref(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = affine(&p.w_z, &p.u_z, &p.b_z, x, h).into_iter().map(sig).collect();
    let r: Vec<f64> = affine(&p.w_r, &p.u_r, &p.b_r, x, h).into_iter().map(sig).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = affine(&p.w_h, &p.u_h, &p.b_h, x, &rh).into_iter().map(f64::tanh).collect();
    (0..h.len()).map(|k| (1.0 - z[k]) * h[k] + z[k] * cand[k]).collect()
}

/// Hidden sequence of one cell over `xs` from zero state, indexed by time.
pub fn run_cell_ref(cell: &CellParams, xs: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let n = cell_hidden(cell);
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        match cell {
            CellParams::Simple(p) => h = simple_ref(p, &xs[t], &h),
            CellParams::Lstm(p) => {
                let (h2, c2) = lstm_ref(p, &xs[t], &h, &c);
                h = h2;
                c = c2;
            }
            CellParams::Gru(p) => h = gru_ref(p, &xs[t], &h),
        }
        out[t] = h.clone();
    }
    out
}

fn cell_hidden(cell: &CellParams) -> usize {
    match cell {
        CellParams::Simple(p) => p.b_h.rows(),
        CellParams::Lstm(p) => p.b_i.rows(),
        CellParams::Gru(p) => p.b_z.rows(),
    }
}

/// Class probabilities of the whole stack for a `T x F` window.
pub fn network_ref(m: &ModelParameters, window: &Matrix) -> Vec<f64> {
    let mut seq: Vec<Vec<f64>> = to_mat(window);
    for layer in &m.layers {
        let fwd = run_cell_ref(&layer.forward, &seq, false);
        seq = match &layer.backward {
            Some(b) => {
                let bwd = run_cell_ref(b, &seq, true);
                fwd.into_iter().zip(bwd).map(|(mut f, b)| {
                    f.extend(b);
                    f
                }).collect()
            }
            None => fwd,
        };
    }
    let top = seq.last().unwrap();
    let w = to_mat(&m.output_w);
    let b = to_vec(&m.output_b);
    let logits: Vec<f64> = (0..b.len())
        .map(|r| b[r] + top.iter().enumerate().map(|(c, v)| w[r][c] * v).sum::<f64>())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Central difference of `f` with respect to entry `idx` of `m`.
pub fn central_diff(m: &Matrix, idx: usize, eps: f64, f: &mut dyn FnMut(&Matrix) -> f64) -> f64 {
    let mut plus = m.clone();
    let mut minus = m.clone();
    let v = m.as_slice()[idx];
    let (r, c) = (idx / m.cols(), idx % m.cols());
    plus.set(r, c, v + eps).unwrap();
    minus.set(r, c, v - eps).unwrap();
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

pub mod grad;
