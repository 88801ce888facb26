use super::{check_len, check_vec, column, gate_params, preactivation, ParamBlock};
use crate::error::{shape_err, Result};
use crate::numeric::{InitScheme, Matrix, SeededRng};

/// `h = tanh(W_xh x + W_hh h_prev + b_h)`
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleRnnParams {
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleRnnTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

impl SimpleRnnParams {
    pub fn new(input: usize, hidden: usize, scheme: InitScheme, rng: &mut SeededRng) -> Self {
        let (w_xh, w_hh, b_h) = gate_params(input, hidden, scheme, rng);
        Self { w_xh, w_hh, b_h }
    }

    pub fn input_size(&self) -> usize {
        self.w_xh.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_xh.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        if self.w_hh.shape() != (h, h) || self.b_h.shape() != (h, 1) {
            return Err(shape_err("SimpleRnnParams", format!("hidden size {h}"), "inconsistent blocks"));
        }
        Ok(())
    }
}

impl ParamBlock for SimpleRnnParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w_xh", &self.w_xh), ("w_hh", &self.w_hh), ("b_h", &self.b_h)]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_xh, &mut self.w_hh, &mut self.b_h]
    }
}

pub fn simple_rnn_step(p: &SimpleRnnParams, x: &Matrix, h_prev: &Matrix) -> Result<(Matrix, SimpleRnnTape)> {
    check_vec("simple_rnn_step", "x", x, p.input_size())?;
    check_vec("simple_rnn_step", "h_prev", h_prev, p.hidden_size())?;
    let mut h = preactivation(&p.w_xh, &p.w_hh, &p.b_h, x.as_slice(), h_prev.as_slice());
    h.iter_mut().for_each(|v| *v = v.tanh());
    let tape = SimpleRnnTape {
        x: x.as_slice().to_vec(),
        h_prev: h_prev.as_slice().to_vec(),
        h: h.clone(),
    };
    Ok((column(h), tape))
}

/// Returns `(grad_x, grad_h_prev)`.
pub fn simple_rnn_backward_acc(
    p: &SimpleRnnParams,
    tape: &SimpleRnnTape,
    dh: &[f64],
    grads: &mut SimpleRnnParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hidden = p.hidden_size();
    check_len("simple_rnn_backward", "tape.x", &tape.x, p.input_size())?;
    check_len("simple_rnn_backward", "tape.h", &tape.h, hidden)?;
    check_len("simple_rnn_backward", "grad_h", dh, hidden)?;

    let da: Vec<f64> = dh.iter().zip(&tape.h).map(|(d, h)| d * (1.0 - h * h)).collect();
    grads.w_xh.outer_acc(&da, &tape.x);
    grads.w_hh.outer_acc(&da, &tape.h_prev);
    grads.b_h.add_slice(&da);

    let mut dx = vec![0.0; p.input_size()];
    p.w_xh.tmatvec_acc(&da, &mut dx);
    let mut dh_prev = vec![0.0; hidden];
    p.w_hh.tmatvec_acc(&da, &mut dh_prev);
    Ok((dx, dh_prev))
}

pub fn simple_rnn_backward(
    p: &SimpleRnnParams,
    tape: &SimpleRnnTape,
    dh: &Matrix,
) -> Result<(SimpleRnnParams, Matrix, Matrix)> {
    let mut grads = SimpleRnnParams::new(p.input_size(), p.hidden_size(), InitScheme::Zeros, &mut SeededRng::new(0));
    let (dx, dh_prev) = simple_rnn_backward_acc(p, tape, dh.as_slice(), &mut grads)?;
    Ok((grads, column(dx), column(dh_prev)))
}
