//! Single-timestep recurrent cells (simple RNN, LSTM, GRU) with analytic
//! backward passes.
//!
//! Each forward step returns a tape holding the pre-activation results it
//! needs to differentiate itself; backward functions accumulate parameter
//! gradients into a caller-owned gradient struct of the same type as the
//! parameters and return the gradients flowing into the step's inputs.

mod gru;
mod lstm;
mod simple;

use serde::{Deserialize, Serialize};

pub use gru::{gru_backward, gru_backward_acc, gru_step, GruParams, GruTape};
pub use lstm::{lstm_backward, lstm_backward_acc, lstm_step, LstmParams, LstmTape};
pub use simple::{simple_rnn_backward, simple_rnn_backward_acc, simple_rnn_step, SimpleRnnParams, SimpleRnnTape};

use crate::error::{shape_err, Error, Result};
use crate::numeric::{InitScheme, Matrix, SeededRng};

/// Uniform access to the weight matrices of a parameter block, in a fixed
/// order. Gradients, optimizer state and serialization all rely on
/// `named` and `matrices_mut` enumerating the same matrices in the same order.
pub trait ParamBlock {
    fn named(&self) -> Vec<(&'static str, &Matrix)>;
    fn matrices_mut(&mut self) -> Vec<&mut Matrix>;

    fn param_count(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Simple,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Simple => "simple",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

/// Recurrent state carried between timesteps. `c` is present for LSTM only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Matrix,
    pub c: Option<Matrix>,
}

impl CellState {
    pub fn zeros(kind: CellKind, hidden: usize) -> Self {
        Self {
            h: Matrix::zeros(hidden, 1),
            c: (kind == CellKind::Lstm).then(|| Matrix::zeros(hidden, 1)),
        }
    }
}

/// Parameters of any cell kind.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Simple(SimpleRnnParams),
    Lstm(LstmParams),
    Gru(GruParams),
}

/// Forward cache of any cell kind.
#[derive(Debug, Clone, PartialEq)]
pub enum CellTape {
    Simple(SimpleRnnTape),
    Lstm(LstmTape),
    Gru(GruTape),
}

impl CellParams {
    pub fn new(kind: CellKind, input: usize, hidden: usize, scheme: InitScheme, rng: &mut SeededRng) -> Self {
        match kind {
            CellKind::Simple => CellParams::Simple(SimpleRnnParams::new(input, hidden, scheme, rng)),
            CellKind::Lstm => CellParams::Lstm(LstmParams::new(input, hidden, scheme, rng)),
            CellKind::Gru => CellParams::Gru(GruParams::new(input, hidden, scheme, rng)),
        }
    }

    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        Self::new(kind, input, hidden, InitScheme::Zeros, &mut SeededRng::new(0))
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Simple(_) => CellKind::Simple,
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            CellParams::Simple(p) => p.input_size(),
            CellParams::Lstm(p) => p.input_size(),
            CellParams::Gru(p) => p.input_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            CellParams::Simple(p) => p.hidden_size(),
            CellParams::Lstm(p) => p.hidden_size(),
            CellParams::Gru(p) => p.hidden_size(),
        }
    }

    /// A zero-valued block with identical shapes, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind(), self.input_size(), self.hidden_size())
    }

    pub fn zero_state(&self) -> CellState {
        CellState::zeros(self.kind(), self.hidden_size())
    }

    pub fn step(&self, x: &Matrix, state: &CellState) -> Result<(CellState, CellTape)> {
        match self {
            CellParams::Simple(p) => {
                let (h, tape) = simple_rnn_step(p, x, &state.h)?;
                Ok((CellState { h, c: None }, CellTape::Simple(tape)))
            }
            CellParams::Lstm(p) => {
                let (s, tape) = lstm_step(p, x, state)?;
                Ok((s, CellTape::Lstm(tape)))
            }
            CellParams::Gru(p) => {
                let (h, tape) = gru_step(p, x, &state.h)?;
                Ok((CellState { h, c: None }, CellTape::Gru(tape)))
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns
    /// `(grad_x, grad_state_prev)`.
    pub fn backward_acc(
        &self,
        tape: &CellTape,
        grad_out: &CellState,
        grads: &mut CellParams,
    ) -> Result<(Vec<f64>, CellState)> {
        let hidden = self.hidden_size();
        match (self, tape, grads) {
            (CellParams::Simple(p), CellTape::Simple(t), CellParams::Simple(g)) => {
                let (dx, dh) = simple_rnn_backward_acc(p, t, grad_out.h.as_slice(), g)?;
                Ok((dx, CellState { h: column(dh), c: None }))
            }
            (CellParams::Lstm(p), CellTape::Lstm(t), CellParams::Lstm(g)) => {
                let zero;
                let dc = match &grad_out.c {
                    Some(c) => c.as_slice(),
                    None => {
                        zero = vec![0.0; hidden];
                        &zero
                    }
                };
                let (dx, dh, dc_prev) = lstm_backward_acc(p, t, grad_out.h.as_slice(), dc, g)?;
                Ok((dx, CellState { h: column(dh), c: Some(column(dc_prev)) }))
            }
            (CellParams::Gru(p), CellTape::Gru(t), CellParams::Gru(g)) => {
                let (dx, dh) = gru_backward_acc(p, t, grad_out.h.as_slice(), g)?;
                Ok((dx, CellState { h: column(dh), c: None }))
            }
            (p, t, _) => Err(Error::TapeMismatch(format!(
                "{} parameters with {} tape or gradient block",
                p.kind().as_str(),
                tape_kind(t).as_str()
            ))),
        }
    }
}

fn tape_kind(t: &CellTape) -> CellKind {
    match t {
        CellTape::Simple(_) => CellKind::Simple,
        CellTape::Lstm(_) => CellKind::Lstm,
        CellTape::Gru(_) => CellKind::Gru,
    }
}

impl ParamBlock for CellParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            CellParams::Simple(p) => p.named(),
            CellParams::Lstm(p) => p.named(),
            CellParams::Gru(p) => p.named(),
        }
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            CellParams::Simple(p) => p.matrices_mut(),
            CellParams::Lstm(p) => p.matrices_mut(),
            CellParams::Gru(p) => p.matrices_mut(),
        }
    }
}

/// Gradients of one step w.r.t. parameters, input and previous state, for
/// zero-initialized gradient accumulators.
pub fn cell_backward(
    params: &CellParams,
    tape: &CellTape,
    grad_out: &CellState,
) -> Result<(CellParams, Matrix, CellState)> {
    let mut grads = params.zeros_like();
    let (dx, dstate) = params.backward_acc(tape, grad_out, &mut grads)?;
    Ok((grads, column(dx), dstate))
}

pub(crate) fn column(v: Vec<f64>) -> Matrix {
    let n = v.len();
    Matrix::from_vec_unchecked(n, 1, v)
}

pub(crate) fn check_vec(op: &'static str, what: &str, m: &Matrix, len: usize) -> Result<()> {
    if m.shape() != (len, 1) {
        return Err(shape_err(
            op,
            format!("{what} of shape {len}x1"),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(())
}

pub(crate) fn check_len(op: &'static str, what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(shape_err(op, format!("{what} of length {len}"), v.len()));
    }
    Ok(())
}

/// Input-weight block, recurrent-weight block and bias for one gate.
pub(crate) fn gate_params(
    input: usize,
    hidden: usize,
    scheme: InitScheme,
    rng: &mut SeededRng,
) -> (Matrix, Matrix, Matrix) {
    use crate::numeric::init_weights;
    let w = init_weights(hidden, input, scheme, rng);
    let u = init_weights(hidden, hidden, scheme, rng);
    (w, u, Matrix::zeros(hidden, 1))
}

/// `b + W x + U h` for one gate.
#[inline]
pub(crate) fn preactivation(w: &Matrix, u: &Matrix, b: &Matrix, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = b.as_slice().to_vec();
    w.matvec_acc(x, &mut a);
    u.matvec_acc(h, &mut a);
    a
}
