use super::{check_len, check_vec, column, gate_params, preactivation, CellState, ParamBlock};
use crate::error::{shape_err, Result};
use crate::numeric::{sigmoid_scalar, InitScheme, Matrix, SeededRng};

/// Standard LSTM without peepholes:
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub u_i: Matrix,
    pub b_i: Matrix,
    pub w_f: Matrix,
    pub u_f: Matrix,
    pub b_f: Matrix,
    pub w_o: Matrix,
    pub u_o: Matrix,
    pub b_o: Matrix,
    pub w_g: Matrix,
    pub u_g: Matrix,
    pub b_g: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, scheme: InitScheme, rng: &mut SeededRng) -> Self {
        let (w_i, u_i, b_i) = gate_params(input, hidden, scheme, rng);
        let (w_f, u_f, b_f) = gate_params(input, hidden, scheme, rng);
        let (w_o, u_o, b_o) = gate_params(input, hidden, scheme, rng);
        let (w_g, u_g, b_g) = gate_params(input, hidden, scheme, rng);
        Self { w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_g, u_g, b_g }
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, n) = (self.hidden_size(), self.input_size());
        for (w, u, b) in [
            (&self.w_i, &self.u_i, &self.b_i),
            (&self.w_f, &self.u_f, &self.b_f),
            (&self.w_o, &self.u_o, &self.b_o),
            (&self.w_g, &self.u_g, &self.b_g),
        ] {
            if w.shape() != (h, n) || u.shape() != (h, h) || b.shape() != (h, 1) {
                return Err(shape_err("LstmParams", format!("hidden {h}, input {n}"), "inconsistent gate blocks"));
            }
        }
        Ok(())
    }
}

impl ParamBlock for LstmParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_i", &self.w_i),
            ("u_i", &self.u_i),
            ("b_i", &self.b_i),
            ("w_f", &self.w_f),
            ("u_f", &self.u_f),
            ("b_f", &self.b_f),
            ("w_o", &self.w_o),
            ("u_o", &self.u_o),
            ("b_o", &self.b_o),
            ("w_g", &self.w_g),
            ("u_g", &self.u_g),
            ("b_g", &self.b_g),
        ]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_i,
            &mut self.u_i,
            &mut self.b_i,
            &mut self.w_f,
            &mut self.u_f,
            &mut self.b_f,
            &mut self.w_o,
            &mut self.u_o,
            &mut self.b_o,
            &mut self.w_g,
            &mut self.u_g,
            &mut self.b_g,
        ]
    }
}

pub fn lstm_step(p: &LstmParams, x: &Matrix, state: &CellState) -> Result<(CellState, LstmTape)> {
    let hidden = p.hidden_size();
    check_vec("lstm_step", "x", x, p.input_size())?;
    check_vec("lstm_step", "h_prev", &state.h, hidden)?;
    let c_prev = match &state.c {
        Some(c) => {
            check_vec("lstm_step", "c_prev", c, hidden)?;
            c.as_slice().to_vec()
        }
        None => return Err(shape_err("lstm_step", "state with memory cell", "state without c")),
    };
    let (xs, hs) = (x.as_slice(), state.h.as_slice());

    let mut i = preactivation(&p.w_i, &p.u_i, &p.b_i, xs, hs);
    let mut f = preactivation(&p.w_f, &p.u_f, &p.b_f, xs, hs);
    let mut o = preactivation(&p.w_o, &p.u_o, &p.b_o, xs, hs);
    let mut g = preactivation(&p.w_g, &p.u_g, &p.b_g, xs, hs);
    i.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    f.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    o.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());

    let c: Vec<f64> = (0..hidden).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let next = CellState {
        h: column(h),
        c: Some(column(c.clone())),
    };
    let tape = LstmTape {
        x: xs.to_vec(),
        h_prev: hs.to_vec(),
        c_prev,
        i,
        f,
        o,
        g,
        c,
        tanh_c,
    };
    Ok((next, tape))
}

/// Returns `(grad_x, grad_h_prev, grad_c_prev)` given upstream gradients on
/// the step's `h'` and `c'`.
pub fn lstm_backward_acc(
    p: &LstmParams,
    t: &LstmTape,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let hidden = p.hidden_size();
    check_len("lstm_backward", "tape.x", &t.x, p.input_size())?;
    check_len("lstm_backward", "tape.c", &t.c, hidden)?;
    check_len("lstm_backward", "grad_h", dh, hidden)?;
    check_len("lstm_backward", "grad_c", dc, hidden)?;

    let mut da_i = vec![0.0; hidden];
    let mut da_f = vec![0.0; hidden];
    let mut da_o = vec![0.0; hidden];
    let mut da_g = vec![0.0; hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let dc_total = dc[k] + dh[k] * t.o[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
        let d_o = dh[k] * t.tanh_c[k];
        let d_i = dc_total * t.g[k];
        let d_g = dc_total * t.i[k];
        let d_f = dc_total * t.c_prev[k];
        dc_prev[k] = dc_total * t.f[k];
        da_i[k] = d_i * t.i[k] * (1.0 - t.i[k]);
        da_f[k] = d_f * t.f[k] * (1.0 - t.f[k]);
        da_o[k] = d_o * t.o[k] * (1.0 - t.o[k]);
        da_g[k] = d_g * (1.0 - t.g[k] * t.g[k]);
    }

    let mut dx = vec![0.0; p.input_size()];
    let mut dh_prev = vec![0.0; hidden];
    let gates = [
        (&p.w_i, &p.u_i, &da_i),
        (&p.w_f, &p.u_f, &da_f),
        (&p.w_o, &p.u_o, &da_o),
        (&p.w_g, &p.u_g, &da_g),
    ];
    for (w, u, da) in gates {
        w.tmatvec_acc(da, &mut dx);
        u.tmatvec_acc(da, &mut dh_prev);
    }
    let grad_gates = [
        (&mut grads.w_i, &mut grads.u_i, &mut grads.b_i, &da_i),
        (&mut grads.w_f, &mut grads.u_f, &mut grads.b_f, &da_f),
        (&mut grads.w_o, &mut grads.u_o, &mut grads.b_o, &da_o),
        (&mut grads.w_g, &mut grads.u_g, &mut grads.b_g, &da_g),
    ];
    for (gw, gu, gb, da) in grad_gates {
        gw.outer_acc(da, &t.x);
        gu.outer_acc(da, &t.h_prev);
        gb.add_slice(da);
    }
    Ok((dx, dh_prev, dc_prev))
}

/// Returns `(grad_params, grad_x, grad_state_prev)`.
pub fn lstm_backward(p: &LstmParams, t: &LstmTape, grad_out: &CellState) -> Result<(LstmParams, Matrix, CellState)> {
    let mut grads = LstmParams::new(p.input_size(), p.hidden_size(), InitScheme::Zeros, &mut SeededRng::new(0));
    let zeros = vec![0.0; p.hidden_size()];
    let dc = grad_out.c.as_ref().map_or(zeros.as_slice(), |c| c.as_slice());
    let (dx, dh, dc_prev) = lstm_backward_acc(p, t, grad_out.h.as_slice(), dc, &mut grads)?;
    Ok((
        grads,
        column(dx),
        CellState {
            h: column(dh),
            c: Some(column(dc_prev)),
        },
    ))
}
