use super::{check_len, check_vec, column, gate_params, preactivation, ParamBlock};
use crate::error::{shape_err, Result};
use crate::numeric::{sigmoid_scalar, InitScheme, Matrix, SeededRng};

/// Standard GRU:
///
/// ```text
/// z = σ(W_z x + U_z h + b_z)    r = σ(W_r x + U_r h + b_r)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// `r ⊙ h_prev`
    pub reset_h: Vec<f64>,
    pub candidate: Vec<f64>,
}

impl GruParams {
    pub fn new(input: usize, hidden: usize, scheme: InitScheme, rng: &mut SeededRng) -> Self {
        let (w_z, u_z, b_z) = gate_params(input, hidden, scheme, rng);
        let (w_r, u_r, b_r) = gate_params(input, hidden, scheme, rng);
        let (w_h, u_h, b_h) = gate_params(input, hidden, scheme, rng);
        Self { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, n) = (self.hidden_size(), self.input_size());
        for (w, u, b) in [
            (&self.w_z, &self.u_z, &self.b_z),
            (&self.w_r, &self.u_r, &self.b_r),
            (&self.w_h, &self.u_h, &self.b_h),
        ] {
            if w.shape() != (h, n) || u.shape() != (h, h) || b.shape() != (h, 1) {
                return Err(shape_err("GruParams", format!("hidden {h}, input {n}"), "inconsistent gate blocks"));
            }
        }
        Ok(())
    }
}

impl ParamBlock for GruParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

pub fn gru_step(p: &GruParams, x: &Matrix, h_prev: &Matrix) -> Result<(Matrix, GruTape)> {
    let hidden = p.hidden_size();
    check_vec("gru_step", "x", x, p.input_size())?;
    check_vec("gru_step", "h_prev", h_prev, hidden)?;
    let (xs, hs) = (x.as_slice(), h_prev.as_slice());

    let mut z = preactivation(&p.w_z, &p.u_z, &p.b_z, xs, hs);
    let mut r = preactivation(&p.w_r, &p.u_r, &p.b_r, xs, hs);
    z.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    r.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    let reset_h: Vec<f64> = r.iter().zip(hs).map(|(r, h)| r * h).collect();
    let mut candidate = preactivation(&p.w_h, &p.u_h, &p.b_h, xs, &reset_h);
    candidate.iter_mut().for_each(|v| *v = v.tanh());

    let h: Vec<f64> = (0..hidden)
        .map(|k| (1.0 - z[k]) * hs[k] + z[k] * candidate[k])
        .collect();
    let tape = GruTape {
        x: xs.to_vec(),
        h_prev: hs.to_vec(),
        z,
        r,
        reset_h,
        candidate,
    };
    Ok((column(h), tape))
}

/// Returns `(grad_x, grad_h_prev)`.
pub fn gru_backward_acc(
    p: &GruParams,
    t: &GruTape,
    dh: &[f64],
    grads: &mut GruParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hidden = p.hidden_size();
    check_len("gru_backward", "tape.x", &t.x, p.input_size())?;
    check_len("gru_backward", "tape.h_prev", &t.h_prev, hidden)?;
    check_len("gru_backward", "grad_h", dh, hidden)?;

    let mut dh_prev: Vec<f64> = (0..hidden).map(|k| dh[k] * (1.0 - t.z[k])).collect();
    let mut da_z = vec![0.0; hidden];
    let mut da_h = vec![0.0; hidden];
    for k in 0..hidden {
        let dz = dh[k] * (t.candidate[k] - t.h_prev[k]);
        da_z[k] = dz * t.z[k] * (1.0 - t.z[k]);
        da_h[k] = dh[k] * t.z[k] * (1.0 - t.candidate[k] * t.candidate[k]);
    }

    let mut d_reset_h = vec![0.0; hidden];
    p.u_h.tmatvec_acc(&da_h, &mut d_reset_h);
    let mut da_r = vec![0.0; hidden];
    for k in 0..hidden {
        let dr = d_reset_h[k] * t.h_prev[k];
        dh_prev[k] += d_reset_h[k] * t.r[k];
        da_r[k] = dr * t.r[k] * (1.0 - t.r[k]);
    }

    let mut dx = vec![0.0; p.input_size()];
    p.w_z.tmatvec_acc(&da_z, &mut dx);
    p.w_r.tmatvec_acc(&da_r, &mut dx);
    p.w_h.tmatvec_acc(&da_h, &mut dx);
    p.u_z.tmatvec_acc(&da_z, &mut dh_prev);
    p.u_r.tmatvec_acc(&da_r, &mut dh_prev);

    grads.w_z.outer_acc(&da_z, &t.x);
    grads.u_z.outer_acc(&da_z, &t.h_prev);
    grads.b_z.add_slice(&da_z);
    grads.w_r.outer_acc(&da_r, &t.x);
    grads.u_r.outer_acc(&da_r, &t.h_prev);
    grads.b_r.add_slice(&da_r);
    grads.w_h.outer_acc(&da_h, &t.x);
    grads.u_h.outer_acc(&da_h, &t.reset_h);
    grads.b_h.add_slice(&da_h);
    Ok((dx, dh_prev))
}

/// Returns `(grad_params, grad_x, grad_h_prev)`.
pub fn gru_backward(p: &GruParams, t: &GruTape, dh: &Matrix) -> Result<(GruParams, Matrix, Matrix)> {
    let mut grads = GruParams::new(p.input_size(), p.hidden_size(), InitScheme::Zeros, &mut SeededRng::new(0));
    let (dx, dh_prev) = gru_backward_acc(p, t, dh.as_slice(), &mut grads)?;
    Ok((grads, column(dx), column(dh_prev)))
}
