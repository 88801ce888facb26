//! Dense linear algebra, activations, initialization and the seeded RNG.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::SeededRng;

/// Logistic sigmoid, branching on sign so `exp` never overflows.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    map(x, sigmoid_scalar)
}

pub fn tanh(x: &Matrix) -> Matrix {
    map(x, f64::tanh)
}

/// Column-wise softmax with max subtraction.
pub fn softmax(x: &Matrix) -> Matrix {
    let (rows, cols) = x.shape();
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        let max = (0..rows).map(|r| x.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in 0..rows {
            let e = (x.get(r, c) - max).exp();
            out[r * cols + c] = e;
            sum += e;
        }
        for r in 0..rows {
            out[r * cols + c] /= sum;
        }
    }
    Matrix::from_vec_unchecked(rows, cols, out)
}

/// Softmax of a plain slice, same algorithm as [`softmax`].
pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn map(x: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let data = x.as_slice().iter().map(|&v| f(v)).collect();
    Matrix::from_vec_unchecked(x.rows(), x.cols(), data)
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Zeros,
    /// Uniform in `±sqrt(6 / (rows + cols))`.
    UniformScaled,
    /// Uniform in `±limit`.
    Uniform(f64),
}

impl InitScheme {
    pub fn limit(&self, rows: usize, cols: usize) -> f64 {
        match *self {
            InitScheme::Zeros => 0.0,
            InitScheme::UniformScaled => (6.0 / (rows + cols) as f64).sqrt(),
            InitScheme::Uniform(limit) => limit,
        }
    }
}

pub fn init_weights(rows: usize, cols: usize, scheme: InitScheme, rng: &mut SeededRng) -> Matrix {
    if scheme == InitScheme::Zeros {
        return Matrix::zeros(rows, cols);
    }
    let limit = scheme.limit(rows, cols);
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}
