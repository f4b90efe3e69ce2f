//! Restricted Boltzmann machine over flattened voxel grids.
//!
//! Visible unit `i` is voxel `i` in x-fastest order, hidden units are learned
//! features. With visible bias `b` and hidden bias `c`,
//!
//! ```text
//! E(v, h)       = -b.v - c.h - v.W.h
//! P(h_j = 1|v)  = sigmoid(W[:, j].v + c_j)
//! P(v_i = 1|h)  = sigmoid(W[i, :].h + b_i)
//! ```

mod io;
mod posterior;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MAGIC};
pub use posterior::{export_weights, posterior_predictive};
pub use train::{cd_gradient, train_cd, CdConfig, EpochRecord, RbmGradient, TrainingLog};

use crate::rng;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RbmError {
    #[error("{what}: expected length {expected}, got {actual}")]
    ShapeMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("grid {index} has dims {actual:?}, expected {expected:?}")]
    DimsMismatch { index: usize, expected: [usize; 3], actual: [usize; 3] },
    #[error("training grid {0} is not binary")]
    NonBinary(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("hidden index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("non-finite parameter: {0}")]
    NonFinite(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RbmError> = std::result::Result<T, E>;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    dims: [usize; 3],
    /// `m x n`, visible by hidden.
    pub weights: Array2<f64>,
    /// `b`, length `m`.
    pub visible_bias: Array1<f64>,
    /// `c`, length `n`.
    pub hidden_bias: Array1<f64>,
}

impl RbmModel {
    pub fn from_parts(
        dims: [usize; 3],
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let m: usize = dims.iter().product();
        let (rows, n) = weights.dim();
        if m == 0 || n == 0 {
            return Err(RbmError::InvalidConfig("visible and hidden counts must be positive".into()));
        }
        check_len("weight rows", m, rows)?;
        check_len("visible bias", m, visible_bias.len())?;
        check_len("hidden bias", n, hidden_bias.len())?;
        let model = Self { dims, weights, visible_bias, hidden_bias };
        if !model.is_finite() {
            return Err(RbmError::NonFinite("model parameters".into()));
        }
        Ok(model)
    }

    pub fn zeros(dims: [usize; 3], n_hidden: usize) -> Result<Self> {
        let m: usize = dims.iter().product();
        Self::from_parts(dims, Array2::zeros((m, n_hidden)), Array1::zeros(m), Array1::zeros(n_hidden))
    }

    /// `W ~ Normal(0, sigma)`, zero biases, drawn from stream 0 of `seed`.
    pub fn init(dims: [usize; 3], n_hidden: usize, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| RbmError::InvalidConfig(format!("weight init sigma {sigma}: {e}")))?;
        let mut model = Self::zeros(dims, n_hidden)?;
        let mut rng = rng::stream(seed, 0);
        model.weights.mapv_inplace(|_| normal.sample(&mut rng));
        Ok(model)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.visible_bias).chain(&self.hidden_bias).all(|x| x.is_finite())
    }

    /// `E(v, h) = -b.v - c.h - v.W.h`.
    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        check_len("visible vector", self.n_visible(), v.len())?;
        check_len("hidden vector", self.n_hidden(), h.len())?;
        let v = ndarray::ArrayView1::from(v);
        let h = ndarray::ArrayView1::from(h);
        Ok(-self.visible_bias.dot(&v) - self.hidden_bias.dot(&h) - v.dot(&self.weights).dot(&h))
    }

    /// `P(h_j = 1 | v)` for every hidden unit.
    pub fn hidden_probs(&self, v: &[f64]) -> Result<Array1<f64>> {
        check_len("visible vector", self.n_visible(), v.len())?;
        Ok(self.hidden_probs_view(ndarray::ArrayView1::from(v)))
    }

    pub(crate) fn hidden_probs_view(&self, v: ndarray::ArrayView1<f64>) -> Array1<f64> {
        (v.dot(&self.weights) + &self.hidden_bias).mapv(sigmoid)
    }

    pub(crate) fn visible_probs_view(&self, h: ndarray::ArrayView1<f64>) -> Array1<f64> {
        (self.weights.dot(&h) + &self.visible_bias).mapv(sigmoid)
    }

    /// `P(v_i = 1 | h)` for every visible unit.
    pub fn visible_probs(&self, h: &[f64]) -> Result<Array1<f64>> {
        check_len("hidden vector", self.n_hidden(), h.len())?;
        Ok(self.visible_probs_view(ndarray::ArrayView1::from(h)))
    }

    /// One block Gibbs sweep `h' ~ P(h | v)`, `v' ~ P(v | h')`; returns
    /// `(v', h')`.
    pub fn gibbs_step(&self, v: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = bernoulli(self.hidden_probs(v)?.as_slice().unwrap(), rng);
        let v_next = bernoulli(self.visible_probs(&h)?.as_slice().unwrap(), rng);
        Ok((v_next, h))
    }
}

/// Independent Bernoulli draws, one uniform per component in order.
pub fn bernoulli(probs: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    probs.iter().map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect()
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(RbmError::ShapeMismatch { what, expected, actual })
    }
}
