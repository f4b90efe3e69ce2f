//! Dense variational autoencoder over flattened voxel grids.
//!
//! The encoder maps a grid through tanh layers to the mean and log-variance
//! of a diagonal Gaussian over the latent `z`; the decoder mirrors the hidden
//! widths and ends in a per-voxel sigmoid. Gradients are derived by hand.

mod io;
mod latent;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MAGIC};
pub use latent::{latent_grid, latent_index, normal_quantile, LatentSample, DEFAULT_LATENT_BUDGET};
pub use train::{initial_model, train_vae, Optimizer, VaeEpochRecord, VaeTrainConfig, VaeTrainingLog};

use crate::posterior::{sample_moments, PosteriorSummary};
use crate::rbm::sigmoid;
use crate::rng;
use crate::volume::VoxelGrid;
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("{what}: expected length {expected}, got {actual}")]
    ShapeMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("grid {index} has dims {actual:?}, expected {expected:?}")]
    DimsMismatch { index: usize, expected: [usize; 3], actual: [usize; 3] },
    #[error("grid {index} has value {value} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {layer}")]
    NonFinite { layer: String },
    #[error("training diverged in epoch {epoch} ({reason}); last finite model kept")]
    Diverged { epoch: usize, reason: String, checkpoint: Box<VaeModel> },
    #[error("latent grid of {requested} points exceeds budget {budget}")]
    BudgetExceeded { requested: f64, budget: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VaeError> = std::result::Result<T, E>;

/// Fully connected layer `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Array2::zeros((output, input)), b: Array1::zeros(output) }
    }

    pub fn input_len(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.w.nrows()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Parameters in file and gradient order: encoder hidden layers, mean head,
/// log-variance head, decoder hidden layers, output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    dims: [usize; 3],
    hidden: Vec<usize>,
    latent_dim: usize,
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Encoder activations, starting with the input.
    enc: Vec<Array1<f64>>,
    pub mu: Array1<f64>,
    pub logvar: Array1<f64>,
    pub z: Array1<f64>,
    /// Decoder activations, starting with `z`.
    dec: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
}

/// Per-sample loss terms. `total = rec + kl_weight * kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboLoss {
    pub rec: f64,
    pub kl: f64,
    pub total: f64,
}

/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)`, the KL divergence from
/// `N(mu, diag(exp(logvar)))` to `N(0, I)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<LatentSample> {
    check_len("logvar", mu.len(), logvar.len())?;
    check_len("eps", mu.len(), eps.len())?;
    let z = mu.iter().zip(logvar).zip(eps).map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e).collect();
    Ok(LatentSample { z })
}

/// Binary cross-entropy `sum(-x ln p - (1 - x) ln(1 - p))` with
/// `p = sigmoid(logit)`, evaluated as `softplus(l) - x l`.
pub fn bce_with_logits(x: &[f64], logits: &[f64]) -> f64 {
    x.iter().zip(logits).map(|(&x, &l)| softplus(l) - x * l).sum()
}

fn softplus(l: f64) -> f64 {
    l.max(0.0) + (-l.abs()).exp().ln_1p()
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(VaeError::ShapeMismatch { what, expected, actual })
    }
}

fn check_finite(values: &Array1<f64>, layer: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(VaeError::NonFinite { layer: layer() })
    }
}

impl VaeModel {
    /// All-zero parameters.
    pub fn zeros(dims: [usize; 3], hidden: &[usize], latent_dim: usize) -> Result<Self> {
        let m: usize = dims.iter().product();
        if m == 0 || latent_dim == 0 || hidden.contains(&0) {
            return Err(VaeError::InvalidConfig(format!(
                "input {m}, hidden {hidden:?} and latent {latent_dim} sizes must be positive"
            )));
        }
        let mut enc_sizes = vec![m];
        enc_sizes.extend_from_slice(hidden);
        let last = *enc_sizes.last().unwrap();
        let mut layers: Vec<Dense> = enc_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        layers.push(Dense::zeros(last, latent_dim));
        layers.push(Dense::zeros(last, latent_dim));
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend(hidden.iter().rev());
        dec_sizes.push(m);
        layers.extend(dec_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])));
        Ok(Self { dims, hidden: hidden.to_vec(), latent_dim, layers })
    }

    /// Weights `~ Normal(0, 1 / sqrt(fan_in))` from stream 0 of `seed`, zero
    /// biases. The log-variance head starts scaled down by 10 so initial
    /// posteriors are close to unit variance.
    pub fn init(dims: [usize; 3], hidden: &[usize], latent_dim: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims, hidden, latent_dim)?;
        let mut rng = rng::stream(seed, 0);
        let logvar_index = model.hidden.len() + 1;
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let mut sigma = 1.0 / (layer.input_len() as f64).sqrt();
            if i == logvar_index {
                sigma *= 0.1;
            }
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            layer.w.mapv_inplace(|_| normal.sample(&mut rng));
        }
        Ok(model)
    }

    /// Builds a model from layers in file order, checking every shape.
    pub fn from_layers(dims: [usize; 3], hidden: &[usize], latent_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        let template = Self::zeros(dims, hidden, latent_dim)?;
        check_len("layer count", template.layers.len(), layers.len())?;
        for (t, l) in template.layers.iter().zip(&layers) {
            check_len("layer inputs", t.input_len(), l.input_len())?;
            check_len("layer outputs", t.output_len(), l.output_len())?;
            check_len("layer bias", t.output_len(), l.b.len())?;
        }
        let model = Self { layers, ..template };
        if !model.parameters().iter().all(|p| p.is_finite()) {
            return Err(VaeError::NonFinite { layer: "model parameters".into() });
        }
        Ok(model)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn n_enc(&self) -> usize {
        self.hidden.len()
    }

    pub fn mu_head(&self) -> &Dense {
        &self.layers[self.n_enc()]
    }

    pub fn logvar_head(&self) -> &Dense {
        &self.layers[self.n_enc() + 1]
    }

    pub fn logvar_head_mut(&mut self) -> &mut Dense {
        let i = self.n_enc() + 1;
        &mut self.layers[i]
    }

    fn encoder(&self) -> &[Dense] {
        &self.layers[..self.n_enc()]
    }

    fn decoder(&self) -> &[Dense] {
        &self.layers[self.n_enc() + 2..]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters flattened in file order (each layer's `W` row-major,
    /// then its bias).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len("parameter vector", self.param_count(), params.len())?;
        let mut it = params.iter();
        for l in &mut self.layers {
            for x in l.w.iter_mut().chain(l.b.iter_mut()) {
                *x = *it.next().unwrap();
            }
        }
        Ok(())
    }

    fn encode_hidden(&self, x: &[f64]) -> Result<Vec<Array1<f64>>> {
        check_len("input", self.input_len(), x.len())?;
        let mut acts = vec![Array1::from(x.to_vec())];
        for (i, layer) in self.encoder().iter().enumerate() {
            let a = layer.forward(acts.last().unwrap().view()).mapv(f64::tanh);
            check_finite(&a, || format!("encoder layer {i}"))?;
            acts.push(a);
        }
        Ok(acts)
    }

    /// `(mu, logvar)` of `q(z | x)`.
    pub fn encode(&self, x: &[f64]) -> Result<(Array1<f64>, Array1<f64>)> {
        let acts = self.encode_hidden(x)?;
        self.heads(acts.last().unwrap().view())
    }

    fn heads(&self, a: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let mu = self.mu_head().forward(a);
        check_finite(&mu, || "mean head".into())?;
        let logvar = self.logvar_head().forward(a);
        check_finite(&logvar, || "log-variance head".into())?;
        Ok((mu, logvar))
    }

    fn decode_hidden(&self, z: &[f64]) -> Result<(Vec<Array1<f64>>, Array1<f64>)> {
        check_len("latent", self.latent_dim, z.len())?;
        let dec = self.decoder();
        let mut acts = vec![Array1::from(z.to_vec())];
        for (i, layer) in dec[..dec.len() - 1].iter().enumerate() {
            let a = layer.forward(acts.last().unwrap().view()).mapv(f64::tanh);
            check_finite(&a, || format!("decoder layer {i}"))?;
            acts.push(a);
        }
        let logits = dec.last().unwrap().forward(acts.last().unwrap().view());
        check_finite(&logits, || "decoder output layer".into())?;
        Ok((acts, logits))
    }

    /// Per-voxel Bernoulli probabilities `p(x | z)`.
    pub fn decode(&self, z: &[f64]) -> Result<Array1<f64>> {
        Ok(self.decode_hidden(z)?.1.mapv(sigmoid))
    }

    /// Full pass `x -> (mu, logvar) -> z -> logits` with the given noise.
    pub fn forward(&self, x: &[f64], eps: &[f64]) -> Result<Forward> {
        check_len("eps", self.latent_dim, eps.len())?;
        let enc = self.encode_hidden(x)?;
        let (mu, logvar) = self.heads(enc.last().unwrap().view())?;
        let z = Array1::from(reparameterize(mu.as_slice().unwrap(), logvar.as_slice().unwrap(), eps)?.z);
        let (dec, logits) = self.decode_hidden(z.as_slice().unwrap())?;
        Ok(Forward { enc, mu, logvar, z, dec, logits })
    }

    pub fn elbo_loss(&self, x: &[f64], eps: &[f64], kl_weight: f64) -> Result<ElboLoss> {
        let f = self.forward(x, eps)?;
        Ok(loss_of(x, &f, kl_weight))
    }

    /// Loss and its gradient with respect to every parameter, laid out like
    /// the model's layers.
    pub fn loss_and_gradient(&self, x: &[f64], eps: &[f64], kl_weight: f64) -> Result<(ElboLoss, Vec<Dense>)> {
        let (loss, factors) = self.loss_and_gradient_factors(x, eps, kl_weight)?;
        Ok((loss, factors.iter().map(RankOne::to_dense).collect()))
    }

    /// Same gradient as [`VaeModel::loss_and_gradient`], kept factored: for
    /// one example each layer's weight gradient is `delta * input^T`.
    pub fn loss_and_gradient_factors(&self, x: &[f64], eps: &[f64], kl_weight: f64) -> Result<(ElboLoss, Vec<RankOne>)> {
        self.split_gradient_factors(x, x, eps, kl_weight)
    }

    /// Gradient factors when the encoder sees `input` but the decoder is
    /// scored against `target`.
    pub(crate) fn split_gradient_factors(
        &self,
        input: &[f64],
        target: &[f64],
        eps: &[f64],
        kl_weight: f64,
    ) -> Result<(ElboLoss, Vec<RankOne>)> {
        check_len("target", self.input_len(), target.len())?;
        let f = self.forward(input, eps)?;
        let x = target;
        let loss = loss_of(x, &f, kl_weight);
        let Forward { enc, mu, logvar, dec: dec_acts, logits, .. } = f;
        let mut grads: Vec<RankOne> = Vec::with_capacity(self.layers.len());

        // Decoder, walked backwards from d(loss)/d(logits) = sigmoid(l) - x.
        let x = ArrayView1::from(x);
        let mut delta = logits.mapv(sigmoid) - x;
        let mut dec_grads = Vec::new();
        let dec = self.decoder();
        for (j, input) in dec_acts.into_iter().enumerate().rev() {
            let mut next = dec[j].w.t().dot(&delta);
            // Every decoder input except z went through tanh.
            if j > 0 {
                next.zip_mut_with(&input, |d, &a| *d *= 1.0 - a * a);
            }
            dec_grads.push(RankOne { delta, input });
            delta = next;
        }
        let dz = delta;

        let sigma = logvar.mapv(|lv| (0.5 * lv).exp());
        let eps = ArrayView1::from(eps);
        let dmu = &dz + &(kl_weight * &mu);
        let dlogvar = &dz * &eps * &sigma * 0.5 + logvar.mapv(|lv| 0.5 * kl_weight * (lv.exp() - 1.0));

        let mut delta = self.mu_head().w.t().dot(&dmu) + self.logvar_head().w.t().dot(&dlogvar);
        let top = enc.last().unwrap().clone();
        let mu_grad = RankOne { delta: dmu, input: top.clone() };
        let lv_grad = RankOne { delta: dlogvar, input: top };

        let mut enc_grads = Vec::new();
        let encoder = self.encoder();
        let mut acts = enc;
        for i in (0..encoder.len()).rev() {
            let out = acts.pop().unwrap();
            delta.zip_mut_with(&out, |d, &a| *d *= 1.0 - a * a);
            let next = if i > 0 { Some(encoder[i].w.t().dot(&delta)) } else { None };
            enc_grads.push(RankOne { delta, input: acts.last().unwrap().clone() });
            delta = next.unwrap_or_default();
        }

        grads.extend(enc_grads.into_iter().rev());
        grads.push(mu_grad);
        grads.push(lv_grad);
        grads.extend(dec_grads.into_iter().rev());
        Ok((loss, grads))
    }

    /// Largest change in `mu` that perturbing the input by a vector of
    /// Euclidean norm `delta` can cause: tanh is 1-Lipschitz, so the product
    /// of the layers' Frobenius norms bounds the map.
    pub fn mean_lipschitz_bound(&self) -> f64 {
        let fro = |d: &Dense| d.w.iter().map(|w| w * w).sum::<f64>().sqrt();
        self.encoder().iter().map(fro).product::<f64>() * fro(self.mu_head())
    }
}

/// Single-example gradient of a dense layer: `dW = delta * input^T`,
/// `db = delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub delta: Array1<f64>,
    pub input: Array1<f64>,
}

impl RankOne {
    pub fn to_dense(&self) -> Dense {
        let w = self.delta.view().insert_axis(ndarray::Axis(1)).dot(&self.input.view().insert_axis(ndarray::Axis(0)));
        Dense { w, b: self.delta.clone() }
    }

    /// Squared Frobenius norm of the weight and bias gradient together.
    pub fn norm_sq(&self) -> f64 {
        let d = self.delta.dot(&self.delta);
        d * self.input.dot(&self.input) + d
    }

    /// `target += scale * gradient`.
    pub fn add_to(&self, target: &mut Dense, scale: f64) {
        for (mut row, &d) in target.w.rows_mut().into_iter().zip(&self.delta) {
            row.scaled_add(scale * d, &self.input);
        }
        target.b.scaled_add(scale, &self.delta);
    }
}

fn loss_of(x: &[f64], f: &Forward, kl_weight: f64) -> ElboLoss {
    let rec = bce_with_logits(x, f.logits.as_slice().unwrap());
    let kl = kl_divergence(f.mu.as_slice().unwrap(), f.logvar.as_slice().unwrap());
    ElboLoss { rec, kl, total: rec + kl_weight * kl }
}

/// Standard-normal noise vector of length `d`.
pub fn standard_normal(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Posterior-predictive reconstruction conditioned on `x_in`.
///
/// Encodes once, then for each sample draws `z_s = mu + sigma * eps_s` and
/// decodes. Returns per-voxel mean and population standard deviation of the
/// decoded probabilities. Sample `s` draws from stream `s` of a seed taken
/// from `rng`.
pub fn posterior_predictive_vae(
    x_in: &VoxelGrid,
    model: &VaeModel,
    n_samples: usize,
    rng: &mut impl RngCore,
) -> Result<PosteriorSummary> {
    if x_in.dims() != model.dims() {
        return Err(VaeError::DimsMismatch { index: 0, expected: model.dims(), actual: x_in.dims() });
    }
    if n_samples == 0 {
        return Err(VaeError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let base = rng::child_seed(rng);
    let (mu, logvar) = model.encode(&x_in.to_f64())?;
    let (mu, logvar) = (mu.to_vec(), logvar.to_vec());
    let d = model.latent_dim();
    // With finite parameters a decode can only fail through an infinite z.
    if logvar.iter().any(|&lv| lv > 1000.0) {
        return Err(VaeError::NonFinite { layer: "posterior standard deviation".into() });
    }
    let acc = sample_moments(model.input_len(), n_samples, base, |rng| {
        let eps = standard_normal(d, rng);
        let z = reparameterize(&mu, &logvar, &eps).expect("lengths match");
        model.decode(&z.z).expect("finite latent decodes").to_vec()
    });
    Ok(acc.into_summary(model.dims(), x_in.spacing()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn tiny() -> VaeModel {
        VaeModel::init([3, 2, 2], &[5], 2, 7).unwrap()
    }

    fn x() -> Vec<f64> {
        (0..12).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn layer_shapes() {
        let m = VaeModel::zeros([20, 20, 20], &[256, 64], 8).unwrap();
        let shapes: Vec<(usize, usize)> = m.layers().iter().map(|l| (l.input_len(), l.output_len())).collect();
        assert_eq!(shapes, vec![(8000, 256), (256, 64), (64, 8), (64, 8), (8, 64), (64, 256), (256, 8000)]);
        assert!(VaeModel::zeros([2, 2, 2], &[0], 2).is_err());
        assert!(VaeModel::zeros([2, 2, 2], &[3], 0).is_err());
    }

    #[test]
    fn zero_heads_give_standard_posterior() {
        let mut m = tiny();
        let n = m.n_enc();
        m.layers[n] = Dense::zeros(5, 2);
        m.layers[n + 1] = Dense::zeros(5, 2);
        let (mu, lv) = m.encode(&x()).unwrap();
        assert_eq!(mu.to_vec(), vec![0.0, 0.0]);
        assert_eq!(lv.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn encode_is_deterministic_and_lipschitz() {
        let m = tiny();
        let a = m.encode(&x()).unwrap();
        assert_eq!(a, m.encode(&x()).unwrap());
        let bound = m.mean_lipschitz_bound();
        for i in 0..12 {
            let mut y = x();
            y[i] = 1.0 - y[i];
            let (mu, _) = m.encode(&y).unwrap();
            let change = (&mu - &a.0).mapv(|d| d * d).sum().sqrt();
            assert!(change <= bound * 1.0 + 1e-12, "voxel {i}: {change} > {bound}");
        }
    }

    #[test]
    fn reparameterize_examples() {
        assert_eq!(reparameterize(&[1.0, -2.0], &[0.3, 4.0], &[0.0, 0.0]).unwrap().z, vec![1.0, -2.0]);
        assert_eq!(reparameterize(&[1.0, -2.0], &[0.0, 0.0], &[0.5, 0.25]).unwrap().z, vec![1.5, -1.75]);
        let z = reparameterize(&[1.0, 2.0], &[4f64.ln(), 0.0], &[0.5, -1.0]).unwrap().z;
        assert!((z[0] - 2.0).abs() < 1e-15 && z[1] == 1.0);
        assert!(reparameterize(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn decode_bounds_and_zero_model() {
        let zero = VaeModel::zeros([3, 2, 2], &[5], 2).unwrap();
        assert!(zero.decode(&[0.7, -3.0]).unwrap().iter().all(|&p| p == 0.5));
        let m = tiny();
        let mut rng = rng::stream(1, 0);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(m.decode(&z).unwrap().iter().all(|&p| p > 0.0 && p < 1.0));
        }
        assert!(m.decode(&[0.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.0; 3], &[0.0; 3]), 0.0);
        assert!((kl_divergence(&[1.0, 1.0], &[0.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_limits() {
        assert!(bce_with_logits(&[1.0, 0.0], &[40.0, -40.0]) < 1e-15);
        assert!((bce_with_logits(&[1.0], &[0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logits(&[1.0], &[-800.0]).is_finite());
    }

    #[test]
    fn gradient_layout_matches_layers() {
        let m = tiny();
        let (_, g) = m.loss_and_gradient(&x(), &[0.3, -0.2], 1.0).unwrap();
        assert_eq!(g.len(), m.layers().len());
        for (a, b) in g.iter().zip(m.layers()) {
            assert_eq!(a.w.dim(), b.w.dim());
            assert_eq!(a.b.len(), b.b.len());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = VaeModel::init([3, 2, 2], &[5, 4], 2, 21).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64 / 6.0).collect();
        let eps = [0.4, -1.1];
        let (_, g) = m.loss_and_gradient(&x, &eps, 0.7).unwrap();
        let analytic: Vec<f64> = g.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied().collect::<Vec<_>>()).collect();
        let theta = m.parameters();
        let h = 1e-5;
        for (i, &a) in analytic.iter().enumerate() {
            let mut probe = m.clone();
            let mut p = theta.clone();
            p[i] += h;
            probe.set_parameters(&p).unwrap();
            let up = probe.elbo_loss(&x, &eps, 0.7).unwrap().total;
            p[i] -= 2.0 * h;
            probe.set_parameters(&p).unwrap();
            let down = probe.elbo_loss(&x, &eps, 0.7).unwrap().total;
            let n = (up - down) / (2.0 * h);
            assert!((a - n).abs() <= (1e-4 * a.abs().max(n.abs())).max(1e-8), "param {i}: {a} vs {n}");
        }
    }

    #[test]
    fn parameters_roundtrip() {
        let m = tiny();
        let mut z = VaeModel::zeros([3, 2, 2], &[5], 2).unwrap();
        z.set_parameters(&m.parameters()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_parameters(&[0.0]).is_err());
    }

    #[test]
    fn posterior_examples() {
        let m = tiny();
        let grid = VoxelGrid::binary([3, 2, 2], [1.0; 3], x().iter().map(|&v| v as f32).collect()).unwrap();
        let one = posterior_predictive_vae(&grid, &m, 1, &mut rng::stream(0, 0)).unwrap();
        assert!(one.std.values().iter().all(|&s| s == 0.0));

        let many = posterior_predictive_vae(&grid, &m, 64, &mut rng::stream(0, 0)).unwrap();
        assert!(many.std.values().iter().all(|&s| (0.0..=0.5).contains(&s)));
        assert!(many.std.values().iter().any(|&s| s > 0.0));

        let mut collapsed = m.clone();
        let head = collapsed.logvar_head_mut();
        head.w.fill(0.0);
        head.b.fill(-50.0);
        let s = posterior_predictive_vae(&grid, &collapsed, 64, &mut rng::stream(0, 0)).unwrap();
        assert!(s.std.values().iter().all(|&s| s <= 1e-6));
    }

    proptest! {
        #[test]
        fn kl_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..6), lv in prop::collection::vec(-5.0f64..5.0, 6)) {
            let lv = &lv[..mu.len()];
            let kl = kl_divergence(&mu, lv);
            prop_assert!(kl >= 0.0);
            if mu.iter().chain(lv).any(|&v| v.abs() > 1e-3) {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn reparameterize_is_affine(mu in -3.0f64..3.0, lv in -4.0f64..4.0, e1 in -3.0f64..3.0, e2 in -3.0f64..3.0) {
            let z1 = reparameterize(&[mu], &[lv], &[e1]).unwrap().z[0];
            let z2 = reparameterize(&[mu], &[lv], &[e2]).unwrap().z[0];
            if (e1 - e2).abs() > 1e-6 {
                prop_assert!(((z1 - z2) / (e1 - e2) - (lv / 2.0).exp()).abs() < 1e-9);
            }
        }
    }
}
