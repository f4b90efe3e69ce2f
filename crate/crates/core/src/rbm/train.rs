use super::{sigmoid, RbmError, RbmModel, Result};
use crate::rng;
use crate::volume::VoxelGrid;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdConfig {
    pub n_hidden: usize,
    /// Gibbs steps per update.
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init_sigma: f64,
    /// Start the visible bias at the log-odds of each voxel's training
    /// frequency instead of zero, so the weights model departures from the
    /// mean shape.
    pub data_visible_bias: bool,
    /// Take steps in the centered parameterization (offsets: training mean
    /// for visible units, 0.5 for hidden units). The trained model is the
    /// same energy family; only the update direction changes.
    pub centered: bool,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self { n_hidden: 64, k: 1, learning_rate: 0.003, epochs: 100, batch_size: 1, seed: 0, weight_init_sigma: 0.01, data_visible_bias: true, centered: true }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RbmError::InvalidConfig(msg));
        if self.n_hidden == 0 {
            return bad("n_hidden must be >= 1".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.weight_init_sigma.is_finite() && self.weight_init_sigma >= 0.0) {
            return bad(format!("weight_init_sigma must be finite and >= 0, got {}", self.weight_init_sigma));
        }
        Ok(())
    }
}

/// Batch-averaged CD statistics; the parameter update is `learning_rate`
/// times these.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the dataset of the summed binary cross-entropy between each
    /// grid and its one-step mean-field reconstruction.
    pub recon_cross_entropy: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.epochs.iter().map(|r| serde_json::to_string(r).expect("plain record") + "\n").collect()
    }
}

fn sample(probs: &Array2<f64>, rng: &mut impl Rng) -> Array2<f64> {
    probs.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

fn hidden_batch(model: &RbmModel, v: &ArrayView2<f64>) -> Array2<f64> {
    (v.dot(&model.weights) + &model.hidden_bias).mapv(sigmoid)
}

fn visible_batch(model: &RbmModel, h: &Array2<f64>) -> Array2<f64> {
    (h.dot(&model.weights.t()) + &model.visible_bias).mapv(sigmoid)
}

/// CD-k statistics for a batch (rows are visible vectors).
///
/// The chain runs on binary samples. The negative phase uses the mean-field
/// values `v_k = P(v | h_{k-1})` and `h_k = P(h | v_k)`; the positive phase
/// uses `h_0 = P(h | v_0)`.
pub fn cd_gradient(model: &RbmModel, batch: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Result<RbmGradient> {
    if batch.ncols() != model.n_visible() {
        return Err(RbmError::ShapeMismatch { what: "batch row", expected: model.n_visible(), actual: batch.ncols() });
    }
    if batch.nrows() == 0 {
        return Err(RbmError::EmptyDataset);
    }
    if k == 0 {
        return Err(RbmError::InvalidConfig("k must be >= 1".into()));
    }
    let h0 = hidden_batch(model, &batch);
    let mut h_state = sample(&h0, rng);
    let mut vk = visible_batch(model, &h_state);
    for _ in 1..k {
        let v_state = sample(&vk, rng);
        h_state = sample(&hidden_batch(model, &v_state.view()), rng);
        vk = visible_batch(model, &h_state);
    }
    let hk = hidden_batch(model, &vk.view());

    let b = batch.nrows() as f64;
    let weights = (batch.t().dot(&h0) - vk.t().dot(&hk)) / b;
    let visible_bias = (&batch - &vk).sum_axis(Axis(0)) / b;
    let hidden_bias = (&h0 - &hk).sum_axis(Axis(0)) / b;
    Ok(RbmGradient { weights, visible_bias, hidden_bias })
}

/// Rewrites plain CD statistics as the step of a centered RBM with visible
/// offset `mu` and hidden offset `lambda`, expressed back in the standard
/// parameterization.
pub fn centered_step(g: RbmGradient, mu: ndarray::ArrayView1<f64>, lambda: f64) -> RbmGradient {
    let (m, n) = g.weights.dim();
    let mu_col = mu.to_shape((m, 1)).expect("column");
    let db_col = g.visible_bias.to_shape((m, 1)).expect("column");
    let dc_row = g.hidden_bias.to_shape((1, n)).expect("row");
    let weights = &g.weights - &mu_col.dot(&dc_row) - &(&db_col * lambda);
    let visible_bias = &g.visible_bias - &(weights.sum_axis(Axis(1)) * lambda);
    let hidden_bias = &g.hidden_bias - &weights.t().dot(&mu);
    RbmGradient { weights, visible_bias, hidden_bias }
}

pub(crate) fn check_dataset(dataset: &[VoxelGrid]) -> Result<[usize; 3]> {
    let first = dataset.first().ok_or(RbmError::EmptyDataset)?;
    let dims = first.dims();
    for (index, grid) in dataset.iter().enumerate() {
        if grid.dims() != dims {
            return Err(RbmError::DimsMismatch { index, expected: dims, actual: grid.dims() });
        }
        if grid.values().iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(RbmError::NonBinary(index));
        }
    }
    Ok(dims)
}

/// Mean over rows of `sum_i -[x ln p + (1 - x) ln(1 - p)]` where `p` is the
/// mean-field reconstruction `P(v | P(h | x))`.
pub fn reconstruction_cross_entropy(model: &RbmModel, data: ArrayView2<f64>) -> f64 {
    let p = visible_batch(model, &hidden_batch(model, &data));
    let eps = 1e-12;
    let total: f64 = data
        .iter()
        .zip(p.iter())
        .map(|(&x, &p)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
        })
        .sum();
    total / data.nrows() as f64
}

/// Per-column log-odds of the smoothed frequency `(count + 1/2) / (n + 1)`,
/// finite even for voxels that are constant across the data.
pub fn data_log_odds(data: ArrayView2<f64>) -> Array1<f64> {
    let n = data.nrows() as f64;
    data.sum_axis(Axis(0)).mapv(|c| {
        let p = (c + 0.5) / (n + 1.0);
        (p / (1.0 - p)).ln()
    })
}

const HIDDEN_OFFSET: f64 = 0.5;

fn sample_vec(probs: &Array1<f64>, rng: &mut impl Rng) -> Array1<f64> {
    probs.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

// Batch-of-one CD step applied in place. Matches `cd_gradient` followed by
// `centered_step` (same random draws) without materializing m x n
// temporaries: the weight step is the rank-two
// (v0 - mu)(h0 - lambda)^T - (vk - mu)(hk - lambda)^T.
fn single_update(model: &mut RbmModel, v0: ArrayView1<f64>, mu: Option<ArrayView1<f64>>, config: &CdConfig, rng: &mut impl Rng) {
    let h0 = model.hidden_probs_view(v0);
    let mut h_state = sample_vec(&h0, rng);
    let mut vk = model.visible_probs_view(h_state.view());
    for _ in 1..config.k {
        let v_state = sample_vec(&vk, rng);
        h_state = sample_vec(&model.hidden_probs_view(v_state.view()), rng);
        vk = model.visible_probs_view(h_state.view());
    }
    let hk = model.hidden_probs_view(vk.view());

    let lambda = if mu.is_some() { HIDDEN_OFFSET } else { 0.0 };
    let lr = config.learning_rate;
    let h0c = h0.mapv(|h| h - lambda);
    let hkc = hk.mapv(|h| h - lambda);
    let mut hidden_correction = Array1::<f64>::zeros(hk.len());
    for (i, mut w) in model.weights.rows_mut().into_iter().enumerate() {
        let m = mu.map_or(0.0, |mu| mu[i]);
        let (a, b) = (v0[i] - m, vk[i] - m);
        let mut row_sum = 0.0;
        Zip::from(&mut w).and(&h0c).and(&hkc).and(&mut hidden_correction).for_each(|w, &p, &q, c| {
            let d = a * p - b * q;
            row_sum += d;
            *c += m * d;
            *w += lr * d;
        });
        model.visible_bias[i] += lr * (v0[i] - vk[i] - lambda * row_sum);
    }
    Zip::from(&mut model.hidden_bias).and(&h0).and(&hk).and(&hidden_correction).for_each(|c, &p, &q, &k| {
        *c += lr * (p - q - k);
    });
}

/// Trains an RBM with CD-k minibatch updates.
///
/// Weights are initialized from stream 0 of `config.seed` and the epoch
/// shuffles and Gibbs chains draw from stream 1, so the result depends only
/// on the dataset order and the config.
pub fn train_cd(dataset: &[VoxelGrid], config: &CdConfig) -> Result<(RbmModel, TrainingLog)> {
    config.validate()?;
    let dims = check_dataset(dataset)?;
    let m = dims.iter().product::<usize>();
    let data = Array2::from_shape_fn((dataset.len(), m), |(r, i)| f64::from(dataset[r].values()[i]));

    let mut model = RbmModel::init(dims, config.n_hidden, config.weight_init_sigma, config.seed)?;
    if config.data_visible_bias {
        model.visible_bias = data_log_odds(data.view());
    }
    let offsets = config.centered.then(|| data.mean_axis(Axis(0)).expect("non-empty dataset"));
    let mut rng = rng::stream(config.seed, 1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainingLog::default();
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if let [row] = chunk {
                single_update(&mut model, data.row(*row), offsets.as_ref().map(|m| m.view()), config, &mut rng);
                continue;
            }
            let batch = data.select(Axis(0), chunk);
            let g = cd_gradient(&model, batch.view(), config.k, &mut rng)?;
            let g = match &offsets {
                Some(mu) => centered_step(g, mu.view(), HIDDEN_OFFSET),
                None => g,
            };
            model.weights.scaled_add(config.learning_rate, &g.weights);
            model.visible_bias.scaled_add(config.learning_rate, &g.visible_bias);
            model.hidden_bias.scaled_add(config.learning_rate, &g.hidden_bias);
        }
        if !model.is_finite() {
            return Err(RbmError::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let recon_cross_entropy = reconstruction_cross_entropy(&model, data.view());
        log::debug!("rbm epoch {epoch}: recon cross-entropy {recon_cross_entropy:.4}");
        log.epochs.push(EpochRecord { epoch, recon_cross_entropy, wall_time_s: start.elapsed().as_secs_f64() });
    }
    Ok((model, log))
}
