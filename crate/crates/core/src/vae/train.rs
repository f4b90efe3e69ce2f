use super::{standard_normal, Dense, RankOne, Result, VaeError, VaeModel};
use ndarray::Zip;
use crate::rng;
use crate::volume::VoxelGrid;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeTrainConfig {
    /// Encoder hidden widths; the decoder uses them in reverse.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Momentum for SGD; first-moment decay for Adam.
    pub momentum: f64,
    /// Second-moment decay (Adam only).
    pub beta2: f64,
    pub kl_weight: f64,
    /// Gradients with a larger Euclidean norm are rescaled to this norm;
    /// zero disables clipping.
    pub max_grad_norm: f64,
    /// Train on inputs centred on the training mean (folded back into the
    /// first encoder bias afterwards) and start the output bias at the
    /// training log-odds.
    pub data_init: bool,
    pub seed: u64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            latent_dim: 8,
            epochs: 100,
            batch_size: 1,
            optimizer: Optimizer::Sgd,
            learning_rate: 5e-5,
            momentum: 0.9,
            beta2: 0.999,
            kl_weight: 1.0,
            max_grad_norm: 1000.0,
            data_init: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain SGD with heavy-ball momentum.
    Sgd,
    Adam,
}

impl VaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VaeError::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.latent_dim == 0 {
            return bad("epochs, batch_size and latent_dim must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("beta2 must be in [0, 1), got {}", self.beta2));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return bad(format!("kl_weight must be finite and >= 0, got {}", self.kl_weight));
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm >= 0.0) {
            return bad(format!("max_grad_norm must be finite and >= 0, got {}", self.max_grad_norm));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeEpochRecord {
    pub epoch: usize,
    /// Mean per-grid total loss over the epoch's steps.
    pub total_loss: f64,
    pub recon_cross_entropy: f64,
    pub kl: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeTrainingLog {
    pub epochs: Vec<VaeEpochRecord>,
}

impl VaeTrainingLog {
    pub fn to_json_lines(&self) -> String {
        self.epochs.iter().map(|r| serde_json::to_string(r).expect("plain record") + "\n").collect()
    }
}

fn check_dataset(dataset: &[VoxelGrid]) -> Result<[usize; 3]> {
    let first = dataset.first().ok_or(VaeError::EmptyDataset)?;
    let dims = first.dims();
    for (index, grid) in dataset.iter().enumerate() {
        if grid.dims() != dims {
            return Err(VaeError::DimsMismatch { index, expected: dims, actual: grid.dims() });
        }
        if let Some(&v) = grid.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(VaeError::ValueOutOfRange { index, value: v.into() });
        }
    }
    Ok(dims)
}

fn clipped_rate(config: &VaeTrainConfig, grad_norm: f64) -> f64 {
    if config.max_grad_norm > 0.0 && grad_norm > config.max_grad_norm {
        config.learning_rate * config.max_grad_norm / grad_norm
    } else {
        config.learning_rate
    }
}

const ADAM_EPS: f64 = 1e-8;

fn norm(g: &[Dense]) -> f64 {
    g.iter().flat_map(|l| l.w.iter().chain(l.b.iter())).map(|x| x * x).sum::<f64>().sqrt()
}

enum Grad<'a> {
    Full(&'a Dense),
    Factored(&'a RankOne),
}

/// Optimizer buffers shaped like the model's layers.
struct OptimizerState {
    kind: Optimizer,
    first: Vec<Dense>,
    second: Vec<Dense>,
    steps: i32,
}

impl OptimizerState {
    fn new(model: &VaeModel, kind: Optimizer) -> Self {
        let zeros = || model.layers().iter().map(|l| Dense::zeros(l.input_len(), l.output_len())).collect::<Vec<_>>();
        let second = if kind == Optimizer::Adam { zeros() } else { Vec::new() };
        Self { kind, first: zeros(), second, steps: 0 }
    }

    fn step(&mut self, model: &mut VaeModel, grads: &[Grad], config: &VaeTrainConfig, lr: f64) {
        self.steps += 1;
        let mu = config.momentum;
        match self.kind {
            Optimizer::Sgd => {
                for ((p, v), g) in model.layers_mut().iter_mut().zip(&mut self.first).zip(grads) {
                    update(p, v, None, g, |p, v, _, g| {
                        *v = mu * *v - lr * g;
                        *p += *v;
                    });
                }
            }
            Optimizer::Adam => {
                let b2 = config.beta2;
                let rate = lr * (1.0 - b2.powi(self.steps)).sqrt() / (1.0 - mu.powi(self.steps));
                let layers = model.layers_mut().iter_mut().zip(&mut self.first).zip(&mut self.second);
                for (((p, m), s), g) in layers.zip(grads) {
                    update(p, m, Some(s), g, |p, m, s, g| {
                        *m = mu * *m + (1.0 - mu) * g;
                        *s = b2 * *s + (1.0 - b2) * g * g;
                        *p -= rate * *m / (s.sqrt() + ADAM_EPS);
                    });
                }
            }
        }
    }
}

// Applies `f(param, first, second, grad)` elementwise in a single pass.
fn update(p: &mut Dense, m: &mut Dense, s: Option<&mut Dense>, g: &Grad, f: impl Fn(&mut f64, &mut f64, &mut f64, f64)) {
    let mut scratch = 0.0;
    match (s, g) {
        (Some(s), Grad::Full(g)) => {
            Zip::from(&mut p.w).and(&mut m.w).and(&mut s.w).and(&g.w).for_each(|p, m, s, &g| f(p, m, s, g));
            Zip::from(&mut p.b).and(&mut m.b).and(&mut s.b).and(&g.b).for_each(|p, m, s, &g| f(p, m, s, g));
        }
        (None, Grad::Full(g)) => {
            Zip::from(&mut p.w).and(&mut m.w).and(&g.w).for_each(|p, m, &g| f(p, m, &mut scratch, g));
            Zip::from(&mut p.b).and(&mut m.b).and(&g.b).for_each(|p, m, &g| f(p, m, &mut scratch, g));
        }
        (Some(s), Grad::Factored(g)) => {
            let rows = Zip::from(p.w.rows_mut()).and(m.w.rows_mut()).and(s.w.rows_mut()).and(&g.delta);
            rows.for_each(|mut pr, mut mr, mut sr, &d| {
                Zip::from(&mut pr).and(&mut mr).and(&mut sr).and(&g.input).for_each(|p, m, s, &x| f(p, m, s, d * x));
            });
            Zip::from(&mut p.b).and(&mut m.b).and(&mut s.b).and(&g.delta).for_each(|p, m, s, &g| f(p, m, s, g));
        }
        (None, Grad::Factored(g)) => {
            Zip::from(p.w.rows_mut()).and(m.w.rows_mut()).and(&g.delta).for_each(|mut pr, mut mr, &d| {
                Zip::from(&mut pr).and(&mut mr).and(&g.input).for_each(|p, m, &x| f(p, m, &mut scratch, d * x));
            });
            Zip::from(&mut p.b).and(&mut m.b).and(&g.delta).for_each(|p, m, &g| f(p, m, &mut scratch, g));
        }
    }
}

/// Minibatch SGD (momentum or Adam) on the one-sample ELBO estimate.
///
/// The model is initialized from stream 0 of `config.seed`; shuffles and
/// noise draws come from stream 1. A non-finite loss or parameter aborts with
/// [`VaeError::Diverged`] holding the model from the end of the previous
/// epoch.
pub fn train_vae(dataset: &[VoxelGrid], config: &VaeTrainConfig) -> Result<(VaeModel, VaeTrainingLog)> {
    config.validate()?;
    let dims = check_dataset(dataset)?;
    let data: Vec<Vec<f64>> = dataset.iter().map(VoxelGrid::to_f64).collect();
    let offset = input_offset(&data, config);
    let inputs: Vec<Vec<f64>> = match &offset {
        Some(mu) => data.iter().map(|x| x.iter().zip(mu).map(|(a, b)| a - b).collect()).collect(),
        None => data.clone(),
    };
    let mut model = centred_init(&data, dims, config)?;
    let mut opt = OptimizerState::new(&model, config.optimizer);
    let mut grad: Vec<Dense> = Vec::new();
    let mut rng = rng::stream(config.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = VaeTrainingLog::default();
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        let checkpoint = fold(&model, offset.as_deref());
        let diverged = |reason: String| VaeError::Diverged { epoch, reason, checkpoint: Box::new(checkpoint.clone()) };
        let (mut total, mut rec, mut kl) = (0.0, 0.0, 0.0);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut factors = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let eps = standard_normal(config.latent_dim, &mut rng);
                let (loss, g) = match model.split_gradient_factors(&inputs[i], &data[i], &eps, config.kl_weight) {
                    Ok(r) => r,
                    Err(VaeError::NonFinite { layer }) => return Err(diverged(format!("non-finite {layer}"))),
                    Err(e) => return Err(e),
                };
                if !loss.total.is_finite() {
                    return Err(diverged(format!("loss {}", loss.total)));
                }
                total += loss.total;
                rec += loss.rec;
                kl += loss.kl;
                factors.push(g);
            }
            if let [single] = factors.as_slice() {
                let norm = single.iter().map(RankOne::norm_sq).sum::<f64>().sqrt();
                let grads: Vec<Grad> = single.iter().map(Grad::Factored).collect();
                opt.step(&mut model, &grads, config, clipped_rate(config, norm));
            } else {
                if grad.is_empty() {
                    grad = model.layers().iter().map(|l| Dense::zeros(l.input_len(), l.output_len())).collect();
                }
                for g in grad.iter_mut() {
                    g.w.fill(0.0);
                    g.b.fill(0.0);
                }
                for f in &factors {
                    for (g, r) in grad.iter_mut().zip(f) {
                        r.add_to(g, scale);
                    }
                }
                let grads: Vec<Grad> = grad.iter().map(Grad::Full).collect();
                opt.step(&mut model, &grads, config, clipped_rate(config, norm(&grad)));
            }
        }
        if !model.parameters().iter().all(|p| p.is_finite()) {
            return Err(diverged("non-finite parameters".into()));
        }
        let n = data.len() as f64;
        let record = VaeEpochRecord {
            epoch,
            total_loss: total / n,
            recon_cross_entropy: rec / n,
            kl: kl / n,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::debug!("vae epoch {epoch}: loss {:.3} (rec {:.3}, kl {:.3})", record.total_loss, record.recon_cross_entropy, record.kl);
        log.epochs.push(record);
    }
    Ok((fold(&model, offset.as_deref()), log))
}

fn input_offset(data: &[Vec<f64>], config: &VaeTrainConfig) -> Option<Vec<f64>> {
    config.data_init.then(|| {
        let n = data.len() as f64;
        (0..data[0].len()).map(|i| data.iter().map(|x| x[i]).sum::<f64>() / n).collect()
    })
}

// Model in the centred parameterization used during training.
fn centred_init(data: &[Vec<f64>], dims: [usize; 3], config: &VaeTrainConfig) -> Result<VaeModel> {
    let mut model = VaeModel::init(dims, &config.hidden, config.latent_dim, config.seed)?;
    if config.data_init {
        let n = data.len() as f64;
        let out = model.layers_mut().last_mut().expect("output layer");
        for (i, b) in out.b.iter_mut().enumerate() {
            let p = (data.iter().map(|x| x[i]).sum::<f64>() + 0.5) / (n + 1.0);
            *b = (p / (1.0 - p)).ln();
        }
    }
    Ok(model)
}

// Rewrites a centred model so it takes raw inputs: b0 <- b0 - W0 * offset.
fn fold(model: &VaeModel, offset: Option<&[f64]>) -> VaeModel {
    let mut out = model.clone();
    if let Some(mu) = offset {
        let first = &mut out.layers_mut()[0];
        let shift = first.w.dot(&ndarray::ArrayView1::from(mu));
        first.b -= &shift;
    }
    out
}

/// The model `train_vae` starts from; with a zero learning rate it is also
/// the result.
pub fn initial_model(dataset: &[VoxelGrid], config: &VaeTrainConfig) -> Result<VaeModel> {
    config.validate()?;
    let dims = check_dataset(dataset)?;
    let data: Vec<Vec<f64>> = dataset.iter().map(VoxelGrid::to_f64).collect();
    let model = centred_init(&data, dims, config)?;
    Ok(fold(&model, input_offset(&data, config).as_deref()))
}
