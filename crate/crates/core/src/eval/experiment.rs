use super::{dice, reconstruct, simulate_acquisition, EamSimConfig, EvalError, ModelKind, ReconstructConfig, Result, TrainedModel};
use crate::rbm::{train_cd, CdConfig};
use crate::rng;
use crate::vae::{train_vae, VaeTrainConfig};
use crate::volume::{synth_phantom, PhantomSpec, PointCloud, VoxelGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;

const ACQUISITION_TAG: u64 = 0x4143_5155;
const POSTERIOR_TAG: u64 = 0x504f_5354;

/// A grid with a stable identifier (typically its file stem).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub id: String,
    pub grid: VoxelGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub point_counts: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Acquisition radius in voxels.
    pub sim_threshold: f64,
    pub reconstruct: ReconstructConfig,
    pub rbm: CdConfig,
    pub vae: VaeTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            point_counts: vec![25, 100, 250],
            models: vec![ModelKind::Rbm, ModelKind::Vae],
            sim_threshold: 1.0,
            reconstruct: ReconstructConfig::default(),
            rbm: CdConfig::default(),
            vae: VaeTrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Copy with the model training seeds derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.rbm.seed = rng::mix(&[seed, 1]);
        self.vae.seed = rng::mix(&[seed, 2]);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub test_id: String,
    pub model: ModelKind,
    /// Requested number of surface vertices.
    pub n_points: usize,
    /// Distinct voxel centres actually recorded.
    pub n_acquired: Option<usize>,
    pub dice: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub model: ModelKind,
    pub n_points: usize,
    pub median_dice: Option<f64>,
    pub n_cases: usize,
    pub n_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub cases: Vec<CaseResult>,
    pub medians: Vec<MedianRow>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record<'a> {
    Config { config: &'a ExperimentConfig, train_ids: &'a [String], test_ids: &'a [String] },
    Case(&'a CaseResult),
    Median(&'a MedianRow),
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

impl ExperimentReport {
    fn assemble(config: ExperimentConfig, train_ids: Vec<String>, test_ids: Vec<String>, cases: Vec<CaseResult>) -> Self {
        let mut medians = Vec::new();
        for &model in &config.models {
            for &n_points in &config.point_counts {
                let group: Vec<&CaseResult> =
                    cases.iter().filter(|c| c.model == model && c.n_points == n_points).collect();
                let mut scores: Vec<f64> = group.iter().filter_map(|c| c.dice).collect();
                medians.push(MedianRow {
                    model,
                    n_points,
                    median_dice: median(&mut scores),
                    n_cases: group.len(),
                    n_errors: group.iter().filter(|c| c.error.is_some()).count(),
                });
            }
        }
        Self { config, train_ids, test_ids, cases, medians }
    }

    pub fn n_errors(&self) -> usize {
        self.cases.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn median(&self, model: ModelKind, n_points: usize) -> Option<f64> {
        self.medians.iter().find(|m| m.model == model && m.n_points == n_points).and_then(|m| m.median_dice)
    }

    /// One JSON record per line: the config, every case, then every median.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut push = |r: Record| {
            out.push_str(&serde_json::to_string(&r).expect("report records serialize"));
            out.push('\n');
        };
        push(Record::Config { config: &self.config, train_ids: &self.train_ids, test_ids: &self.test_ids });
        self.cases.iter().for_each(|c| push(Record::Case(c)));
        self.medians.iter().for_each(|m| push(Record::Median(m)));
        out
    }

    /// Median dice per model and point count, one row per model.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Median dice over {} test volumes", self.test_ids.len());
        let _ = write!(out, "{:<6}", "Model");
        for n in &self.config.point_counts {
            let _ = write!(out, " {:>12}", format!("{n} points"));
        }
        out.push('\n');
        for &model in &self.config.models {
            let _ = write!(out, "{:<6}", model.to_string());
            for &n in &self.config.point_counts {
                let cell = self.median(model, n).map_or("-".to_string(), |d| format!("{d:.3}"));
                let _ = write!(out, " {cell:>12}");
            }
            out.push('\n');
        }
        let errors = self.n_errors();
        if errors > 0 {
            let _ = writeln!(out, "{errors} of {} cases failed", self.cases.len());
        }
        out
    }
}

fn check_sets(train: &[LabeledGrid], test: &[LabeledGrid]) -> Result<[usize; 3]> {
    let first = train.first().or(test.first()).ok_or_else(|| EvalError::InvalidConfig("no volumes".into()))?;
    let dims = first.grid.dims();
    for g in train.iter().chain(test) {
        if g.grid.dims() != dims {
            return Err(EvalError::DimsMismatch(dims, g.grid.dims()));
        }
    }
    let train_ids: HashSet<&str> = train.iter().map(|g| g.id.as_str()).collect();
    if train_ids.len() != train.len() {
        return Err(EvalError::InvalidConfig("duplicate training volume ids".into()));
    }
    if let Some(shared) = test.iter().find(|g| train_ids.contains(g.id.as_str())) {
        return Err(EvalError::InvalidConfig(format!("volume {:?} is in both training and test sets", shared.id)));
    }
    Ok(dims)
}

/// Default phantoms for an experiment: volume `i` uses phantom seed
/// `mix(seed, i)`; the first `n_train` are ids `train-i`, the rest `test-i`.
pub fn synthetic_corpus(seed: u64, n_train: usize, n_test: usize, dims: [usize; 3]) -> Result<(Vec<LabeledGrid>, Vec<LabeledGrid>)> {
    let grids = (0..n_train + n_test)
        .into_par_iter()
        .map(|i| {
            let grid = synth_phantom(&PhantomSpec::with_seed(rng::mix(&[seed, i as u64])), dims)?;
            let id = if i < n_train { format!("train-{i:02}") } else { format!("test-{:02}", i - n_train) };
            Ok(LabeledGrid { id, grid })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut train = grids;
    let test = train.split_off(n_train);
    Ok((train, test))
}

/// Trains each model in `config.models` on the training grids.
pub fn train_models(train: &[LabeledGrid], config: &ExperimentConfig) -> Result<Vec<TrainedModel>> {
    if train.is_empty() {
        return Err(EvalError::InvalidConfig("training set is empty".into()));
    }
    let grids: Vec<VoxelGrid> = train.iter().map(|g| g.grid.clone()).collect();
    config
        .models
        .par_iter()
        .map(|kind| {
            log::info!("training {kind} on {} volumes", grids.len());
            Ok(match kind {
                ModelKind::Rbm => TrainedModel::Rbm(train_cd(&grids, &config.rbm)?.0),
                ModelKind::Vae => TrainedModel::Vae(train_vae(&grids, &config.vae)?.0),
            })
        })
        .collect()
}

/// Scores every (test volume, point count, model) case. Acquisitions are
/// shared between models so both see the same points. Failures are recorded
/// in the case and do not stop the run.
pub fn evaluate(models: &[TrainedModel], test: &[LabeledGrid], config: &ExperimentConfig) -> Vec<CaseResult> {
    let acquisitions: Vec<(usize, usize, Result<PointCloud>)> = test
        .par_iter()
        .enumerate()
        .flat_map_iter(|(t, case)| {
            config.point_counts.iter().map(move |&n| {
                let sim = EamSimConfig {
                    n_points: n,
                    threshold: config.sim_threshold,
                    seed: rng::mix(&[config.seed, ACQUISITION_TAG, t as u64, n as u64]),
                };
                (t, n, simulate_acquisition(&case.grid, &sim))
            })
        })
        .collect();

    acquisitions
        .par_iter()
        .flat_map_iter(|(t, n, points)| {
            models.iter().map(move |model| {
                let case = &test[*t];
                let kind = model.kind();
                let outcome = points.as_ref().map_err(|e| format!("{} stage: {e}", e.stage())).and_then(|points| {
                    let seed = rng::mix(&[config.seed, POSTERIOR_TAG, *t as u64, *n as u64, kind as u64]);
                    let score = reconstruct(points, model, &config.reconstruct, &mut rng::stream(seed, 0))
                        .and_then(|r| dice(&r.mask, &case.grid));
                    score.map_err(|e| format!("{} stage: {e}", e.stage()))
                });
                let n_acquired = points.as_ref().ok().map(PointCloud::len);
                match outcome {
                    Ok(d) => CaseResult { test_id: case.id.clone(), model: kind, n_points: *n, n_acquired, dice: Some(d), error: None },
                    Err(e) => {
                        log::warn!("{} / {kind} / {n} points: {e}", case.id);
                        CaseResult { test_id: case.id.clone(), model: kind, n_points: *n, n_acquired, dice: None, error: Some(e) }
                    }
                }
            })
        })
        .collect()
}

/// Trains both models and evaluates them on the test set.
pub fn run_experiment(train: &[LabeledGrid], test: &[LabeledGrid], config: &ExperimentConfig) -> Result<ExperimentReport> {
    check_sets(train, test)?;
    let models = train_models(train, config)?;
    Ok(evaluate_report(&models, train, test, config))
}

/// Report for already trained models.
pub fn evaluate_report(
    models: &[TrainedModel],
    train: &[LabeledGrid],
    test: &[LabeledGrid],
    config: &ExperimentConfig,
) -> ExperimentReport {
    let cases = evaluate(models, test, config);
    let mut config = config.clone();
    config.models = models.iter().map(TrainedModel::kind).collect();
    ExperimentReport::assemble(
        config,
        train.iter().map(|g| g.id.clone()).collect(),
        test.iter().map(|g| g.id.clone()).collect(),
        cases,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{synth_phantom, PhantomSpec};

    fn spec(seed: u64) -> PhantomSpec {
        PhantomSpec { seed, semi_axes: [3.5, 3.0, 2.5], vein_radius: [0.8, 1.0], ..PhantomSpec::default() }
    }

    fn set(prefix: &str, seeds: std::ops::Range<u64>) -> Vec<LabeledGrid> {
        seeds
            .map(|s| LabeledGrid { id: format!("{prefix}{s}"), grid: synth_phantom(&spec(s), [12, 12, 12]).unwrap() })
            .collect()
    }

    fn config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default().with_seed(3);
        c.point_counts = vec![10, 40];
        c.rbm.epochs = 3;
        c.rbm.n_hidden = 8;
        c.vae.epochs = 2;
        c.vae.hidden = vec![16];
        c.vae.latent_dim = 2;
        c.reconstruct.n_samples = 4;
        c
    }

    #[test]
    fn report_shape_and_determinism() {
        let (train, test) = (set("a", 0..3), set("b", 10..12));
        let r = run_experiment(&train, &test, &config()).unwrap();
        assert_eq!(r.cases.len(), 2 * 2 * 2);
        assert_eq!(r.medians.len(), 4);
        assert!(r.cases.iter().all(|c| c.dice.is_some_and(|d| (0.0..=1.0).contains(&d))));
        let again = run_experiment(&train, &test, &config()).unwrap();
        assert_eq!(r.to_json_lines(), again.to_json_lines());
        assert_eq!(r.to_json_lines().lines().count(), 1 + 8 + 4);
        assert!(r.to_table().contains("40 points"));
    }

    #[test]
    fn overlapping_sets_rejected() {
        let train = set("a", 0..2);
        let test = set("a", 1..3);
        assert!(matches!(run_experiment(&train, &test, &config()), Err(EvalError::InvalidConfig(_))));
    }

    #[test]
    fn failures_are_recorded_per_case() {
        let train = set("a", 0..2);
        let mut test = set("b", 5..6);
        test.push(LabeledGrid { id: "empty".into(), grid: VoxelGrid::zeros([12, 12, 12], [1.0; 3]) });
        let r = run_experiment(&train, &test, &config()).unwrap();
        let failed: Vec<&CaseResult> = r.cases.iter().filter(|c| c.error.is_some()).collect();
        assert_eq!(failed.len(), 4);
        assert!(failed.iter().all(|c| c.test_id == "empty"));
        assert!(r.to_table().contains("4 of 8 cases failed"));
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&mut [0.4, 0.1, 0.3, 0.2]), Some(0.25));
        assert_eq!(median(&mut []), None);
    }
}
