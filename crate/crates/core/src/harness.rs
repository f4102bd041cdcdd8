//! Experiment drivers: single runs, convergence measurement, the temperature
//! and prior ablation grid, and the input-shift sweep. All outputs are
//! deterministic functions of (dataset, config).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::config::{Method, Prior, TrainConfig};
use crate::data::{corrupt, Dataset, NoiseLevel, Split};
use crate::error::{LikaError, Result};
use crate::metrics::{evaluate, regression_metrics, uce, EvalBatch, MetricsReport};
use crate::models::{
    ensemble_predict_batch, mc_dropout_predict_batch, predict_batch, train_members,
    ttda_predict_batch, Checkpoint, ModelParams, ModelSpec, TrainingTrace,
};
use crate::optim::TemperatureCurve;

pub const DEFAULT_REL_DELTA: f64 = 0.10;
pub const DEFAULT_PATIENCE: usize = 20;

/// Trained model(s) for one method, ready to predict.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub members: Vec<ModelParams>,
    pub trace: TrainingTrace,
    /// Per-feature test-time augmentation noise (ttda only).
    pub aug_sigma: Vec<f64>,
}

fn member_seeds(config: &TrainConfig) -> Vec<u64> {
    if config.method.is_ensemble() {
        (0..config.ensemble_size as u64)
            .map(|k| config.seed.wrapping_add(k))
            .collect()
    } else {
        vec![config.seed]
    }
}

/// Trains according to `config.method` on the train split.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<FittedModel> {
    config.validate()?;
    let spec = ModelSpec::for_dataset(dataset, config)?;
    let (members, trace) = train_members(&spec, dataset, config, &member_seeds(config))?;
    let aug_sigma = dataset
        .input_stats(Split::Train)
        .iter()
        .map(|&(_, std)| config.ttda_scale * std)
        .collect();
    Ok(FittedModel {
        config: config.clone(),
        spec,
        members,
        trace,
        aug_sigma,
    })
}

impl FittedModel {
    pub fn from_checkpoint(ck: Checkpoint, config: TrainConfig, aug_sigma: Vec<f64>) -> Self {
        FittedModel {
            config,
            spec: ck.spec,
            members: ck.members,
            trace: TrainingTrace::default(),
            aug_sigma,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.spec.clone(), self.members.clone())
    }

    /// Method-specific predictive distribution for each row of `x`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let c = &self.config;
        let eval_seed = c.seed.wrapping_add(0xe7a1);
        match c.method {
            Method::DoNll | Method::DoLika => {
                mc_dropout_predict_batch(&self.members[0], &self.spec, x.view(), c.mc_passes, eval_seed)
            }
            Method::EnsNll | Method::EnsLika => ensemble_predict_batch(&self.members, &self.spec, x.view()),
            Method::Ttda => ttda_predict_batch(
                &self.members[0],
                &self.spec,
                x.view(),
                c.ttda_n_aug,
                &self.aug_sigma,
                eval_seed,
            ),
            Method::Nll | Method::Lika | Method::LikaNorm | Method::LikaExact => {
                predict_batch(&self.members[0], &self.spec, x.view())
            }
        }
    }

    pub fn eval_batch(&self, dataset: &Dataset, split: Split) -> Result<EvalBatch> {
        let idx = dataset.indices(split);
        if idx.is_empty() {
            return Err(LikaError::Usage(format!("split {split:?} is empty")));
        }
        let x = dataset.inputs.select(Axis(0), &idx);
        let y = dataset.targets.select(Axis(0), &idx);
        let (m, s) = self.predict(&x)?;
        EvalBatch::new(m, s, y)
    }

    /// Metrics on `test` with σ-scaling fit on the validation split.
    pub fn evaluate(&self, dataset: &Dataset) -> Result<MetricsReport> {
        let test = self.eval_batch(dataset, Split::Test)?;
        let val = self.eval_batch(dataset, Split::Val)?;
        evaluate(&test, &val, self.config.bins)
    }
}

/// Config echo, test metrics, training trace and convergence epoch of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub dataset: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub metrics: MetricsReport,
    pub epochs_to_converge: usize,
    pub trace: TrainingTrace,
    /// Timing is kept out of the serialized report so repeated runs emit
    /// identical bytes.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl PartialEq for ExperimentReport {
    fn eq(&self, other: &Self) -> bool {
        self.method == other.method
            && self.dataset == other.dataset
            && self.seed == other.seed
            && self.config == other.config
            && self.metrics == other.metrics
            && self.epochs_to_converge == other.epochs_to_converge
            && self.trace == other.trace
    }
}

impl ExperimentReport {
    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow {
            method: self.method.name().to_string(),
            dataset: self.dataset.clone(),
            seed: self.seed,
            metrics: self.metrics,
        }
    }
}

pub fn run_experiment_with_model(
    dataset: &Dataset,
    dataset_name: &str,
    config: &TrainConfig,
) -> Result<(ExperimentReport, FittedModel)> {
    let start = Instant::now();
    let model = fit(dataset, config)?;
    let metrics = model.evaluate(dataset)?;
    let report = ExperimentReport {
        method: config.method,
        dataset: dataset_name.to_string(),
        seed: config.seed,
        config: config.clone(),
        metrics,
        epochs_to_converge: epochs_to_converge(&model.trace, DEFAULT_REL_DELTA, DEFAULT_PATIENCE),
        trace: model.trace.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, model))
}

/// Trains per `config.method` and evaluates the full metric suite on test.
pub fn run_experiment(dataset: &Dataset, dataset_name: &str, config: &TrainConfig) -> Result<ExperimentReport> {
    Ok(run_experiment_with_model(dataset, dataset_name, config)?.0)
}

/// First (1-based) epoch whose validation MAE is within `(1 + rel_delta)` of
/// the best value in the trace and stays there for `patience` consecutive
/// epochs (or until the trace ends). Returns the trace length if no epoch
/// qualifies.
pub fn epochs_to_converge(trace: &TrainingTrace, rel_delta: f64, patience: usize) -> usize {
    converge_epoch(&trace.val_mae(), rel_delta, patience)
}

/// [`epochs_to_converge`] over a raw series.
pub fn converge_epoch(series: &[f64], rel_delta: f64, patience: usize) -> usize {
    let n = series.len();
    let best = series.iter().cloned().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return n;
    }
    let band = best * (1.0 + rel_delta);
    let inside: Vec<bool> = series.iter().map(|&v| v <= band).collect();
    let patience = patience.max(1);
    // run[i]: length of the in-band run starting at i
    let mut run = vec![0usize; n + 1];
    for i in (0..n).rev() {
        run[i] = if inside[i] { run[i + 1] + 1 } else { 0 };
    }
    (0..n)
        .find(|&i| run[i] >= patience.min(n - i))
        .map(|i| i + 1)
        .unwrap_or(n)
}

/// One CSV/JSON summary line: method, dataset, seed and the nine metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

impl SummaryRow {
    pub fn header() -> Vec<&'static str> {
        let mut h = vec!["method", "dataset", "seed"];
        h.extend(MetricsReport::FIELDS);
        h
    }

    pub fn csv_line(&self) -> String {
        let mut cells = vec![self.method.clone(), self.dataset.clone(), self.seed.to_string()];
        cells.extend(self.metrics.values().iter().map(|v| v.to_string()));
        cells.join(",")
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = SummaryRow::header().join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &TrainingTrace) -> String {
    let mut out = TrainingTrace::COLUMNS.join(",");
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch, r.lr, r.t2, r.t3, r.train_loss, r.val_loss, r.val_mae, r.val_uce, r.val_ece
        );
    }
    out
}

pub fn report_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| LikaError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Writes `trace.csv`, `report.json` and `summary.csv` into `dir`.
pub fn write_run_outputs(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LikaError::Data(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("trace.csv"), &trace_csv(&report.trace))?;
    write_file(&dir.join("report.json"), &report_json(report))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&[report.summary_row()]))
}

/// One row of the temperature/prior ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub t2: TemperatureCurve,
    pub t3: TemperatureCurve,
    pub prior: Prior,
    /// `Err` holds the failure message; the grid continues past failures.
    pub outcome: std::result::Result<ExperimentReport, String>,
}

/// The nine ablation settings in reporting order: label, T₂, T₃, prior.
pub fn ablation_settings() -> Vec<(&'static str, TemperatureCurve, TemperatureCurve, Prior)> {
    use TemperatureCurve::{Annealed as Dn, Fixed};
    vec![
        ("T2=0, T3=0", Fixed(0.0), Fixed(0.0), Prior::Uniform),
        ("T2=10, T3=10", Fixed(10.0), Fixed(10.0), Prior::Uniform),
        ("T2=100, T3=0", Fixed(100.0), Fixed(0.0), Prior::Uniform),
        ("T2=0, T3=100", Fixed(0.0), Fixed(100.0), Prior::Uniform),
        ("T2=dec, T3=0", Dn, Fixed(0.0), Prior::Uniform),
        ("T2=0, T3=dec", Fixed(0.0), Dn, Prior::Uniform),
        ("T2=dec, T3=dec", Dn, Dn, Prior::Uniform),
        ("T2=dec, T3=dec, gaussian prior", Dn, Dn, Prior::Gaussian),
        ("T2=dec, T3=dec, laplace prior", Dn, Dn, Prior::Laplace),
    ]
}

/// Runs every ablation row with the `lika` objective (or the base config's
/// temperature-aware objective) and the base config's other settings.
pub fn ablation_grid(dataset: &Dataset, dataset_name: &str, base: &TrainConfig) -> Vec<AblationRow> {
    let method = if base.method.objective().uses_temperatures() && !base.method.is_ensemble() && !base.method.is_dropout() {
        base.method
    } else {
        Method::Lika
    };
    ablation_settings()
        .into_par_iter()
        .map(|(label, t2, t3, prior)| {
            let cfg = TrainConfig {
                method,
                t2,
                t3,
                prior,
                ..base.clone()
            };
            AblationRow {
                label: label.to_string(),
                t2,
                t3,
                prior,
                outcome: run_experiment(dataset, dataset_name, &cfg).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// Per-(method, level) result of the shift sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub method: Method,
    pub level: NoiseLevel,
    pub median_mae: f64,
    pub median_uce: f64,
    pub mae: Vec<f64>,
    pub uce: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seed of the input corruption for a given run seed and level; shared by
/// all methods so they see identical shifted inputs.
fn corruption_seed(seed: u64, level: NoiseLevel) -> u64 {
    seed.wrapping_mul(31).wrapping_add(level as u64 + 1).wrapping_add(0xc0ff_ee00)
}

/// Test MAE and UCE of `model` at every shift level.
pub fn shifted_metrics(model: &FittedModel, dataset: &Dataset, seed: u64) -> Result<Vec<(NoiseLevel, f64, f64)>> {
    NoiseLevel::ALL
        .iter()
        .map(|&level| {
            let shifted = corrupt(dataset, level, corruption_seed(seed, level));
            let batch = model.eval_batch(&shifted, Split::Test)?;
            Ok((level, regression_metrics(&batch)?.mae, uce(&batch, model.config.bins)?.0))
        })
        .collect()
}

/// Trains each config on clean data for every seed and evaluates on the
/// corrupted test split at NL0/NL1/NL2. Rows are ordered by config, then
/// level.
pub fn ood_sweep(dataset: &Dataset, configs: &[TrainConfig], seeds: &[u64]) -> Result<Vec<OodRow>> {
    if configs.is_empty() || seeds.is_empty() {
        return Err(LikaError::Usage("ood sweep needs at least one config and one seed".into()));
    }
    let cells: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = TrainConfig {
                seed,
                ..configs[c].clone()
            };
            let model = fit(dataset, &cfg)?;
            shifted_metrics(&model, dataset, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ood_aggregate(configs, &cells, &results))
}

/// Collapses per-(config, seed) shift results into median rows, ordered by
/// config, then level.
pub fn ood_aggregate(
    configs: &[TrainConfig],
    cells: &[(usize, u64)],
    results: &[Vec<(NoiseLevel, f64, f64)>],
) -> Vec<OodRow> {
    let mut rows = Vec::new();
    for (c, cfg) in configs.iter().enumerate() {
        for (li, &level) in NoiseLevel::ALL.iter().enumerate() {
            let per_seed: Vec<&(NoiseLevel, f64, f64)> = cells
                .iter()
                .zip(results)
                .filter(|((ci, _), _)| *ci == c)
                .map(|(_, r)| &r[li])
                .collect();
            let mae: Vec<f64> = per_seed.iter().map(|r| r.1).collect();
            let uce: Vec<f64> = per_seed.iter().map(|r| r.2).collect();
            rows.push(OodRow {
                method: cfg.method,
                level,
                median_mae: median(&mae),
                median_uce: median(&uce),
                mae,
                uce,
            });
        }
    }
    rows
}

pub fn ood_csv(rows: &[OodRow]) -> String {
    let mut out = String::from("method,level,median_mae,median_uce\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.method, r.level, r.median_mae, r.median_uce);
    }
    out
}
