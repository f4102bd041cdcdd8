//! `lika` command-line driver.
//!
//! Settings resolve in four layers: command-line flags, then the JSON file
//! given by `--config`, then `LIKA_SEED` (seed only), then built-in defaults.

pub mod emit;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lika_core::data::{
    generate_lorenz, generate_synthetic, is_dataset_layout, load_csv, read_dataset, write_dataset,
    LorenzConfig,
};
use lika_core::harness::{
    ablation_grid, ood_csv, ood_sweep, run_experiment_with_model, summary_csv,
    trace_csv, write_run_outputs, ExperimentReport, FittedModel,
};
use lika_core::models::Checkpoint;
use lika_core::{Dataset, LikaError, Method, MetricsReport, Prior, Result, SummaryRow, TrainConfig};

pub use emit::{emit_report, Format};

pub const SEED_ENV: &str = "LIKA_SEED";

#[derive(Parser, Debug)]
#[command(name = "lika", version, about = "Temperature-annealed likelihood training for calibrated regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the noisy Lorenz denoising dataset.
    GenLorenz(GenArgs),
    /// Generate the 1-D heteroscedastic toy dataset.
    GenSynth(GenArgs),
    /// Train one method and write trace.csv, report.json, summary.csv and model.json.
    Train(RunArgs),
    /// Evaluate a saved model.json on a dataset.
    Eval(EvalArgs),
    /// Run the nine-row temperature and prior ablation.
    Ablate(RunArgs),
    /// Evaluate methods under input corruption levels NL0, NL1, NL2.
    Ood(OodArgs),
    /// Combine report.json files into csv, json, markdown or svg.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Observation noise standard deviation (gen-lorenz only).
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Output file name inside --out-dir.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    prior_lambda: Option<f64>,
    /// JSON config file with kebab-case TrainConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataFlags {
    #[arg(long)]
    data: PathBuf,
    /// Target column(s) for plain CSV files; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    target: Vec<String>,
    /// z-score plain CSV inputs with train-split statistics.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataFlags,
    /// model.json written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct OodArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Methods to compare (comma-separated); overrides --method.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Training seeds (comma-separated); defaults to 0..5.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json files, or run directories containing one.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Everything `eval` needs to rebuild a [`FittedModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub config: TrainConfig,
    pub aug_sigma: Vec<f64>,
    pub checkpoint: Checkpoint,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 ok, 1 usage, 2 data, 3 numeric failure.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenLorenz(a) => gen_lorenz(a),
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Ood(a) => ood(a),
        Command::Report(a) => report(a),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| LikaError::Usage(format!("{SEED_ENV}={v:?} is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}

/// Resolves flags over config file over `LIKA_SEED` over defaults.
fn resolve_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut file_has_seed = false;
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .map_err(|e| LikaError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| LikaError::Usage(format!("{}: {e}", path.display())))?;
        file_has_seed = value.get("seed").is_some();
        cfg = serde_json::from_value(value).map_err(|e| LikaError::Usage(format!("{}: {e}", path.display())))?;
    }
    if !file_has_seed {
        if let Some(s) = env_seed()? {
            cfg.seed = s;
        }
    }
    if let Some(m) = &flags.method {
        cfg.method = m.parse()?;
    }
    if let Some(p) = &flags.prior {
        cfg.prior = p.parse::<Prior>()?;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { cfg.$field = v; })*
        };
    }
    set!(epochs => epochs, batch_size => batch_size, lr => lr0, t0 => t0, t_end => t_end,
         seed => seed, bins => bins, ensemble_size => ensemble_size, prior_lambda => prior_lambda);
    if let Some(p) = flags.dropout_rate {
        cfg.dropout_rate = Some(p);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn load_data(flags: &DataFlags, seed: u64) -> Result<Dataset> {
    if !flags.data.exists() {
        return Err(LikaError::Data(format!("{}: no such file", flags.data.display())));
    }
    if flags.target.is_empty() && is_dataset_layout(&flags.data)? {
        read_dataset(&flags.data, seed)
    } else if flags.target.is_empty() {
        Err(LikaError::Usage(format!(
            "{} is not in x*/y*/s* layout; pass --target to name the target column(s)",
            flags.data.display()
        )))
    } else {
        load_csv(&flags.data, &flags.target, flags.normalize, seed)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LikaError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| LikaError::Data(format!("cannot write {}: {e}", path.display())))
}

fn gen_seed(a: &GenArgs) -> Result<u64> {
    Ok(match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn gen_lorenz(a: GenArgs) -> Result<()> {
    let mut cfg = LorenzConfig {
        seed: gen_seed(&a)?,
        ..LorenzConfig::default()
    };
    if let Some(n) = a.n {
        cfg.n_samples = n;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise_sigma = s;
    }
    let ds = generate_lorenz(&cfg)?;
    create_dir(&a.out_dir)?;
    let path = a.out_dir.join(a.out.as_deref().unwrap_or("lorenz.csv"));
    write_dataset(&ds, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn gen_synth(a: GenArgs) -> Result<()> {
    if a.noise_sigma.is_some() {
        return Err(LikaError::Usage("--noise-sigma applies to gen-lorenz only".into()));
    }
    let ds = generate_synthetic(a.n.unwrap_or(2000), gen_seed(&a)?)?;
    create_dir(&a.out_dir)?;
    let path = a.out_dir.join(a.out.as_deref().unwrap_or("synth.csv"));
    write_dataset(&ds, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn train(a: RunArgs) -> Result<()> {
    let cfg = resolve_config(&a.train)?;
    let ds = load_data(&a.data, cfg.seed)?;
    create_dir(&a.out_dir)?;
    let (report, model) = match run_experiment_with_model(&ds, &dataset_name(&a.data.data), &cfg) {
        Ok(v) => v,
        Err(LikaError::Numeric { message, partial_trace }) => {
            if let Some(t) = &partial_trace {
                write(&a.out_dir.join("trace.csv"), &trace_csv(t))?;
            }
            return Err(LikaError::Numeric { message, partial_trace });
        }
        Err(e) => return Err(e),
    };
    write_run_outputs(&a.out_dir, &report)?;
    let saved = SavedModel {
        config: cfg,
        aug_sigma: model.aug_sigma.clone(),
        checkpoint: model.checkpoint(),
    };
    write(
        &a.out_dir.join("model.json"),
        &serde_json::to_string(&saved).expect("model serializes"),
    )?;
    print!("{}", summary_csv(&[report.summary_row()]));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model)
        .map_err(|e| LikaError::Data(format!("cannot read {}: {e}", a.model.display())))?;
    let saved: SavedModel =
        serde_json::from_str(&text).map_err(|e| LikaError::Data(format!("{}: {e}", a.model.display())))?;
    let mut config = saved.config;
    if let Some(b) = a.bins {
        config.bins = b;
    }
    let ds = load_data(&a.data, config.seed)?;
    let model = FittedModel::from_checkpoint(saved.checkpoint, config.clone(), saved.aug_sigma);
    if model.spec.input_dim != ds.input_dim() || model.spec.output_dim != ds.output_dim() {
        return Err(LikaError::Data(format!(
            "model expects {}->{} columns, dataset has {}->{}",
            model.spec.input_dim,
            model.spec.output_dim,
            ds.input_dim(),
            ds.output_dim()
        )));
    }
    let metrics: MetricsReport = model.evaluate(&ds)?;
    let row = SummaryRow {
        method: config.method.name().to_string(),
        dataset: dataset_name(&a.data.data),
        seed: config.seed,
        metrics,
    };
    create_dir(&a.out_dir)?;
    let csv = summary_csv(std::slice::from_ref(&row));
    write(&a.out_dir.join("summary.csv"), &csv)?;
    let mut json = serde_json::to_string_pretty(&row).expect("row serializes");
    json.push('\n');
    write(&a.out_dir.join("eval.json"), &json)?;
    print!("{csv}");
    Ok(())
}

fn ablate(a: RunArgs) -> Result<()> {
    let cfg = resolve_config(&a.train)?;
    let ds = load_data(&a.data, cfg.seed)?;
    let name = dataset_name(&a.data.data);
    let rows = ablation_grid(&ds, &name, &cfg);
    create_dir(&a.out_dir)?;

    let mut csv = String::from("label,");
    csv.push_str(&SummaryRow::header().join(","));
    csv.push_str(",error\n");
    let mut reports = Vec::new();
    for r in &rows {
        match &r.outcome {
            Ok(rep) => {
                csv.push_str(&format!("\"{}\",{},\n", r.label, rep.summary_row().csv_line()));
                reports.push(rep.clone());
            }
            Err(e) => {
                let blanks = ",".repeat(SummaryRow::header().len() - 1);
                csv.push_str(&format!("\"{}\",{blanks},\"{}\"\n", r.label, e.replace('"', "'")));
            }
        }
    }
    write(&a.out_dir.join("ablation.csv"), &csv)?;
    let mut json = serde_json::to_string_pretty(&rows).expect("rows serialize");
    json.push('\n');
    write(&a.out_dir.join("ablation.json"), &json)?;
    let summary: Vec<SummaryRow> = reports.iter().map(|r| r.summary_row()).collect();
    write(&a.out_dir.join("summary.csv"), &summary_csv(&summary))?;
    print!("{csv}");
    Ok(())
}

fn ood(a: OodArgs) -> Result<()> {
    let base = resolve_config(&a.train)?;
    let methods: Vec<Method> = if a.methods.is_empty() {
        vec![base.method]
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let configs: Vec<TrainConfig> = methods
        .iter()
        .map(|&method| {
            let c = TrainConfig { method, ..base.clone() };
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let seeds = if a.seeds.is_empty() { (0..5).collect() } else { a.seeds.clone() };
    let ds = load_data(&a.data, base.seed)?;
    let rows = ood_sweep(&ds, &configs, &seeds)?;
    create_dir(&a.out_dir)?;
    let csv = ood_csv(&rows);
    write(&a.out_dir.join("ood.csv"), &csv)?;
    let mut json = serde_json::to_string_pretty(&rows).expect("rows serialize");
    json.push('\n');
    write(&a.out_dir.join("ood.json"), &json)?;
    print!("{csv}");
    Ok(())
}

fn read_report(path: &Path) -> Result<ExperimentReport> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file)
        .map_err(|e| LikaError::Data(format!("cannot read {}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| LikaError::Data(format!("{}: {e}", file.display())))
}

fn report(a: ReportArgs) -> Result<()> {
    let format: Format = a.format.parse()?;
    let reports = a.inputs.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let body = emit_report(&reports, format)?;
    create_dir(&a.out_dir)?;
    let path = a.out_dir.join(format!("report.{}", format.extension()));
    write(&path, &body)?;
    println!("{}", path.display());
    Ok(())
}
