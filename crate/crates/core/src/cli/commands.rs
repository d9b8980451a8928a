//! Implementations of the five CLI verbs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as ProcessCommand;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{parse_fractions, parse_usize_list, FileConfig};
use super::{CliError, EvaluateArgs, ReportArgs, SimulateArgs, SweepArgs, TrainArgs};
use crate::checkpoint::TrainedModel;
use crate::events::{load_dataset, save_dataset, split_dataset, Dataset, EventSequence};
use crate::experiment::{
    evaluate_on, mc_sweep, synthesize, train_model, ModelSpec, Prepared, TrainSummary,
};
use crate::metrics::{paired_ttest, EvalReport};
use crate::nn::AdamConfig;
use crate::processes::{ParametricProcess, StopRule};
use crate::rng::derive_rng;
use crate::unipoint::TrainConfig;

/// Resolved global options shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub precision: usize,
}

impl Ctx {
    pub fn resolve(
        file: &FileConfig,
        seed: Option<u64>,
        out: Option<PathBuf>,
        jobs: Option<usize>,
        precision: Option<usize>,
    ) -> Result<Self, CliError> {
        let seed = seed
            .or(file.seed)
            .ok_or_else(|| CliError::Config("--seed is mandatory".to_string()))?;
        let jobs = jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".to_string()));
        }
        let precision = precision.or(file.precision).unwrap_or(17);
        if precision == 0 || precision > 17 {
            return Err(CliError::Config(
                "--precision must be between 1 and 17 significant digits".to_string(),
            ));
        }
        Ok(Self {
            seed,
            out: out.or_else(|| file.out.clone()),
            jobs,
            precision,
        })
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn fmt(&self, x: f64) -> String {
        format!("{:.*e}", self.precision - 1, x)
    }
}

fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct RunMeta<T: Serialize> {
    command: String,
    seed: u64,
    config_hash: String,
    created_unix_ms: u128,
    config: T,
}

impl<T: Serialize> RunMeta<T> {
    fn new(command: &str, seed: u64, config: T) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_hash: config_hash(&config),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            config,
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
struct SimulateConfig {
    process: ParametricProcess,
    sequences: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    seed: u64,
}

fn require(value: Option<f64>, process: &str, flag: &str) -> Result<f64, CliError> {
    value.ok_or_else(|| CliError::Config(format!("--process {process} requires --{flag}")))
}

fn build_process(args: &SimulateArgs, file: &FileConfig) -> Result<ParametricProcess, CliError> {
    if let Some(name) = args.process.as_deref() {
        let p = match name {
            "self-correcting" => ParametricProcess::SelfCorrecting {
                nu: require(args.nu, name, "nu")?,
                gamma: require(args.gamma, name, "gamma")?,
            },
            "exp-hawkes" => ParametricProcess::ExpHawkes {
                mu: require(args.mu, name, "mu")?,
                alpha: require(args.alpha, name, "alpha")?,
                beta: require(args.beta, name, "beta")?,
            },
            "pl-hawkes" => ParametricProcess::PlHawkes {
                mu: require(args.mu, name, "mu")?,
                alpha: require(args.alpha, name, "alpha")?,
                beta: require(args.beta, name, "beta")?,
                delta: require(args.delta, name, "delta")?,
            },
            "decaying-sine" => ParametricProcess::DecayingSine {
                mu: require(args.mu, name, "mu")?,
                alpha: require(args.alpha, name, "alpha")?,
                beta: require(args.beta, name, "beta")?,
                gamma: require(args.gamma, name, "gamma")?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown process `{other}` (expected self-correcting, exp-hawkes, pl-hawkes, or decaying-sine)"
                )))
            }
        };
        p.validate()?;
        return Ok(p);
    }
    if let Some(p) = file.process {
        p.validate()?;
        return Ok(p);
    }
    Err(CliError::Config("--process is required".to_string()))
}

pub fn simulate(ctx: &Ctx, args: &SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let process = build_process(args, file)?;
    let sequences = args
        .sequences
        .or(file.sequences)
        .ok_or_else(|| CliError::Config("--sequences is required".to_string()))?;
    let events = args.events.or(file.events);
    let t_end = args.t_end.or(file.t_end);
    let out = ctx
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out (dataset file path) is required".to_string()))?;
    let cfg = SimulateConfig {
        process,
        sequences,
        events,
        t_end,
        seed: ctx.seed,
    };
    let dataset = match (events, t_end) {
        (Some(n), None) => synthesize(&process, sequences, n, ctx.seed)?,
        (None, Some(horizon)) => {
            use rand::Rng;
            let seqs: Result<Vec<EventSequence>, _> = (0..sequences)
                .into_par_iter()
                .map(|i| {
                    let stream = derive_rng(ctx.seed, "sim", &[i as u64]).random::<u64>();
                    process.simulate(StopRule::Horizon(horizon), stream)
                })
                .collect();
            Dataset::new(seqs.map_err(CliError::from)?).map_err(CliError::from)?
        }
        _ => {
            return Err(CliError::Config(
                "exactly one of --events or --t-end is required".to_string(),
            ))
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    save_dataset(&dataset, &out)?;
    #[derive(Serialize)]
    struct SimMeta {
        #[serde(flatten)]
        run: RunMeta<SimulateConfig>,
        sequences_written: usize,
        total_events: usize,
    }
    let meta = SimMeta {
        run: RunMeta::new("simulate", ctx.seed, cfg),
        sequences_written: dataset.len(),
        total_events: dataset.total_events(),
    };
    write_json(&out.with_extension("meta.json"), &meta)?;
    println!(
        "wrote {} sequences ({} events) to {}",
        dataset.len(),
        dataset.total_events(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
pub(super) struct TrainResolved {
    model: ModelSpec,
    data: PathBuf,
    fractions: (f64, f64, f64),
    normalize_eval_times: bool,
    train: TrainConfig,
}

fn resolve_model_spec(args: &TrainArgs, file: &FileConfig) -> Result<ModelSpec, CliError> {
    let fm = file.model.clone().unwrap_or_default();
    let kind = args
        .model
        .clone()
        .or(fm.kind)
        .ok_or_else(|| CliError::Config("--model is required".to_string()))?;
    match kind.as_str() {
        "unipoint" => {
            let basis = args
                .basis
                .clone()
                .or(fm.basis)
                .ok_or_else(|| CliError::Config("--model unipoint requires --basis".to_string()))?;
            Ok(ModelSpec::UniPoint {
                basis,
                transfer: args.transfer.clone().or(fm.transfer).unwrap_or_else(|| "SOFTPLUS".into()),
                j: args.j.or(fm.j).unwrap_or(64),
                hidden: args.hidden.or(fm.hidden).unwrap_or(48),
                cell: args.cell.clone().or(fm.cell).unwrap_or_else(|| "RNN".into()),
            })
        }
        "rmtpp" => Ok(ModelSpec::Rmtpp {
            hidden: args.hidden.or(fm.hidden).unwrap_or(48),
        }),
        "exphawkes" => Ok(ModelSpec::ExpHawkes),
        "plhawkes" => Ok(ModelSpec::PlHawkes),
        other => Err(CliError::Config(format!(
            "unknown model `{other}` (expected unipoint, rmtpp, exphawkes, or plhawkes)"
        ))),
    }
}

fn resolve_train(ctx: &Ctx, args: &TrainArgs, file: &FileConfig) -> Result<TrainResolved, CliError> {
    let ft = file.train.clone().unwrap_or_default();
    let data = args
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::Config("--data is required".to_string()))?;
    let fractions = match &args.fractions {
        Some(s) => parse_fractions(s)?,
        None => ft.fractions.map(|f| (f[0], f[1], f[2])).unwrap_or((0.6, 0.2, 0.2)),
    };
    let defaults = TrainConfig::default();
    let adam_defaults = AdamConfig::default();
    let train = TrainConfig {
        batch_size: args.batch_size.or(ft.batch_size).unwrap_or(defaults.batch_size),
        mc_samples_train: args.mc_train.or(ft.mc_samples_train).unwrap_or(defaults.mc_samples_train),
        mc_samples_eval: args.mc_eval.or(ft.mc_samples_eval).unwrap_or(defaults.mc_samples_eval),
        early_stop_delta: args
            .early_stop_delta
            .or(ft.early_stop_delta)
            .unwrap_or(defaults.early_stop_delta),
        early_stop_patience: args
            .patience
            .or(ft.early_stop_patience)
            .unwrap_or(defaults.early_stop_patience),
        max_epochs: args.max_epochs.or(ft.max_epochs).unwrap_or(defaults.max_epochs),
        seed: ctx.seed,
        adam: AdamConfig {
            lr: args.lr.or(ft.lr).unwrap_or(adam_defaults.lr),
            weight_decay: args
                .weight_decay
                .or(ft.weight_decay)
                .unwrap_or(adam_defaults.weight_decay),
            ..adam_defaults
        },
    };
    let normalize_eval_times =
        args.normalize_eval_times || ft.normalize_eval_times.unwrap_or(false);
    Ok(TrainResolved {
        model: resolve_model_spec(args, file)?,
        data,
        fractions,
        normalize_eval_times,
        train,
    })
}

#[derive(Serialize)]
struct TrainReportFile {
    #[serde(flatten)]
    run: RunMeta<TrainResolved>,
    summary: TrainSummary,
    split_sizes: (usize, usize, usize),
}

pub fn train(ctx: &Ctx, args: &TrainArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    let resolved = resolve_train(ctx, args, file)?;
    let dataset = load_dataset(&resolved.data)?;
    let prepared = Prepared::new(dataset, resolved.fractions, ctx.seed, resolved.normalize_eval_times)?;
    let (model, summary) = train_model(&resolved.model, &prepared, &resolved.train)?;
    if let TrainSummary::Mle(fit) = &summary {
        if !fit.converged {
            eprintln!(
                "warning: MLE stopped at max steps with gradient norm {:.3e} (tolerance not reached)",
                fit.grad_norm
            );
        }
    }
    let out = ctx.out_dir()?;
    let ck_path = out.join("checkpoint.json");
    model.save(&ck_path)?;
    let split_sizes = (
        prepared.split.train.len(),
        prepared.split.val.len(),
        prepared.split.test.len(),
    );
    let report = TrainReportFile {
        run: RunMeta::new("train", ctx.seed, resolved),
        summary,
        split_sizes,
    };
    write_json(&out.join("report.json"), &report)?;
    println!("checkpoint: {}", ck_path.display());
    Ok(out)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
struct EvaluateConfig {
    checkpoint: PathBuf,
    data: PathBuf,
    split: String,
    mc_samples: usize,
    fractions: (f64, f64, f64),
    seed: u64,
}

pub fn evaluate(ctx: &Ctx, args: &EvaluateArgs, file: &FileConfig) -> Result<(), CliError> {
    let checkpoint = args
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("--checkpoint is required".to_string()))?;
    let data = args
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::Config("--data is required".to_string()))?;
    let fractions = match &args.fractions {
        Some(s) => parse_fractions(s)?,
        None => (0.6, 0.2, 0.2),
    };
    let mc_samples = args.mc_samples.unwrap_or(64);
    let cfg = EvaluateConfig {
        checkpoint: checkpoint.clone(),
        data: data.clone(),
        split: args.split.clone(),
        mc_samples,
        fractions,
        seed: ctx.seed,
    };
    let model = TrainedModel::load(&checkpoint)?;
    let dataset = load_dataset(&data)?;
    let split = split_dataset(dataset.len(), fractions, ctx.seed)?;
    let indices: Vec<usize> = match args.split.as_str() {
        "train" => split.train.clone(),
        "val" => split.val.clone(),
        "test" => split.test.clone(),
        "all" => (0..dataset.len()).collect(),
        other => {
            return Err(CliError::Config(format!(
                "unknown split `{other}` (expected train, val, test, or all)"
            )))
        }
    };
    let seqs: Vec<&EventSequence> = indices.iter().map(|&i| &dataset.sequences[i]).collect();
    let dataset_id = data
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string());
    let report = crate::metrics::holdout_ll(
        &model,
        &seqs,
        mc_samples,
        ctx.seed,
        &model.kind_label(),
        &dataset_id,
    );
    let out = ctx.out_dir()?;
    #[derive(Serialize)]
    struct EvalFile {
        #[serde(flatten)]
        run: RunMeta<EvaluateConfig>,
        report: EvalReport,
    }
    let run = RunMeta::new("evaluate", ctx.seed, cfg);
    let hash = run.config_hash.clone();
    write_json(&out.join("eval.json"), &EvalFile { run, report: report.clone() })?;
    let mut csv = format!("{},seed,config_hash\n", EvalReport::CSV_HEADER);
    csv.push_str(&format!(
        "{},{},{}\n",
        report.csv_row(ctx.precision),
        ctx.seed,
        hash
    ));
    fs::write(out.join("eval.csv"), &csv)?;
    println!(
        "{} on {} [{}]: mean per-event LL {} +- {}",
        report.model,
        report.dataset,
        args.split,
        ctx.fmt(report.mean_per_event_ll),
        ctx.fmt(report.ci95_per_event_ll)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
struct SweepConfig {
    axis: String,
    values: Vec<usize>,
    reference: Option<usize>,
    seed: u64,
}

pub fn sweep(ctx: &Ctx, args: &SweepArgs, file: &FileConfig) -> Result<(), CliError> {
    let axis = args
        .axis
        .clone()
        .ok_or_else(|| CliError::Config("--axis is required (J or mc_samples)".to_string()))?;
    let values = parse_usize_list(
        args.values
            .as_deref()
            .ok_or_else(|| CliError::Config("--values is required".to_string()))?,
    )?;
    match axis.as_str() {
        "J" | "j" => sweep_j(ctx, args, file, &values),
        "mc_samples" | "mc" => sweep_mc(ctx, args, file, &values),
        other => Err(CliError::Config(format!(
            "unknown sweep axis `{other}` (expected J or mc_samples)"
        ))),
    }
}

struct SweepRow {
    value: usize,
    status: String,
    best_val_loss: Option<f64>,
    report: Option<EvalReport>,
}

fn sweep_j(ctx: &Ctx, args: &SweepArgs, file: &FileConfig, values: &[usize]) -> Result<(), CliError> {
    let out = ctx.out_dir()?;
    let hash = config_hash(&SweepConfig {
        axis: "J".into(),
        values: values.to_vec(),
        reference: None,
        seed: ctx.seed,
    });
    let mut rows = Vec::new();
    if ctx.jobs > 1 {
        run_cells_as_processes(ctx, args, values, &out)?;
        for &j in values {
            rows.push(read_cell_result(&out.join(format!("J{j}")), j));
        }
    } else {
        for &j in values {
            let mut cell_args = args.train.clone();
            cell_args.model = Some("unipoint".to_string());
            cell_args.j = Some(j);
            let cell_ctx = Ctx {
                seed: ctx.seed,
                out: Some(out.join(format!("J{j}"))),
                jobs: 1,
                precision: ctx.precision,
            };
            let row = match train_and_eval_cell(&cell_ctx, &cell_args, file, j) {
                Ok(row) => row,
                Err(CliError::Config(m)) => return Err(CliError::Config(m)),
                Err(e) => {
                    eprintln!("warning: sweep cell J={j} failed: {e}");
                    SweepRow {
                        value: j,
                        status: format!("failed: {e}"),
                        best_val_loss: None,
                        report: None,
                    }
                }
            };
            rows.push(row);
        }
    }
    write_sweep_outputs(ctx, &out, "J", &rows, &hash)
}

fn train_and_eval_cell(
    cell_ctx: &Ctx,
    cell_args: &TrainArgs,
    file: &FileConfig,
    value: usize,
) -> Result<SweepRow, CliError> {
    let run_dir = train(cell_ctx, cell_args, file)?;
    let report_text = fs::read_to_string(run_dir.join("report.json"))?;
    let report_json: serde_json::Value = serde_json::from_str(&report_text)
        .map_err(|e| CliError::Io(format!("reading cell report: {e}")))?;
    let best_val = report_json["summary"]["best_val_loss"].as_f64();
    let eval_args = EvaluateArgs {
        checkpoint: Some(run_dir.join("checkpoint.json")),
        data: cell_args.data.clone().or_else(|| file.data.clone()),
        split: "test".to_string(),
        mc_samples: cell_args.mc_eval,
        fractions: cell_args.fractions.clone(),
    };
    evaluate(cell_ctx, &eval_args, file)?;
    let eval_text = fs::read_to_string(run_dir.join("eval.json"))?;
    let eval_json: serde_json::Value = serde_json::from_str(&eval_text)
        .map_err(|e| CliError::Io(format!("reading cell eval: {e}")))?;
    let report: EvalReport = serde_json::from_value(eval_json["report"].clone())
        .map_err(|e| CliError::Io(format!("reading cell eval report: {e}")))?;
    Ok(SweepRow {
        value,
        status: "ok".to_string(),
        best_val_loss: best_val,
        report: Some(report),
    })
}

/// Spawns one child `sweep` process per value, at most `jobs` at a time.
fn run_cells_as_processes(
    ctx: &Ctx,
    args: &SweepArgs,
    values: &[usize],
    out: &Path,
) -> Result<(), CliError> {
    let exe = std::env::current_exe()?;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .div_ceil(ctx.jobs)
        .max(1);
    for chunk in values.chunks(ctx.jobs) {
        let mut children = Vec::new();
        for &j in chunk {
            let mut cmd = ProcessCommand::new(&exe);
            cmd.arg("sweep")
                .arg("--axis")
                .arg("J")
                .arg("--values")
                .arg(j.to_string())
                .arg("--seed")
                .arg(ctx.seed.to_string())
                .arg("--out")
                .arg(out.join(format!("cell-J{j}")))
                .env("RAYON_NUM_THREADS", threads.to_string());
            if let Some(data) = &args.train.data {
                cmd.arg("--data").arg(data);
            }
            forward_train_flags(&mut cmd, &args.train);
            children.push((j, cmd.spawn()?));
        }
        for (j, mut child) in children {
            let status = child.wait()?;
            if !status.success() {
                eprintln!("warning: sweep cell J={j} exited with {status}");
            }
            // A single-value child sweep nests its output one level down.
            let nested = out.join(format!("cell-J{j}")).join(format!("J{j}"));
            let target = out.join(format!("J{j}"));
            if nested.exists() && !target.exists() {
                fs::rename(&nested, &target)?;
            }
        }
    }
    Ok(())
}

fn forward_train_flags(cmd: &mut ProcessCommand, train: &TrainArgs) {
    if let Some(v) = &train.basis {
        cmd.arg("--basis").arg(v);
    }
    if let Some(v) = &train.transfer {
        cmd.arg("--transfer").arg(v);
    }
    if let Some(v) = train.hidden {
        cmd.arg("--hidden").arg(v.to_string());
    }
    if let Some(v) = &train.cell {
        cmd.arg("--cell").arg(v);
    }
    if let Some(v) = train.batch_size {
        cmd.arg("--batch-size").arg(v.to_string());
    }
    if let Some(v) = train.mc_train {
        cmd.arg("--mc-train").arg(v.to_string());
    }
    if let Some(v) = train.mc_eval {
        cmd.arg("--mc-eval").arg(v.to_string());
    }
    if let Some(v) = train.early_stop_delta {
        cmd.arg("--early-stop-delta").arg(v.to_string());
    }
    if let Some(v) = train.patience {
        cmd.arg("--patience").arg(v.to_string());
    }
    if let Some(v) = train.max_epochs {
        cmd.arg("--max-epochs").arg(v.to_string());
    }
    if let Some(v) = train.lr {
        cmd.arg("--lr").arg(v.to_string());
    }
    if let Some(v) = train.weight_decay {
        cmd.arg("--weight-decay").arg(v.to_string());
    }
    if train.normalize_eval_times {
        cmd.arg("--normalize-eval-times");
    }
    if let Some(v) = &train.fractions {
        cmd.arg("--fractions").arg(v);
    }
}

fn read_cell_result(cell_dir: &Path, value: usize) -> SweepRow {
    let failed = |msg: String| SweepRow {
        value,
        status: format!("failed: {msg}"),
        best_val_loss: None,
        report: None,
    };
    let eval_text = match fs::read_to_string(cell_dir.join("eval.json")) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let eval_json: serde_json::Value = match serde_json::from_str(&eval_text) {
        Ok(v) => v,
        Err(e) => return failed(e.to_string()),
    };
    let report: Option<EvalReport> = serde_json::from_value(eval_json["report"].clone()).ok();
    let best_val = fs::read_to_string(cell_dir.join("report.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["summary"]["best_val_loss"].as_f64());
    match report {
        Some(report) => SweepRow {
            value,
            status: "ok".to_string(),
            best_val_loss: best_val,
            report: Some(report),
        },
        None => failed("missing eval report".to_string()),
    }
}

fn write_sweep_outputs(
    ctx: &Ctx,
    out: &Path,
    axis: &str,
    rows: &[SweepRow],
    hash: &str,
) -> Result<(), CliError> {
    let mut tidy = format!("{axis},status,mean_ll,ci95,n,best_val_loss,seed,config_hash\n");
    let mut long = format!("{axis},seq_index,per_event_ll\n");
    for row in rows {
        match &row.report {
            Some(r) => {
                tidy.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.value,
                    row.status,
                    ctx.fmt(r.mean_per_event_ll),
                    ctx.fmt(r.ci95_per_event_ll),
                    r.n,
                    row.best_val_loss.map(|v| ctx.fmt(v)).unwrap_or_default(),
                    ctx.seed,
                    hash
                ));
                for (i, ll) in r.per_event_ll.iter().enumerate() {
                    long.push_str(&format!("{},{},{}\n", row.value, i, ctx.fmt(*ll)));
                }
            }
            None => tidy.push_str(&format!(
                "{},{},,,,,{},{}\n",
                row.value, row.status, ctx.seed, hash
            )),
        }
    }
    fs::write(out.join("results.csv"), &tidy)?;
    fs::write(out.join("results_long.csv"), &long)?;
    println!("sweep table: {}", out.join("results.csv").display());
    Ok(())
}

fn sweep_mc(ctx: &Ctx, args: &SweepArgs, file: &FileConfig, values: &[usize]) -> Result<(), CliError> {
    let checkpoint = args
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("mc_samples sweep requires --checkpoint".to_string()))?;
    let data = args
        .train
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::Config("--data is required".to_string()))?;
    let reference = args.reference.unwrap_or(256);
    let fractions = match &args.train.fractions {
        Some(s) => parse_fractions(s)?,
        None => (0.6, 0.2, 0.2),
    };
    let model = TrainedModel::load(&checkpoint)?;
    let dataset = load_dataset(&data)?;
    let split = split_dataset(dataset.len(), fractions, ctx.seed)?;
    let seqs: Vec<&EventSequence> = split.test.iter().map(|&i| &dataset.sequences[i]).collect();
    let cells = mc_sweep(&model, &seqs, values, reference, ctx.seed);
    let out = ctx.out_dir()?;
    let hash = config_hash(&SweepConfig {
        axis: "mc_samples".into(),
        values: values.to_vec(),
        reference: Some(reference),
        seed: ctx.seed,
    });
    let mut tidy = String::from("mc_samples,status,mean_abs_delta,std_abs_delta,reference,seed,config_hash\n");
    let mut long = String::from("mc_samples,seq_index,abs_delta\n");
    for cell in &cells {
        tidy.push_str(&format!(
            "{},ok,{},{},{},{},{}\n",
            cell.mc_samples,
            ctx.fmt(cell.mean_abs_delta),
            ctx.fmt(cell.std_abs_delta),
            reference,
            ctx.seed,
            hash
        ));
        for (i, d) in cell.per_seq_abs_delta.iter().enumerate() {
            long.push_str(&format!("{},{},{}\n", cell.mc_samples, i, ctx.fmt(*d)));
        }
    }
    fs::write(out.join("results.csv"), &tidy)?;
    fs::write(out.join("results_long.csv"), &long)?;
    println!("sweep table: {}", out.join("results.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
struct ReportConfig {
    sequences: usize,
    events: usize,
    seed: u64,
}

pub fn report(ctx: &Ctx, args: &ReportArgs, file: &FileConfig) -> Result<(), CliError> {
    let sequences = args.sequences.or(file.sequences).unwrap_or(512);
    let events = args.events.or(file.events).unwrap_or(128);
    let out = ctx.out_dir()?;
    let cfg = ReportConfig {
        sequences,
        events,
        seed: ctx.seed,
    };
    let hash = config_hash(&cfg);

    let generators: [(&str, ParametricProcess); 3] = [
        ("selfcorrecting", ParametricProcess::SelfCorrecting { nu: 1.0, gamma: 1.0 }),
        ("exphawkes", ParametricProcess::ExpHawkes { mu: 0.5, alpha: 0.8, beta: 1.0 }),
        (
            "decayingsine",
            ParametricProcess::DecayingSine {
                mu: 0.5,
                alpha: 5.0 * std::f64::consts::PI,
                beta: 2.0,
                gamma: 1.0,
            },
        ),
    ];
    let half = 32.max(1);
    let models: Vec<ModelSpec> = vec![
        ModelSpec::unipoint("EXP", 64),
        ModelSpec::unipoint("PL", 64),
        ModelSpec::unipoint("RELU", 64),
        ModelSpec::unipoint("COS", 64),
        ModelSpec::unipoint("SIG", 64),
        ModelSpec::unipoint(&format!("MIXED(PL{half}+RELU{half})"), 64),
        ModelSpec::Rmtpp { hidden: 48 },
        ModelSpec::ExpHawkes,
        ModelSpec::PlHawkes,
    ];

    let data_dir = out.join("datasets");
    fs::create_dir_all(&data_dir)?;
    let base = resolve_train_defaults(ctx, &args.train, file)?;

    let mut table = format!("{},seed,config_hash\n", EvalReport::CSV_HEADER);
    let mut tests = String::from("dataset,best_baseline,best_unipoint,mean_ll_gap,p_value,degenerate\n");
    for (name, process) in &generators {
        println!("[report] dataset {name}: {sequences} x {events} events");
        let dataset = synthesize(process, sequences, events, ctx.seed)?;
        save_dataset(&dataset, data_dir.join(format!("{name}.jsonl")))?;
        let prepared = Prepared::new(dataset, base.fractions, ctx.seed, base.normalize_eval_times)?;
        let mut reports: Vec<(String, EvalReport, bool)> = Vec::new();
        for spec in &models {
            let label = spec.label();
            println!("[report]   training {label}");
            let run_dir = out.join("runs").join(name).join(&label);
            fs::create_dir_all(&run_dir)?;
            let (model, summary) = train_model(spec, &prepared, &base.train)?;
            model.save(run_dir.join("checkpoint.json"))?;
            write_json(&run_dir.join("report.json"), &summary)?;
            let eval = evaluate_on(
                &model,
                &prepared,
                &prepared.split.test,
                base.train.mc_samples_eval,
                ctx.seed,
                name,
            );
            write_json(&run_dir.join("eval.json"), &eval)?;
            table.push_str(&format!("{},{},{}\n", eval.csv_row(ctx.precision), ctx.seed, hash));
            let is_baseline = !matches!(spec, ModelSpec::UniPoint { .. });
            reports.push((label, eval, is_baseline));
        }
        let best = |baseline: bool| {
            reports
                .iter()
                .filter(|(_, _, b)| *b == baseline)
                .max_by(|a, b| a.1.mean_per_event_ll.total_cmp(&b.1.mean_per_event_ll))
        };
        if let (Some(bb), Some(bu)) = (best(true), best(false)) {
            let t = paired_ttest(&bu.1, &bb.1)
                .map_err(|e| CliError::Config(e.to_string()))?;
            tests.push_str(&format!(
                "{},{},{},{},{},{}\n",
                name,
                bb.0,
                bu.0,
                ctx.fmt(bu.1.mean_per_event_ll - bb.1.mean_per_event_ll),
                ctx.fmt(t.p_value),
                t.degenerate
            ));
        }
    }
    fs::write(out.join("report.csv"), &table)?;
    fs::write(out.join("report_tests.csv"), &tests)?;
    write_json(&out.join("report_meta.json"), &RunMeta::new("report", ctx.seed, cfg))?;
    println!("comparison table: {}", out.join("report.csv").display());
    Ok(())
}

fn resolve_train_defaults(
    ctx: &Ctx,
    args: &TrainArgs,
    file: &FileConfig,
) -> Result<TrainResolved, CliError> {
    let mut args = args.clone();
    if args.model.is_none() {
        args.model = Some("unipoint".to_string());
    }
    if args.basis.is_none() {
        args.basis = Some("EXP".to_string());
    }
    if args.data.is_none() {
        // The report command synthesizes its own datasets.
        args.data = Some(PathBuf::from("unused"));
    }
    resolve_train(ctx, &args, file)
}
