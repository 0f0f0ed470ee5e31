//! `flowpf generate|train|eval|export`.

mod config;
mod report;

pub use config::{KeyValues, RunConfig, KEYS};
pub use report::{
    long_rows, overlay, read_overlay, read_report, report_rows, summarize, write_long, write_overlay, write_report,
    write_summary, LongRow, Overlay, ReportRow, Summary, LONG_HEADER, REPORT_HEADER, SUMMARY_HEADER,
};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diskworld::{export_pngs, Dataset};
use crate::error::{Error, Result};
use crate::filtering::FlowModel;
use crate::learning::{
    evaluate, load_checkpoint, save_checkpoint, train, write_metrics, Checkpoint, EpochMetrics, Method, TrainState,
};
use crate::nn::ParameterStore;
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "flowpf", version, about = "Differentiable particle filters with flow proposals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a disk-tracking dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also write the frames of the first trajectory of each split as PNGs.
        #[arg(long, value_name = "DIR")]
        png: Option<PathBuf>,
    },
    /// Train a filter; writes a checkpoint and a metrics CSV.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        metrics: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Evaluate one checkpoint per training seed on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long = "checkpoint", value_name = "PATH")]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the summary table here.
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
    /// Turn evaluation reports into plot-ready tables.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long = "report", value_name = "PATH")]
        reports: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        overlay: Option<PathBuf>,
        /// Trajectory shown in the overlay table.
        #[arg(long, default_value_t = 0)]
        traj: usize,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::read(p)?,
            None => KeyValues::default(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            kv.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            kv.set("seed", seed)?;
        }
        if let Some(m) = self.method {
            kv.set("method", m)?;
        }
        RunConfig::from_kv(&kv)
    }
}

/// 2 for configuration problems, 3 for unreadable or inconsistent data,
/// 4 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Format(_) | Error::Version { .. } | Error::Truncated(_) | Error::Io(_) | Error::MissingParameter(_) => 3,
        _ => 4,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, png } => cmd_generate(&common, png.as_deref()),
        Command::Train { common, dataset, metrics, resume } => {
            cmd_train(&common, dataset.as_deref(), metrics.as_deref(), resume.as_deref())
        }
        Command::Eval { common, dataset, checkpoints, split, summary } => {
            cmd_eval(&common, dataset.as_deref(), &checkpoints, &split, summary.as_deref())
        }
        Command::Export { common, reports, overlay, traj } => cmd_export(&common, &reports, overlay.as_deref(), traj),
    }
}

fn pick(flag: Option<&Path>, key: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| key.clone())
        .ok_or_else(|| Error::Config(format!("no {what} path given")))
}

/// Prefix I/O errors with the offending path.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(at(path, File::create(path).map_err(Error::from))?))
}

fn cmd_generate(common: &Common, png: Option<&Path>) -> Result<()> {
    let cfg = common.resolve()?;
    let out = pick(common.out.as_deref(), &cfg.dataset, "dataset")?;
    let ds = Dataset::generate(&cfg.env, cfg.train.seed, cfg.n_train, cfg.n_val, cfg.n_test)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ds.write(&out)?;
    if let Some(dir) = png {
        for split in ["train", "val", "test"] {
            if let Some(tr) = ds.split(split)?.first() {
                export_pngs(tr, dir, &format!("{split}_000"))?;
            }
        }
    }
    let bytes = std::fs::metadata(&out)?.len();
    println!(
        "wrote {} trajectories (train {}, val {}, test {}) of {} steps, {}x{} frames, {} distractors, seed {} to {} ({bytes} bytes)",
        ds.len(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        cfg.env.steps,
        cfg.env.image_size,
        cfg.env.image_size,
        cfg.env.n_distractors,
        cfg.train.seed,
        out.display()
    );
    Ok(())
}

/// The dataset must have the frame size the configuration (or checkpoint)
/// expects.
pub fn check_compatible(model: &FlowModel, ds: &Dataset) -> Result<()> {
    let obs_dim = ds.config.obs_dim();
    if model.config.obs_dim != obs_dim {
        return Err(Error::Config(format!(
            "model expects {}-dimensional observations but the dataset frames have {obs_dim}",
            model.config.obs_dim
        )));
    }
    Ok(())
}

/// Fresh model and parameters for `cfg`, or the state stored in `resume`.
pub fn prepare_training(cfg: &RunConfig, ds: &Dataset, resume: Option<Checkpoint>) -> Result<(FlowModel, TrainState)> {
    let (model, state) = match resume {
        Some(ck) => {
            if ck.method != cfg.method || ck.seed != cfg.train.seed {
                return Err(Error::Config(format!(
                    "checkpoint was trained with {} seed {}, config asks for {} seed {}",
                    ck.method, ck.seed, cfg.method, cfg.train.seed
                )));
            }
            if ck.model.config != cfg.model_config(cfg.train.flows) {
                return Err(Error::Config("checkpoint model configuration differs from the config".into()));
            }
            (ck.model, ck.state)
        }
        None => {
            let model = cfg.build_model(ds.observation_normalizer())?;
            let mut store = ParameterStore::new();
            model.init(&mut store, &mut rng::stream(cfg.train.seed, &[rng::PARAMS]))?;
            (model, TrainState::fresh(store, cfg.train.lr))
        }
    };
    check_compatible(&model, ds)?;
    Ok((model, state))
}

/// Train per `cfg`, returning the model and final state.
pub fn run_training(
    cfg: &RunConfig,
    ds: &Dataset,
    resume: Option<Checkpoint>,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(FlowModel, TrainState)> {
    let (model, state) = prepare_training(cfg, ds, resume)?;
    let state = train(&model, state, &ds.episodes("train")?, &ds.episodes("val")?, &cfg.train, on_epoch)?;
    Ok((model, state))
}

fn cmd_train(common: &Common, dataset: Option<&Path>, metrics: Option<&Path>, resume: Option<&Path>) -> Result<()> {
    let cfg = common.resolve()?;
    let ds_path = pick(dataset, &cfg.dataset, "dataset")?;
    let ds = at(&ds_path, Dataset::read(&ds_path))?;
    let ckpt_path = pick(common.out.as_deref(), &cfg.checkpoint, "checkpoint")?;
    let metrics_path = metrics
        .map(Path::to_path_buf)
        .or_else(|| cfg.metrics.clone())
        .unwrap_or_else(|| ckpt_path.with_extension("csv"));
    let resume = resume.map(|p| at(p, load_checkpoint(p))).transpose()?;
    let (model, state) = run_training(&cfg, &ds, resume, |m| {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  ess {:.2}  loss {:.4}",
            m.epoch, m.train_rmse, m.val_rmse, m.mean_ess, m.loss
        );
    })?;
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&ckpt_path, &model, &state, cfg.method, cfg.train.seed)?;
    let mut out = create(&metrics_path)?;
    write_metrics(&state.history, &mut out)?;
    out.flush()?;
    match state.history.last() {
        Some(m) => println!(
            "{}: final val RMSE {:.4} (best {:.4} at epoch {})",
            cfg.method, m.val_rmse, state.best_val, state.best_epoch
        ),
        None => println!("{}: no epochs run, wrote initial checkpoint", cfg.method),
    }
    println!("checkpoint {}  metrics {}", ckpt_path.display(), metrics_path.display());
    Ok(())
}

/// Filter-stream seed for evaluating a checkpoint trained with `seed`.
pub fn test_seed(seed: u64) -> u64 {
    rng::derive(seed, &[rng::TEST])
}

/// Report rows for the best parameters of `ck` on `split`.
pub fn evaluate_checkpoint(ck: &Checkpoint, cfg: &RunConfig, ds: &Dataset, split: &str) -> Result<Vec<ReportRow>> {
    check_compatible(&ck.model, ds)?;
    let episodes = ds.episodes(split)?;
    let mut tc = cfg.train.clone();
    ck.method.configure(&mut tc);
    let evals = evaluate(&ck.model, &ck.state.best_params, &episodes, &tc.filter_config(), test_seed(ck.seed))?;
    report_rows(&ck.method.to_string(), ck.seed, &evals, &episodes)
}

fn cmd_eval(
    common: &Common,
    dataset: Option<&Path>,
    checkpoints: &[PathBuf],
    split: &str,
    summary: Option<&Path>,
) -> Result<()> {
    let cfg = common.resolve()?;
    let ds_path = pick(dataset, &cfg.dataset, "dataset")?;
    let ds = at(&ds_path, Dataset::read(&ds_path))?;
    let paths = if checkpoints.is_empty() {
        vec![pick(None, &cfg.checkpoint, "checkpoint")?]
    } else {
        checkpoints.to_vec()
    };
    let out = pick(common.out.as_deref(), &cfg.report, "report")?;
    let mut rows = Vec::new();
    for p in &paths {
        rows.extend(evaluate_checkpoint(&at(p, load_checkpoint(p))?, &cfg, &ds, split)?);
    }
    let mut w = create(&out)?;
    write_report(&rows, &mut w)?;
    w.flush()?;
    let summaries = summarize(&rows);
    for s in &summaries {
        println!(
            "{}: {split} RMSE {:.3} ± {:.3} over {} seed(s), mean ESS {:.2}",
            s.method, s.mean_rmse, s.std_rmse, s.n_seeds, s.mean_ess
        );
    }
    if let Some(p) = summary {
        let mut w = create(p)?;
        write_summary(&summaries, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_export(common: &Common, reports: &[PathBuf], overlay_path: Option<&Path>, traj: usize) -> Result<()> {
    let cfg = common.resolve()?;
    let paths = if reports.is_empty() {
        vec![pick(None, &cfg.report, "report")?]
    } else {
        reports.to_vec()
    };
    let mut rows = Vec::new();
    for p in &paths {
        let file = at(p, File::open(p).map_err(Error::from))?;
        rows.extend(at(p, read_report(BufReader::new(file)))?);
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| paths[0].with_extension("long.csv"));
    let long = long_rows(&rows);
    let mut w = create(&out)?;
    write_long(&long, &mut w)?;
    w.flush()?;
    let overlay_path = overlay_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths[0].with_extension("overlay.csv"));
    let o = overlay(&rows, traj)?;
    let mut w = create(&overlay_path)?;
    write_overlay(&o, &mut w)?;
    w.flush()?;
    println!(
        "wrote {} long rows to {} and {} overlay rows to {}",
        long.len(),
        out.display(),
        o.rows.len(),
        overlay_path.display()
    );
    Ok(())
}
