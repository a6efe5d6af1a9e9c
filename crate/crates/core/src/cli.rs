//! Command-line front end. `cli` returns the process exit code: 0 on success,
//! 2 for usage errors, 3 for invalid configuration and 1 for anything else.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{
    coupon_expected_steps, estimate_grad_variance, probe_gradient_norm, simulate_random_coverage,
    simulate_scheduled_coverage, ProbeSet,
};
use crate::baselines::run_baseline;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{ExperimentConfig, RunPlan};
use crate::cyclic::{run_cgap, DEFAULT_PROBE_SAMPLES};
use crate::error::{GapError, Result};
use crate::metrics::{
    coverage_rows, save_metrics, write_convergence, write_coverage, ConvergenceRow,
};
use crate::parallel::run_pgap;
use crate::sparsity::{flops_estimate, global_sparsity};
use crate::train::{evaluate, RunRecord};

#[derive(Debug, Parser)]
#[command(
    name = "gapsparse",
    version,
    about = "Scheduled grow-and-prune sparse training"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured training method; writes a metrics CSV and a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Steps-to-full-coverage of random versus scheduled exploration.
    Coverage {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gradient diagnostics of a checkpoint on the configured data.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-layer sparsity and FLOPs of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Runs the CLI against the process's standard streams.
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let text = e.to_string();
            let reason = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            let _ = writeln!(err, "{}", reason.trim());
            return 2;
        }
    };
    match dispatch(args.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &GapError) -> i32 {
    match e.root() {
        GapError::Usage(_) => 2,
        GapError::Config(_) => 3,
        _ => 1,
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Train { config } => train(&config, out),
        Command::Coverage { config } => coverage(&config, out),
        Command::Diagnose { checkpoint, config } => diagnose(&checkpoint, &config, out),
        Command::Inspect { checkpoint } => inspect(&checkpoint, out),
    }
}

/// Runs a config and returns the record plus the paths written.
pub fn run_config(cfg: &ExperimentConfig) -> Result<(RunRecord, PathBuf, PathBuf)> {
    let data = cfg.dataset(Path::new(""))?;
    let model = cfg.model()?;
    let (model, masks, record) = match cfg.plan()? {
        RunPlan::Gap(g) => {
            let o = run_cgap(&g, model, &data)?;
            (o.model, o.masks, o.record)
        }
        RunPlan::Parallel(g, opts) => {
            let o = run_pgap(&g, model, &data, &opts)?;
            (o.model, o.masks, o.record)
        }
        RunPlan::Baseline(b) => {
            let o = run_baseline(&b, model, &data)?;
            (o.model, o.masks, o.record)
        }
    };
    std::fs::create_dir_all(&cfg.run.output_dir)?;
    let metrics = cfg
        .run
        .output_dir
        .join(format!("{}.metrics.csv", cfg.run.run_id));
    let ckpt = cfg.run.output_dir.join(format!("{}.ckpt", cfg.run.run_id));
    save_metrics(&metrics, &record.rows)?;
    save_checkpoint(&model, &masks, &ckpt)?;
    Ok((record, metrics, ckpt))
}

fn train(path: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let (record, metrics, ckpt) = run_config(&cfg)?;
    writeln!(
        out,
        "{} {}: val_accuracy={:.4} val_loss={:.4} epochs={}",
        record.method.name(),
        record.run_id,
        record.final_eval.accuracy,
        record.final_eval.loss,
        record.epochs_trained
    )?;
    writeln!(out, "metrics: {}", metrics.display())?;
    writeln!(out, "checkpoint: {}", ckpt.display())?;
    Ok(())
}

fn coverage(path: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let c = cfg
        .coverage
        .as_ref()
        .ok_or_else(|| GapError::Config("coverage needs a [coverage] section".into()))?;
    let random = simulate_random_coverage(c.n, c.per_step, c.trials, cfg.run.seed)?;
    let scheduled = simulate_scheduled_coverage(c.n, c.per_step, c.trials)?;
    if c.per_step == 1 {
        writeln!(out, "oracle n*H_n = {:.4}", coupon_expected_steps(c.n, 1)?)?;
    }
    writeln!(
        out,
        "random: mean={:.4} std={:.4} p95={} over {} trials",
        random.mean,
        random.std,
        random.quantile(0.95),
        random.trials
    )?;
    writeln!(out, "scheduled: always {} steps", scheduled.quantile(1.0))?;
    std::fs::create_dir_all(&cfg.run.output_dir)?;
    let csv_path = cfg
        .run
        .output_dir
        .join(format!("{}.coverage.csv", cfg.run.run_id));
    let mut rows = coverage_rows("random", &random);
    rows.extend(coverage_rows("scheduled", &scheduled));
    write_coverage(std::fs::File::create(&csv_path)?, &rows)?;
    writeln!(out, "distribution: {}", csv_path.display())?;
    Ok(())
}

fn diagnose(ckpt: &Path, config: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let (model, masks) = load_checkpoint(ckpt)?;
    let data = cfg.dataset(Path::new(""))?;
    if data.input_dim() != model.input_dim() {
        return Err(GapError::Shape(format!(
            "checkpoint expects {} inputs, data has {}",
            model.input_dim(),
            data.input_dim()
        )));
    }
    let samples = cfg
        .gap
        .as_ref()
        .map_or(DEFAULT_PROBE_SAMPLES, |g| g.probe_samples);
    let probe = ProbeSet::from_split(
        &data.train,
        samples,
        cfg.train_settings()?.batch_size,
        cfg.run.seed,
    )?;
    let row = ConvergenceRow {
        round: 0,
        grad_norm_sq: probe_gradient_norm(&model, &masks, &probe.x, &probe.y)?,
        delta_sq: None,
        grad_variance: estimate_grad_variance(&model, &masks, &probe.batches)?,
    };
    write_convergence(&mut *out, &[row])?;
    let eval = evaluate(&model, &data.validation)?;
    writeln!(
        out,
        "# val_accuracy={:.4} val_loss={:.4}",
        eval.accuracy, eval.loss
    )?;
    Ok(())
}

fn inspect(ckpt: &Path, out: &mut dyn Write) -> Result<()> {
    let (model, masks) = load_checkpoint(ckpt)?;
    writeln!(out, "layer,shape,active,sparsity")?;
    for (id, m) in masks.masks().iter().enumerate() {
        let shape = m
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        writeln!(out, "fc{id},{shape},{},{:.6}", m.active(), m.sparsity())?;
    }
    writeln!(out, "global_sparsity={:.6}", global_sparsity(&masks))?;
    writeln!(out, "flops={}", flops_estimate(&model, &masks)?)?;
    Ok(())
}
