use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use omega_cli::commands::{cmd_evaluate, cmd_generate, cmd_gradcheck, cmd_predict, cmd_train};
use omega_cli::config::RunConfig;

/// Canonical-orientation cardiac MR segmentation on synthetic phantoms.
#[derive(Parser, Debug)]
#[command(name = "omega-seg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Network variant (A = no transformer, B/C/D = 1/2/3 hourglass U-Nets).
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Base preset: desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Allow writing into a non-empty directory.
    #[arg(long, global = true)]
    force: bool,
    /// Continue training from the last saved epoch.
    #[arg(long, global = true)]
    resume: bool,
    /// Dataset directory written by `generate`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Checkpoint file, or a training output directory.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Image or dataset directory for `predict`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Extra `key=value` setting (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset, its fold file and run.lock.
    Generate,
    /// Train one model per held-out fold.
    Train,
    /// Score checkpoints on their held-out folds.
    Evaluate,
    /// Segment images with a trained checkpoint.
    Predict,
    /// Run the finite-difference gradient checks.
    Gradcheck,
}

/// Defaults < preset < config file < flags < `OMEGA_SEG_THREADS`.
fn resolve(c: &Common) -> Result<RunConfig> {
    let file_text = match &c.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?),
        None => None,
    };
    let mut cfg = RunConfig::preset("desk")?;
    if let Some(text) = &file_text {
        cfg.apply_text(text, &c.config.as_ref().unwrap().display().to_string())?;
    }
    if let Some(p) = &c.preset {
        // A preset flag replaces the base, then the file is re-applied on top.
        cfg = RunConfig::preset(p)?;
        if let Some(text) = &file_text {
            let without_preset: String = text
                .lines()
                .filter(|l| l.split('#').next().unwrap_or("").split('=').next().unwrap_or("").trim() != "preset")
                .map(|l| format!("{l}\n"))
                .collect();
            cfg.apply_text(&without_preset, "config")?;
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(v) = &c.variant {
        cfg.set("variant", v)?;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(d) = &c.data {
        cfg.data = Some(d.clone());
    }
    if let Some(p) = &c.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &c.input {
        cfg.input = Some(p.clone());
    }
    for kv in &c.sets {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Ok(t) = std::env::var("OMEGA_SEG_THREADS") {
        cfg.workers = t.trim().parse().with_context(|| format!("OMEGA_SEG_THREADS={t:?}"))?;
    }
    cfg.workers = cfg.workers.max(1);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let out = || -> Result<PathBuf> {
        match &cli.common.out {
            Some(o) => Ok(o.clone()),
            None => bail!("--out DIR is required"),
        }
    };
    match cli.command {
        Command::Generate => {
            let out = out()?;
            let n = cmd_generate(&cfg, &out, cli.common.force)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train => {
            let out = out()?;
            let runs = cmd_train(&cfg, &out, cli.common.resume, &mut |fold, row| {
                let val = row.val_wfiou_median.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                eprintln!(
                    "fold {fold} epoch {:>3} lr {:.2e} loss {:.4} val_wfiou {val}",
                    row.epoch, row.lr, row.losses.total
                );
            })?;
            println!("trained {} fold model(s) in {}", runs.len(), out.display());
        }
        Command::Evaluate => {
            let out = out()?;
            for e in cmd_evaluate(&cfg, &out)? {
                let last = e.unets.last().context("no U-Net outputs")?;
                println!(
                    "fold {} (evaluated on fold {}): final U-Net median wfIoU {:.4}, AUC {:.4}, failure rate {:.4}",
                    e.held_out, e.eval_fold, last.overall.median, last.auc, last.failure_rate
                );
            }
        }
        Command::Predict => {
            let out = out()?;
            let n = cmd_predict(&cfg, &out)?;
            println!("predicted {n} image(s) into {}", out.display());
        }
        Command::Gradcheck => {
            let (_, text, ok) = cmd_gradcheck(cfg.seed)?;
            print!("{text}");
            if !ok {
                bail!("gradient check failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
