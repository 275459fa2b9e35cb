//! The five sub-commands. Each takes a fully resolved [`RunConfig`] and an
//! output directory and leaves a `run.lock` copy of the configuration there.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use omega_core::gradsuite::{gradient_suite, GradReport, SUITE_TOLERANCE};
use omega_core::omega::OmegaNet;
use omega_core::Tensor;
use omega_data::pgm::{read_image, write_labels};
use omega_data::{fmt17, generate_dataset, preprocess, write_dataset};

use crate::config::RunConfig;
use crate::data::{write_folds, Workspace, FOLDS_FILE};
use crate::evaluate::evaluate_samples;
use crate::report::{write_reports, PoseSummary, UNetSummary, PARAMS_HEADER};
use crate::train::{check_meta, fold_dir, load_checkpoint, parse_subjects, train_fold, FoldRun, LogRow, CHECKPOINT};

pub const RUN_LOCK: &str = "run.lock";

pub fn write_lock(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(RUN_LOCK), cfg.to_text())?;
    Ok(())
}

fn is_nonempty_dir(dir: &Path) -> Result<bool> {
    Ok(dir.exists() && fs::read_dir(dir)?.next().is_some())
}

/// Writes the synthetic dataset, its fold file and `run.lock` into `out`.
/// Returns the number of samples written.
pub fn cmd_generate(cfg: &RunConfig, out: &Path, force: bool) -> Result<usize> {
    if is_nonempty_dir(out)? && !force {
        bail!("output directory {} is not empty (use --force to overwrite)", out.display());
    }
    let samples = generate_dataset(&cfg.dataset(), cfg.workers)?;
    write_dataset(out, &samples)?;
    let folds = crate::data::default_folds(cfg, samples.iter().map(|s| &s.subject_id))?;
    write_folds(&out.join(FOLDS_FILE), &folds)?;
    let mut lock = cfg.clone();
    lock.data = Some(out.to_path_buf());
    write_lock(out, &lock)?;
    Ok(samples.len())
}

/// Trains one model per held-out fold under `out/fold{k}`.
pub fn cmd_train(
    cfg: &RunConfig,
    out: &Path,
    resume: bool,
    progress: &mut dyn FnMut(usize, &LogRow),
) -> Result<Vec<FoldRun>> {
    let data = cfg
        .data
        .as_ref()
        .context("no dataset given: pass --data DIR or set `data` in the config")?;
    if !data.join(omega_data::dataset::MANIFEST).exists() {
        bail!("dataset {} has no manifest", data.display());
    }
    if !data.join(FOLDS_FILE).exists() {
        bail!("dataset {} has no {FOLDS_FILE}", data.display());
    }
    write_lock(out, cfg)?;
    let ws = Workspace::load(cfg)?;
    cfg.folds_to_train()
        .into_iter()
        .map(|held_out| train_fold(cfg, &ws, held_out, Some(&fold_dir(out, held_out)), resume, progress))
        .collect()
}

/// Checkpoint files named by `cfg.checkpoint`: a single file, or a training
/// directory holding `fold{k}/checkpoint.ckpt` for every fold to train.
fn checkpoint_files(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let path = cfg
        .checkpoint
        .as_ref()
        .context("no checkpoint given: pass --checkpoint PATH or set `checkpoint` in the config")?;
    if path.is_file() {
        return Ok(vec![path.clone()]);
    }
    if !path.is_dir() {
        bail!("checkpoint {} does not exist", path.display());
    }
    let files: Vec<PathBuf> = cfg
        .folds_to_train()
        .into_iter()
        .map(|f| fold_dir(path, f).join(CHECKPOINT))
        .filter(|p| p.exists())
        .collect();
    if files.is_empty() {
        bail!("no fold checkpoints found under {}", path.display());
    }
    Ok(files)
}

/// Evaluation of one checkpoint.
#[derive(Debug, Clone)]
pub struct FoldEvaluation {
    pub held_out: usize,
    pub eval_fold: usize,
    pub unets: Vec<UNetSummary>,
    pub pose: Option<PoseSummary>,
}

/// Evaluates every checkpoint on its held-out fold (or `eval_fold`), writing
/// reports to `out/fold{k}`. Evaluating on training subjects is an error.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<Vec<FoldEvaluation>> {
    write_lock(out, cfg)?;
    let ws = Workspace::load(cfg)?;
    let net = OmegaNet::new(cfg.network())?;
    let mut evaluations = Vec::new();
    for file in checkpoint_files(cfg)? {
        let ckpt = load_checkpoint(&file)?;
        check_meta(cfg, &ckpt.meta)?;
        let held_out: usize = ckpt
            .meta
            .get("held_out_fold")
            .context("checkpoint lacks held_out_fold")?
            .parse()?;
        let eval_fold = cfg.eval_fold.unwrap_or(held_out);
        if eval_fold >= ws.folds.k {
            bail!("eval_fold {eval_fold} does not exist ({} folds)", ws.folds.k);
        }
        let trained: BTreeSet<usize> = parse_subjects(&ckpt.meta)?.into_iter().collect();
        let samples = ws.in_folds(&[eval_fold]);
        let leaked: BTreeSet<usize> = samples
            .iter()
            .map(|s| s.subject_id)
            .filter(|s| trained.contains(s))
            .collect();
        if !leaked.is_empty() {
            bail!(
                "fold leakage: fold {eval_fold} contains subjects {:?} used to train {}",
                leaked,
                file.display()
            );
        }
        let results = evaluate_samples(&net, &ckpt.params, &samples, cfg.workers)?;
        let (unets, pose) = write_reports(&fold_dir(out, held_out), &results, cfg.variant.depth() + 1)?;
        evaluations.push(FoldEvaluation {
            held_out,
            eval_fold,
            unets,
            pose,
        });
    }
    Ok(evaluations)
}

/// Predicts label maps and poses for `cfg.input`: a dataset directory or a
/// single PGM image. Writes `labels/{id}_unet{u}.pgm` and `params.csv`.
/// Returns the number of images processed.
pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let files = checkpoint_files(cfg)?;
    if files.len() != 1 {
        bail!("predict needs a single checkpoint file, found {}", files.len());
    }
    let ckpt = load_checkpoint(&files[0])?;
    check_meta(cfg, &ckpt.meta)?;
    let input = cfg
        .input
        .as_ref()
        .context("no input given: pass --input PATH or set `input` in the config")?;
    let size = cfg.image_size;
    let images: Vec<(String, Vec<f64>)> = if input.is_dir() {
        let mut c = cfg.clone();
        c.data = Some(input.clone());
        Workspace::load(&c)?
            .samples
            .into_iter()
            .map(|s| (s.id(), s.image))
            .collect()
    } else {
        let (raw, h, w) = read_image(input).with_context(|| format!("reading {}", input.display()))?;
        let name = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        vec![(name, preprocess(&raw, (h, w), size)?.image)]
    };
    write_lock(out, cfg)?;
    let net = OmegaNet::new(cfg.network())?;
    let labels_dir = out.join("labels");
    fs::create_dir_all(&labels_dir)?;
    let mut params = String::from(PARAMS_HEADER);
    params.push('\n');
    for chunk in images.chunks(crate::evaluate::EVAL_CHUNK) {
        let data: Vec<f32> = chunk
            .iter()
            .flat_map(|(_, im)| im.iter().map(|&v| v as f32))
            .collect();
        let batch = Tensor::new(&[chunk.len(), 1, size, size], data)?;
        let pred = net.predict(&ckpt.params, &batch)?;
        for (i, (id, _)) in chunk.iter().enumerate() {
            for (u, maps) in pred.labels.iter().enumerate() {
                write_labels(&labels_dir.join(format!("{id}_unet{u}.pgm")), &maps[i], size)?;
            }
            if let Some(p) = &pred.params {
                let p = p[i];
                let _ = writeln!(params, "{id},{},{},{},{}", fmt17(p.tx), fmt17(p.ty), fmt17(p.theta), fmt17(p.s));
            }
        }
    }
    if cfg.variant.depth() > 0 {
        fs::write(out.join("params.csv"), params)?;
    }
    Ok(images.len())
}

/// Runs the gradient-check suite and renders one line per check. The
/// boolean is true when every check is within tolerance.
pub fn cmd_gradcheck(seed: u64) -> Result<(Vec<GradReport>, String, bool)> {
    let reports = gradient_suite(seed)?;
    let mut text = String::new();
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAILED" };
        let _ = writeln!(text, "{:<40} max_rel_error = {:.3e}  {verdict}", r.name, r.max_rel_error);
    }
    let ok = reports.iter().all(GradReport::passed);
    let _ = writeln!(
        text,
        "{} of {} checks within {SUITE_TOLERANCE:e}",
        reports.iter().filter(|r| r.passed()).count(),
        reports.len()
    );
    Ok((reports, text, ok))
}
