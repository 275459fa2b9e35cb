//! Cross-validated training: one model per held-out fold, a CSV log per
//! fold, and per-epoch checkpoints that allow resuming.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use indexmap::IndexMap;
use omega_core::metrics::summarize;
use omega_core::nn::{read_checkpoint, write_checkpoint, Adam, ParamStore};
use omega_core::omega::{LossBreakdown, OmegaNet};
use omega_data::{mix_seed, stream_seed, Prepared};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::{make_batch, Workspace};
use crate::evaluate::{evaluate_samples, wfiou_values};

pub const LOG_HEADER: &str =
    "epoch,lr,L_SU,L_tx,L_ty,L_theta,L_s,L_It,L_Itheta,L_Is,L_SH_1,L_SH_2,L_SH_3,L_total,val_wfiou_median";
pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const OPTIMIZER: &str = "optimizer.ckpt";
pub const LOG: &str = "log.csv";

/// Mean losses of one epoch plus the validation score.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub lr: f64,
    pub losses: LossBreakdown,
    pub val_wfiou_median: Option<f64>,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let f = |v: f64| v.to_string();
        let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
        let l = &self.losses;
        let mut cells = vec![self.epoch.to_string(), f(self.lr), f(l.su)];
        for i in 0..4 {
            cells.push(opt(l.matrix.map(|m| m[i])));
        }
        for i in 0..3 {
            cells.push(opt(l.image.map(|m| m[i])));
        }
        for i in 0..3 {
            cells.push(opt(l.sh.get(i).copied()));
        }
        cells.push(f(l.total));
        cells.push(opt(self.val_wfiou_median));
        cells.join(",")
    }
}

fn mean_breakdown(rows: &[LossBreakdown]) -> LossBreakdown {
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&LossBreakdown) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let first = &rows[0];
    LossBreakdown {
        su: mean(&|r| r.su),
        matrix: first
            .matrix
            .map(|_| std::array::from_fn(|i| mean(&|r: &LossBreakdown| r.matrix.map_or(0.0, |m| m[i])))),
        image: first
            .image
            .map(|_| std::array::from_fn(|i| mean(&|r: &LossBreakdown| r.image.map_or(0.0, |m| m[i])))),
        sh: (0..first.sh.len()).map(|i| mean(&|r| r.sh[i])).collect(),
        total: mean(&|r| r.total),
    }
}

/// Outcome of training one fold combination.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub held_out: usize,
    pub store: ParamStore<f32>,
    pub rows: Vec<LogRow>,
    pub train_subjects: Vec<usize>,
}

pub fn fold_dir(out: &Path, held_out: usize) -> PathBuf {
    out.join(format!("fold{held_out}"))
}

/// Checkpoint metadata identifying the network and its training subjects.
pub fn checkpoint_meta(cfg: &RunConfig, held_out: usize, epochs_done: usize, train_subjects: &[usize], steps: u64) -> IndexMap<String, String> {
    let mut m = IndexMap::new();
    m.insert("variant".into(), cfg.variant.to_string());
    m.insert("image_size".into(), cfg.image_size.to_string());
    m.insert("depth".into(), cfg.depth.to_string());
    m.insert("base_filters".into(), cfg.base_filters.to_string());
    m.insert("head_kernel".into(), cfg.head_kernel.to_string());
    m.insert("locnet_filters".into(), cfg.locnet_filters.to_string());
    m.insert("locnet_hidden".into(), cfg.locnet_hidden.to_string());
    m.insert("held_out_fold".into(), held_out.to_string());
    m.insert("epochs_done".into(), epochs_done.to_string());
    m.insert("optimizer_steps".into(), steps.to_string());
    m.insert(
        "train_subjects".into(),
        train_subjects.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
    );
    m
}

/// Verifies that a checkpoint was produced for the configured network.
pub fn check_meta(cfg: &RunConfig, meta: &IndexMap<String, String>) -> Result<()> {
    let expected = checkpoint_meta(cfg, 0, 0, &[], 0);
    for key in ["variant", "image_size", "depth", "base_filters", "head_kernel", "locnet_filters", "locnet_hidden"] {
        let found = meta.get(key).map(String::as_str).unwrap_or("<missing>");
        if found != expected[key] {
            bail!(
                "checkpoint/config mismatch: {key} is {found} in the checkpoint but {} in the configuration",
                expected[key]
            );
        }
    }
    Ok(())
}

pub fn parse_subjects(meta: &IndexMap<String, String>) -> Result<Vec<usize>> {
    let raw = meta.get("train_subjects").context("checkpoint lacks train_subjects")?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| Ok(s.parse()?)).collect()
}

pub fn load_checkpoint(path: &Path) -> Result<omega_core::nn::Checkpoint<f32>> {
    let f = fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    Ok(read_checkpoint(BufReader::new(f))?)
}

fn save(path: &Path, store: &ParamStore<f32>, meta: &IndexMap<String, String>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_checkpoint(&mut w, store, meta)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Progress callback: (held-out fold, row).
pub type Progress<'a> = &'a mut dyn FnMut(usize, &LogRow);

/// Trains the model that holds out `held_out`. When `dir` is given, the log
/// and per-epoch checkpoints are written there; with `resume`, training
/// continues from the last completed epoch found in `dir`.
pub fn train_fold(
    cfg: &RunConfig,
    ws: &Workspace,
    held_out: usize,
    dir: Option<&Path>,
    resume: bool,
    progress: Progress<'_>,
) -> Result<FoldRun> {
    let net = OmegaNet::new(cfg.network())?;
    let train_folds = ws.training_folds(held_out);
    let train: Vec<&Prepared> = ws.in_folds(&train_folds);
    let val: Vec<&Prepared> = ws.in_folds(&[held_out]);
    let mut train_subjects: Vec<usize> = train.iter().map(|s| s.subject_id).collect();
    train_subjects.sort_unstable();
    train_subjects.dedup();
    if train.is_empty() || val.is_empty() {
        bail!("fold {held_out}: empty training or held-out set");
    }

    let init_seed = mix_seed(stream_seed(cfg.seed, "init"), &[held_out as u64]);
    let mut store: ParamStore<f32> = net.init_params(&mut ChaCha8Rng::seed_from_u64(init_seed))?;
    let mut adam = Adam::new(cfg.adam());
    let mut rows = Vec::new();
    let mut start = 0;

    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        let ckpt = d.join(CHECKPOINT);
        if resume && ckpt.exists() {
            let c = load_checkpoint(&ckpt)?;
            check_meta(cfg, &c.meta)?;
            start = c.meta.get("epochs_done").context("checkpoint lacks epochs_done")?.parse()?;
            let steps: u64 = c.meta.get("optimizer_steps").context("checkpoint lacks optimizer_steps")?.parse()?;
            store = c.params;
            let opt = load_checkpoint(&d.join(OPTIMIZER))?;
            adam = Adam::from_state_store(cfg.adam(), steps, &opt.params);
            rows = read_log(&d.join(LOG))?
                .iter()
                .take(start)
                .map(|l| LogRow::parse(l))
                .collect::<Result<Vec<_>>>()?;
            if rows.len() != start {
                bail!("fold {held_out}: log has {} rows but the checkpoint completed {start} epochs", rows.len());
            }
        }
        write_log(&d.join(LOG), &rows)?;
    }

    let schedule = cfg.schedule();
    let ranges = cfg.augmentation();
    for epoch in start..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let shuffle_seed = mix_seed(stream_seed(cfg.seed, "shuffle"), &[held_out as u64, epoch as u64]);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let mut aug_rng = ChaCha8Rng::seed_from_u64(mix_seed(
            stream_seed(cfg.seed, "augment"),
            &[held_out as u64, epoch as u64],
        ));
        let mut losses = Vec::new();
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let members: Vec<&Prepared> = idx.iter().map(|&i| train[i]).collect();
            let batch = make_batch(&members, Some((&ranges, &mut aug_rng)))?;
            let l = net
                .train_step(&mut store, &mut adam, &batch, lr)
                .with_context(|| format!("fold {held_out}, epoch {epoch}, batch {b}"))?;
            losses.push(l);
        }
        let val_score = if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            let results = evaluate_samples(&net, &store, &val, cfg.workers)?;
            let final_unet = cfg.variant.depth();
            let values = wfiou_values(&results, final_unet);
            if values.is_empty() {
                None
            } else {
                Some(summarize(&values)?.median)
            }
        } else {
            None
        };
        let row = LogRow {
            epoch,
            lr,
            losses: mean_breakdown(&losses),
            val_wfiou_median: val_score,
        };
        progress(held_out, &row);
        rows.push(row);
        if let Some(d) = dir {
            save(
                &d.join(CHECKPOINT),
                &store,
                &checkpoint_meta(cfg, held_out, epoch + 1, &train_subjects, adam.steps()),
            )?;
            save(&d.join(OPTIMIZER), &adam.state_store()?, &IndexMap::new())?;
            write_log(&d.join(LOG), &rows)?;
        }
    }
    Ok(FoldRun {
        held_out,
        store,
        rows,
        train_subjects,
    })
}

fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_log(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        bail!("{} has an unexpected header", path.display());
    }
    Ok(lines.map(str::to_string).collect())
}

impl LogRow {
    /// Inverse of [`LogRow::to_csv`].
    pub fn parse(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 15 {
            bail!("log row has {} cells, expected 15", cells.len());
        }
        let num = |i: usize| -> Result<f64> { Ok(cells[i].parse()?) };
        let opt = |i: usize| -> Result<Option<f64>> {
            if cells[i].is_empty() {
                Ok(None)
            } else {
                Ok(Some(cells[i].parse()?))
            }
        };
        let matrix = if cells[3].is_empty() {
            None
        } else {
            Some([num(3)?, num(4)?, num(5)?, num(6)?])
        };
        let image = if cells[7].is_empty() {
            None
        } else {
            Some([num(7)?, num(8)?, num(9)?])
        };
        let mut sh = Vec::new();
        for i in 10..13 {
            if let Some(v) = opt(i)? {
                sh.push(v);
            }
        }
        Ok(Self {
            epoch: cells[0].parse()?,
            lr: num(1)?,
            losses: LossBreakdown {
                su: num(2)?,
                matrix,
                image,
                sh,
                total: num(13)?,
            },
            val_wfiou_median: opt(14)?,
        })
    }
}
