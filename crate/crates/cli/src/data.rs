//! Dataset loading, fold files and batch assembly.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use omega_core::omega::Batch;
use omega_core::spatial::RigidParams;
use omega_core::Tensor;
use omega_data::{
    apply_augmentation, generate_dataset, partition_folds, prepare, read_dataset, subject_counts, AugmentRanges,
    FoldAssignment, Prepared,
};
use rand::Rng;

use crate::config::RunConfig;

pub const FOLDS_FILE: &str = "folds.csv";

/// Preprocessed samples with their fold assignment.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub samples: Vec<Prepared>,
    pub folds: FoldAssignment,
}

impl Workspace {
    /// Loads `cfg.data` when set (reading its fold file, or partitioning if
    /// absent); otherwise generates the configured synthetic data in memory.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let raw = match &cfg.data {
            Some(dir) => read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?,
            None => generate_dataset(&cfg.dataset(), cfg.workers)?,
        };
        if raw.is_empty() {
            bail!("dataset is empty");
        }
        if let Some(s) = raw.iter().find(|s| s.size != cfg.image_size) {
            bail!(
                "dataset image size {} does not match configured image_size {}",
                s.size,
                cfg.image_size
            );
        }
        let folds = match &cfg.data {
            Some(dir) if dir.join(FOLDS_FILE).exists() => read_folds(&dir.join(FOLDS_FILE))?,
            _ => default_folds(cfg, raw.iter().map(|s| &s.subject_id))?,
        };
        if folds.k != cfg.folds {
            bail!("fold file defines {} folds but the configuration asks for {}", folds.k, cfg.folds);
        }
        for s in &raw {
            if folds.fold_of(s.subject_id).is_none() {
                bail!("subject {} has no fold assignment", s.subject_id);
            }
        }
        Ok(Self {
            samples: prepare(&raw, cfg.workers)?,
            folds,
        })
    }

    pub fn in_folds(&self, folds: &[usize]) -> Vec<&Prepared> {
        self.samples
            .iter()
            .filter(|s| self.folds.fold_of(s.subject_id).is_some_and(|f| folds.contains(&f)))
            .collect()
    }

    pub fn training_folds(&self, held_out: usize) -> Vec<usize> {
        (0..self.folds.k).filter(|&f| f != held_out).collect()
    }
}

pub fn default_folds<'a, I: IntoIterator<Item = &'a usize>>(cfg: &RunConfig, subjects: I) -> Result<FoldAssignment> {
    Ok(partition_folds(
        &subject_counts(subjects),
        cfg.folds,
        omega_data::stream_seed(cfg.seed, "folds"),
    )?)
}

pub fn write_folds(path: &Path, folds: &FoldAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "fold"])?;
    for (s, f) in &folds.folds {
        w.write_record([s.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_folds(path: &Path) -> Result<FoldAssignment> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut folds = std::collections::BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let s: usize = rec.get(0).unwrap_or("").parse().context("fold file subject_id")?;
        let f: usize = rec.get(1).unwrap_or("").parse().context("fold file fold")?;
        if folds.insert(s, f).is_some() {
            bail!("subject {s} appears twice in {}", path.display());
        }
    }
    let k = folds.values().max().map_or(0, |m| m + 1);
    Ok(FoldAssignment { k, folds })
}

/// Stacks samples into an f32 batch, augmenting each independently when
/// `augment` is given.
pub fn make_batch<R: Rng + ?Sized>(
    samples: &[&Prepared],
    augment: Option<(&AugmentRanges, &mut R)>,
) -> Result<Batch<f32>> {
    let size = samples.first().map(|s| s.size).unwrap_or(0);
    let mut images = Vec::with_capacity(samples.len() * size * size);
    let mut labels = Vec::with_capacity(samples.len());
    let mut params = Vec::with_capacity(samples.len());
    let mut augment = augment;
    for s in samples {
        let (image, lab, p) = match augment.as_mut() {
            Some((ranges, rng)) => {
                let a = ranges.draw(&mut **rng);
                if ranges.is_identity() {
                    (s.image.clone(), s.labels.clone(), s.params)
                } else {
                    let out = apply_augmentation(&s.image, &s.labels, size, &s.params, &a)?;
                    (out.image, out.labels, out.params)
                }
            }
            None => (s.image.clone(), s.labels.clone(), s.params),
        };
        images.extend(image.iter().map(|&v| v as f32));
        labels.push(lab);
        params.push(RigidParams::<f32>::new(p.tx as f32, p.ty as f32, p.theta as f32, p.s as f32));
    }
    Ok(Batch {
        images: Tensor::new(&[samples.len(), 1, size, size], images)?,
        labels,
        params,
    })
}
