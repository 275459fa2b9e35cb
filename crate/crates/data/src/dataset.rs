//! Dataset presets, parallel generation, and on-disk layout
//! (`manifest.csv` plus PGM images and label maps).
//!
//! The manifest has one row per image:
//!
//! ```text
//! subject_id,view,frame_id,image_path,label_path,t_x,t_y,theta,s
//! ```
//!
//! Paths are relative to the manifest. Any data set written in this layout,
//! including real images with known poses, can be read by [`read_dataset`].

use std::fs;
use std::path::{Path, PathBuf};

use omega_core::spatial::RigidParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DataError, Result};
use crate::phantom::{draw_params, generate_phantom, Corruption, Sample, View};
use crate::pgm;
use crate::preprocess::preprocess;
use crate::seed::mix_seed;

pub const MANIFEST: &str = "manifest.csv";
const MANIFEST_HEADER: [&str; 9] = [
    "subject_id", "view", "frame_id", "image_path", "label_path", "t_x", "t_y", "theta", "s",
];

/// Formats a value with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub subjects: usize,
    pub frames: usize,
    pub size: usize,
    pub folds: usize,
    pub seed: u64,
    pub corruption: Corruption,
}

impl DatasetConfig {
    /// 20 subjects × 5 views × 8 frames of 64×64 images, 3 folds.
    pub fn desk(seed: u64) -> Self {
        Self {
            subjects: 20,
            frames: 8,
            size: 64,
            folds: 3,
            seed,
            corruption: Corruption::default(),
        }
    }

    /// 63 subjects × 5 views × 20 frames of 256×256 images, 3 folds.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            subjects: 63,
            frames: 20,
            size: 256,
            ..Self::desk(seed)
        }
    }

    pub fn len(&self) -> usize {
        self.subjects * View::ALL.len() * self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subject_seed(&self, subject: usize) -> u64 {
        mix_seed(self.seed, &[0x5u64, subject as u64])
    }

    /// Ground-truth pose of one image, drawn independently per frame.
    pub fn pose(&self, subject: usize, view: View, frame: usize) -> RigidParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            self.seed,
            &[0x9u64, subject as u64, view.index() as u64, frame as u64],
        ));
        draw_params(&mut rng)
    }

    pub fn sample(&self, subject: usize, view: View, frame: usize) -> Result<Sample> {
        generate_phantom(
            self.subject_seed(subject),
            subject,
            view,
            frame,
            self.pose(subject, view, frame),
            self.size,
            self.corruption,
        )
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DataError::InvalidParams(format!("cannot start worker pool: {e}")))
}

/// Generates every sample in (subject, view, frame) order. Each sample is
/// seeded from its own indices, so the result does not depend on `workers`.
pub fn generate_dataset(config: &DatasetConfig, workers: usize) -> Result<Vec<Sample>> {
    let keys: Vec<(usize, View, usize)> = (0..config.subjects)
        .flat_map(|s| View::ALL.into_iter().flat_map(move |v| (0..config.frames).map(move |f| (s, v, f))))
        .collect();
    pool(workers)?.install(|| {
        keys.par_iter()
            .map(|&(s, v, f)| config.sample(s, v, f))
            .collect()
    })
}

/// A preprocessed sample ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub subject_id: usize,
    pub view: View,
    pub frame_id: usize,
    pub size: usize,
    pub image: Vec<f64>,
    pub labels: Vec<u8>,
    pub params: RigidParams<f64>,
}

impl Prepared {
    pub fn id(&self) -> String {
        sample_id(self.subject_id, self.view, self.frame_id)
    }
}

pub fn sample_id(subject: usize, view: View, frame: usize) -> String {
    format!("s{subject:03}_{}_f{frame:02}", view.name())
}

/// Preprocesses samples in parallel (order preserved).
pub fn prepare(samples: &[Sample], workers: usize) -> Result<Vec<Prepared>> {
    pool(workers)?.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let p = preprocess(&s.image, (s.size, s.size), s.size)?;
                Ok(Prepared {
                    subject_id: s.subject_id,
                    view: s.view,
                    frame_id: s.frame_id,
                    size: s.size,
                    image: p.image,
                    labels: s.labels.clone(),
                    params: s.params,
                })
            })
            .collect()
    })
}

/// Writes images, label maps and the manifest under `dir`.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("labels"))?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST))?;
    w.write_record(MANIFEST_HEADER)?;
    for s in samples {
        let id = sample_id(s.subject_id, s.view, s.frame_id);
        let image_path = format!("images/{id}.pgm");
        let label_path = format!("labels/{id}.pgm");
        pgm::write_image(&dir.join(&image_path), &s.image, s.size)?;
        pgm::write_labels(&dir.join(&label_path), &s.labels, s.size)?;
        let p = s.params;
        w.write_record([
            s.subject_id.to_string(),
            s.view.name().to_string(),
            s.frame_id.to_string(),
            image_path,
            label_path,
            fmt17(p.tx),
            fmt17(p.ty),
            fmt17(p.theta),
            fmt17(p.s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`] (or any directory following
/// the same manifest layout).
pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(dir.join(MANIFEST))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != MANIFEST_HEADER {
        return Err(DataError::Manifest(format!("unexpected manifest header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| DataError::Manifest(format!("row {}: invalid {what}", line + 2));
        let int = |i: usize, what: &str| field(i).parse::<usize>().map_err(|_| bad(what));
        let num = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
        let image_path: PathBuf = dir.join(field(3));
        let label_path: PathBuf = dir.join(field(4));
        let (image, h, w) = pgm::read_image(&image_path)?;
        let (labels, lh, lw) = pgm::read_labels(&label_path)?;
        if h != w || (lh, lw) != (h, w) {
            return Err(DataError::Manifest(format!(
                "row {}: image and labels must be square and of equal size",
                line + 2
            )));
        }
        out.push(Sample {
            subject_id: int(0, "subject_id")?,
            view: field(1).parse()?,
            frame_id: int(2, "frame_id")?,
            size: h,
            image,
            labels,
            params: RigidParams::new(num(5, "t_x")?, num(6, "t_y")?, num(7, "theta")?, num(8, "s")?),
        });
    }
    Ok(out)
}

/// (subject, image count) pairs in first-appearance order.
pub fn subject_counts<'a, I>(subjects: I) -> Vec<(usize, usize)>
where
    I: IntoIterator<Item = &'a usize>,
{
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &s in subjects {
        match counts.iter_mut().find(|(id, _)| *id == s) {
            Some(entry) => entry.1 += 1,
            None => counts.push((s, 1)),
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_has_800_images() {
        let c = DatasetConfig::desk(42);
        assert_eq!(c.len(), 800);
        assert_eq!((c.size, c.folds), (64, 3));
    }

    #[test]
    fn generation_is_independent_of_worker_count() {
        let c = DatasetConfig {
            subjects: 2,
            frames: 2,
            size: 16,
            ..DatasetConfig::desk(3)
        };
        assert_eq!(generate_dataset(&c, 1).unwrap(), generate_dataset(&c, 3).unwrap());
    }

    #[test]
    fn frames_of_a_subject_get_different_poses() {
        let c = DatasetConfig::desk(1);
        assert_ne!(c.pose(0, View::Hla, 0), c.pose(0, View::Hla, 1));
    }

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, -2.5e-7, std::f64::consts::PI] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }
}
