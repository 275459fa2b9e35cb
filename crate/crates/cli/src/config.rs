//! Run configuration: built-in presets, `key = value` files and command-line
//! overrides, resolved in that order of precedence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use omega_core::nn::{AdamConfig, LrSchedule};
use omega_core::omega::{HourglassTargets, LossWeights, NetworkConfig, Variant};
use omega_data::{AugmentRanges, Corruption, DatasetConfig};

pub const PRESETS: [&str; 2] = ["desk", "paper"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub variant: Variant,
    pub seed: u64,
    pub workers: usize,
    // Data.
    pub data: Option<PathBuf>,
    pub subjects: usize,
    pub frames: usize,
    pub image_size: usize,
    pub folds: usize,
    pub noise: f64,
    pub illumination: f64,
    // Network.
    pub depth: usize,
    pub base_filters: usize,
    pub head_kernel: usize,
    pub locnet_filters: usize,
    pub locnet_hidden: usize,
    pub hourglass_targets: HourglassTargets,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    // Optimization.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_period: usize,
    pub weight_decay: f64,
    pub aug_translation: f64,
    pub aug_rotation_deg: f64,
    pub aug_scale: f64,
    /// Held-out folds to train for ("all" or a comma-separated list).
    pub train_folds: Vec<usize>,
    /// Validate on the held-out fold every this many epochs (0 = never).
    pub eval_every: usize,
    // Evaluation / prediction.
    pub eval_fold: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let desk = Self {
            preset: "desk".into(),
            variant: Variant::B,
            seed: 42,
            workers: 1,
            data: None,
            subjects: 20,
            frames: 8,
            image_size: 64,
            folds: 3,
            noise: Corruption::default().noise,
            illumination: Corruption::default().illumination,
            depth: 3,
            base_filters: 8,
            head_kernel: 3,
            locnet_filters: 64,
            locnet_hidden: 64,
            hourglass_targets: HourglassTargets::Predicted,
            alpha1: 100.0,
            alpha2: 100.0,
            alpha3: 0.1,
            alpha4: 1.0,
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            lr_decay: 0.1,
            lr_period: 26,
            weight_decay: 1e-4,
            aug_translation: 0.15,
            aug_rotation_deg: 15.0,
            aug_scale: 0.15,
            train_folds: Vec::new(),
            eval_every: 1,
            eval_fold: None,
            checkpoint: None,
            input: None,
        };
        match name {
            "desk" => Ok(desk),
            "paper" => Ok(Self {
                preset: "paper".into(),
                subjects: 63,
                frames: 20,
                image_size: 256,
                depth: 4,
                base_filters: 16,
                epochs: 50,
                ..desk
            }),
            other => bail!("unknown preset {other:?}; valid presets: {}", PRESETS.join(", ")),
        }
    }

    /// Applies one `key = value` setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}"))
        }
        let opt_path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match key {
            "preset" => {
                let keep = self.clone();
                *self = Self::preset(value)?;
                // Settings other than the preset-controlled ones survive.
                self.variant = keep.variant;
                self.seed = keep.seed;
                self.workers = keep.workers;
                self.data = keep.data;
            }
            "variant" => self.variant = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "workers" => self.workers = p(key, value)?,
            "data" => self.data = opt_path(value),
            "subjects" => self.subjects = p(key, value)?,
            "frames" => self.frames = p(key, value)?,
            "image_size" => self.image_size = p(key, value)?,
            "folds" => self.folds = p(key, value)?,
            "noise" => self.noise = p(key, value)?,
            "illumination" => self.illumination = p(key, value)?,
            "depth" => self.depth = p(key, value)?,
            "base_filters" => self.base_filters = p(key, value)?,
            "head_kernel" => self.head_kernel = p(key, value)?,
            "locnet_filters" => self.locnet_filters = p(key, value)?,
            "locnet_hidden" => self.locnet_hidden = p(key, value)?,
            "hourglass_targets" => self.hourglass_targets = p(key, value)?,
            "alpha1" => self.alpha1 = p(key, value)?,
            "alpha2" => self.alpha2 = p(key, value)?,
            "alpha3" => self.alpha3 = p(key, value)?,
            "alpha4" => self.alpha4 = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "lr_decay" => self.lr_decay = p(key, value)?,
            "lr_period" => self.lr_period = p(key, value)?,
            "weight_decay" => self.weight_decay = p(key, value)?,
            "aug_translation" => self.aug_translation = p(key, value)?,
            "aug_rotation_deg" => self.aug_rotation_deg = p(key, value)?,
            "aug_scale" => self.aug_scale = p(key, value)?,
            "train_folds" => {
                self.train_folds = if value == "all" || value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| p(key, v.trim()))
                        .collect::<Result<Vec<usize>>>()?
                }
            }
            "eval_every" => self.eval_every = p(key, value)?,
            "eval_fold" => {
                self.eval_fold = if value.is_empty() || value == "held_out" {
                    None
                } else {
                    Some(p(key, value)?)
                }
            }
            "checkpoint" => self.checkpoint = opt_path(value),
            "input" => self.input = opt_path(value),
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    /// Applies every setting of a `key = value` text (`#` starts a comment).
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        // The preset is applied first so that it never clobbers later keys.
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                bail!("{origin}:{}: duplicate key {k:?}", n + 1);
            }
            entries.push((n + 1, k.to_string(), v.to_string()));
        }
        entries.sort_by_key(|(_, k, _)| k != "preset");
        for (n, k, v) in entries {
            self.set(&k, &v).with_context(|| format!("{origin}:{n}"))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Fully resolved settings in `key = value` form (round-trips through
    /// [`RunConfig::apply_text`]).
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let folds = if self.train_folds.is_empty() {
            "all".to_string()
        } else {
            self.train_folds.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",")
        };
        let entries: Vec<(&str, String)> = vec![
            ("preset", self.preset.clone()),
            ("variant", self.variant.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("data", path(&self.data)),
            ("subjects", self.subjects.to_string()),
            ("frames", self.frames.to_string()),
            ("image_size", self.image_size.to_string()),
            ("folds", self.folds.to_string()),
            ("noise", self.noise.to_string()),
            ("illumination", self.illumination.to_string()),
            ("depth", self.depth.to_string()),
            ("base_filters", self.base_filters.to_string()),
            ("head_kernel", self.head_kernel.to_string()),
            ("locnet_filters", self.locnet_filters.to_string()),
            ("locnet_hidden", self.locnet_hidden.to_string()),
            ("hourglass_targets", self.hourglass_targets.to_string()),
            ("alpha1", self.alpha1.to_string()),
            ("alpha2", self.alpha2.to_string()),
            ("alpha3", self.alpha3.to_string()),
            ("alpha4", self.alpha4.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("lr_period", self.lr_period.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("aug_translation", self.aug_translation.to_string()),
            ("aug_rotation_deg", self.aug_rotation_deg.to_string()),
            ("aug_scale", self.aug_scale.to_string()),
            ("train_folds", folds),
            ("eval_every", self.eval_every.to_string()),
            ("eval_fold", self.eval_fold.map(|f| f.to_string()).unwrap_or_else(|| "held_out".into())),
            ("checkpoint", path(&self.checkpoint)),
            ("input", path(&self.input)),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            variant: self.variant,
            image_size: self.image_size,
            num_classes: omega_data::NUM_CLASSES,
            unet_depth: self.depth,
            base_filters: self.base_filters,
            head_kernel: self.head_kernel,
            locnet_filters: self.locnet_filters,
            locnet_hidden: self.locnet_hidden,
            weights: LossWeights {
                alpha1: self.alpha1,
                alpha2: self.alpha2,
                alpha3: self.alpha3,
                alpha4: self.alpha4,
            },
            hourglass_targets: self.hourglass_targets,
        }
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            subjects: self.subjects,
            frames: self.frames,
            size: self.image_size,
            folds: self.folds,
            seed: omega_data::stream_seed(self.seed, "data"),
            corruption: Corruption {
                noise: self.noise,
                illumination: self.illumination,
            },
        }
    }

    pub fn augmentation(&self) -> AugmentRanges {
        AugmentRanges {
            translation: self.aug_translation,
            rotation: self.aug_rotation_deg.to_radians(),
            scale: self.aug_scale,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr,
            factor: self.lr_decay,
            period: self.lr_period,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    /// Held-out folds to train, in order.
    pub fn folds_to_train(&self) -> Vec<usize> {
        if self.train_folds.is_empty() {
            (0..self.folds).collect()
        } else {
            self.train_folds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network().validate()?;
        if self.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        if self.folds < 2 {
            bail!("at least two folds are required");
        }
        if let Some(f) = self.train_folds.iter().find(|&&f| f >= self.folds) {
            bail!("train_folds lists fold {f} but only {} folds exist", self.folds);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::preset("desk").unwrap();
        c.set("variant", "D").unwrap();
        c.set("train_folds", "0,2").unwrap();
        let mut d = RunConfig::preset("paper").unwrap();
        d.apply_text(&c.to_text(), "lock").unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        let mut c = RunConfig::preset("desk").unwrap();
        assert!(c.apply_text("epochz = 3", "t").is_err());
        assert!(c.apply_text("epochs = 3\nepochs = 4", "t").is_err());
        assert!(c.apply_text("epochs 3", "t").is_err());
    }

    #[test]
    fn preset_errors_list_valid_names() {
        let e = RunConfig::preset("laptop").unwrap_err().to_string();
        assert!(e.contains("desk") && e.contains("paper"));
    }

    #[test]
    fn preset_key_applies_before_others() {
        let mut c = RunConfig::preset("desk").unwrap();
        c.apply_text("epochs = 2\npreset = paper", "t").unwrap();
        assert_eq!((c.image_size, c.epochs), (256, 2));
    }
}
