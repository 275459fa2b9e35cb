//! Inference over a set of samples and the per-image evaluation records.

use anyhow::Result;
use omega_core::metrics::{dice, iou, weighted_fg_iou};
use omega_core::nn::ParamStore;
use omega_core::omega::OmegaNet;
use omega_core::spatial::RigidParams;
use omega_data::{Prepared, View};
use rayon::prelude::*;

use crate::data::make_batch;

/// Foreground classes reported per image.
pub const REPORTED_CLASSES: [u8; 5] = [1, 2, 3, 4, 5];

/// Scores of one label map against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub unet_index: usize,
    /// Per reported class; `None` for classes outside the view.
    pub iou: [Option<f64>; 5],
    pub dice: [Option<f64>; 5],
    /// `None` when the ground truth has no foreground.
    pub wfiou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub sample_id: String,
    pub subject_id: usize,
    pub view: View,
    pub records: Vec<EvalRecord>,
    pub predicted: Option<RigidParams<f64>>,
    pub ground_truth: RigidParams<f64>,
    /// Label maps per U-Net, in the input frame.
    pub labels: Vec<Vec<u8>>,
}

pub fn score(gt: &[u8], pred: &[u8], view: View, unet_index: usize) -> Result<EvalRecord> {
    let mut rec = EvalRecord {
        unet_index,
        iou: [None; 5],
        dice: [None; 5],
        wfiou: None,
    };
    for (i, &c) in REPORTED_CLASSES.iter().enumerate() {
        if view.classes().contains(&c) {
            let g: Vec<bool> = gt.iter().map(|&l| l == c).collect();
            let p: Vec<bool> = pred.iter().map(|&l| l == c).collect();
            rec.iou[i] = Some(iou(&g, &p)?);
            rec.dice[i] = Some(dice(&g, &p)?);
        }
    }
    rec.wfiou = weighted_fg_iou(gt, pred, view.foreground()).ok().map(|w| w.value);
    Ok(rec)
}

/// Samples per inference batch; fixed so results do not depend on the
/// worker count.
pub const EVAL_CHUNK: usize = 8;

/// Runs inference on `samples` (in order) with `workers` threads and scores
/// every U-Net's output.
pub fn evaluate_samples(
    net: &OmegaNet,
    store: &ParamStore<f32>,
    samples: &[&Prepared],
    workers: usize,
) -> Result<Vec<SampleResult>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let chunks: Vec<Result<Vec<SampleResult>>> = pool.install(|| {
        samples
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let batch = make_batch::<rand_chacha::ChaCha8Rng>(chunk, None)?;
                let pred = net.predict(store, &batch.images)?;
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let labels: Vec<Vec<u8>> = pred.labels.iter().map(|per| per[i].clone()).collect();
                        let records = labels
                            .iter()
                            .enumerate()
                            .map(|(u, l)| score(&s.labels, l, s.view, u))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(SampleResult {
                            sample_id: s.id(),
                            subject_id: s.subject_id,
                            view: s.view,
                            records,
                            predicted: pred.params.as_ref().map(|p| p[i]),
                            ground_truth: s.params,
                            labels,
                        })
                    })
                    .collect()
            })
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Weighted foreground IoU of every sample with defined ground truth, for
/// one U-Net.
pub fn wfiou_values(results: &[SampleResult], unet_index: usize) -> Vec<f64> {
    results
        .iter()
        .filter_map(|r| r.records.get(unet_index).and_then(|e| e.wfiou))
        .collect()
}
