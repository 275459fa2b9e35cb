//! Evaluation outputs: per-image metrics, success curves, summary statistics
//! and simple SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use omega_core::metrics::{
    bland_altman, default_thresholds, failure_rate, regress_params, success_curve, summarize, BlandAltman,
    CurvePoint, Regression, Summary,
};
use omega_core::spatial::wrap;
use omega_data::{fmt17, ViewFamily};

use crate::evaluate::{wfiou_values, SampleResult};

pub const METRICS_HEADER: &str =
    "sample_id,view,unet_index,iou_c1,iou_c2,iou_c3,iou_c4,iou_c5,wfiou,dice_c1,dice_c2,dice_c3,dice_c4,dice_c5";
pub const PARAMS_HEADER: &str = "sample_id,t_x,t_y,theta,s";
/// Failure means a weighted foreground IoU below this value.
pub const FAILURE_THRESHOLD: f64 = 0.9;
/// Significance level of the regression flag.
pub const SIGNIFICANCE: f64 = 1e-4;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(results: &[SampleResult]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in results {
        for rec in &r.records {
            let mut cells = vec![r.sample_id.clone(), r.view.to_string(), rec.unet_index.to_string()];
            cells.extend(rec.iou.iter().map(|&v| opt(v)));
            cells.push(opt(rec.wfiou));
            cells.extend(rec.dice.iter().map(|&v| opt(v)));
            s.push_str(&cells.join(","));
            s.push('\n');
        }
    }
    s
}

/// Predicted poses with 17 significant digits.
pub fn params_csv(results: &[SampleResult]) -> String {
    let mut s = String::from(PARAMS_HEADER);
    s.push('\n');
    for r in results {
        if let Some(p) = r.predicted {
            let _ = writeln!(s, "{},{},{},{},{}", r.sample_id, fmt17(p.tx), fmt17(p.ty), fmt17(p.theta), fmt17(p.s));
        }
    }
    s
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("threshold,success_rate\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p.threshold, p.success_rate);
    }
    s
}

/// Segmentation statistics of one U-Net.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetSummary {
    pub unet_index: usize,
    pub n: usize,
    pub excluded: usize,
    pub overall: Summary,
    pub per_view: BTreeMap<ViewFamily, Summary>,
    pub curve: Vec<CurvePoint>,
    pub auc: f64,
    pub failure_rate: f64,
}

/// Pose statistics per parameter (t_x, t_y, θ, s).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSummary {
    pub regression: [Regression; 4],
    pub bland_altman: [BlandAltman; 4],
    pub median_abs_rotation_error: f64,
    /// 95th percentile of pooled |t_x| and |t_y| errors.
    pub translation_p95: f64,
}

pub const PARAM_NAMES: [&str; 4] = ["t_x", "t_y", "theta", "s"];

pub fn summarize_unet(results: &[SampleResult], unet_index: usize) -> Result<UNetSummary> {
    let values = wfiou_values(results, unet_index);
    let excluded = results.len() - values.len();
    let mut per_view = BTreeMap::new();
    let mut grouped: BTreeMap<ViewFamily, Vec<f64>> = BTreeMap::new();
    for r in results {
        if let Some(v) = r.records.get(unet_index).and_then(|e| e.wfiou) {
            grouped.entry(r.view.family()).or_default().push(v);
        }
    }
    for (fam, vals) in grouped {
        per_view.insert(fam, summarize(&vals)?);
    }
    let (curve, auc) = success_curve(&values, &default_thresholds())?;
    Ok(UNetSummary {
        unet_index,
        n: values.len(),
        excluded,
        overall: summarize(&values)?,
        per_view,
        curve,
        auc,
        failure_rate: failure_rate(&values, FAILURE_THRESHOLD),
    })
}

pub fn summarize_pose(results: &[SampleResult]) -> Result<Option<PoseSummary>> {
    let pairs: Vec<_> = results
        .iter()
        .filter_map(|r| r.predicted.map(|p| (p.to_array(), r.ground_truth.to_array())))
        .collect();
    if pairs.len() < 3 {
        return Ok(None);
    }
    let comp = |i: usize| -> (Vec<f64>, Vec<f64>) { pairs.iter().map(|(p, g)| (p[i], g[i])).unzip() };
    let mut regression = Vec::new();
    let mut ba = Vec::new();
    for i in 0..4 {
        let (p, g) = comp(i);
        regression.push(regress_params(&p, &g, i == 2)?);
        ba.push(bland_altman(&p, &g, i == 2)?);
    }
    let rot: Vec<f64> = pairs.iter().map(|(p, g)| wrap(p[2] - g[2]).abs()).collect();
    let mut trans: Vec<f64> = pairs
        .iter()
        .flat_map(|(p, g)| [(p[0] - g[0]).abs(), (p[1] - g[1]).abs()])
        .collect();
    trans.sort_by(f64::total_cmp);
    Ok(Some(PoseSummary {
        regression: regression.try_into().expect("four components"),
        bland_altman: ba.try_into().expect("four components"),
        median_abs_rotation_error: summarize(&rot)?.median,
        translation_p95: omega_core::metrics::quantile_sorted(&trans, 0.95),
    }))
}

pub fn summary_text(unets: &[UNetSummary], pose: Option<&PoseSummary>) -> String {
    let mut s = String::new();
    for u in unets {
        let o = &u.overall;
        let _ = writeln!(s, "[unet {}]", u.unet_index);
        let _ = writeln!(s, "images = {}", u.n);
        let _ = writeln!(s, "excluded_no_foreground = {}", u.excluded);
        let _ = writeln!(s, "wfiou_median = {}", o.median);
        let _ = writeln!(s, "wfiou_q1 = {}", o.q1);
        let _ = writeln!(s, "wfiou_q3 = {}", o.q3);
        let _ = writeln!(s, "wfiou_iqr = {}", o.iqr);
        let _ = writeln!(s, "auc = {}", u.auc);
        let _ = writeln!(s, "failure_rate_at_{FAILURE_THRESHOLD} = {}", u.failure_rate);
        for (fam, v) in &u.per_view {
            let _ = writeln!(s, "wfiou_median_{fam} = {}", v.median);
            let _ = writeln!(s, "wfiou_iqr_{fam} = {}", v.iqr);
        }
        s.push('\n');
    }
    if let Some(p) = pose {
        let _ = writeln!(s, "[pose]");
        let _ = writeln!(s, "median_abs_rotation_error = {}", p.median_abs_rotation_error);
        let _ = writeln!(s, "translation_error_p95 = {}", p.translation_p95);
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            let r = &p.regression[i];
            let b = &p.bland_altman[i];
            let _ = writeln!(s, "{name}_r = {}", r.r);
            let _ = writeln!(s, "{name}_slope = {}", r.slope);
            let _ = writeln!(s, "{name}_intercept = {}", r.intercept);
            let _ = writeln!(s, "{name}_significant = {}", r.significant(SIGNIFICANCE));
            let _ = writeln!(s, "{name}_bias = {}", b.bias);
            let _ = writeln!(s, "{name}_loa_lower = {}", b.lower);
            let _ = writeln!(s, "{name}_loa_upper = {}", b.upper);
            let _ = writeln!(s, "{name}_p95_band = {}", b.p95_band);
        }
    }
    s
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const M: f64 = 48.0;

fn svg_frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n{body}</svg>\n",
        W / 2.0,
        W - 2.0 * M,
        H - 2.0 * M
    )
}

fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Success rate against threshold, one polyline per U-Net.
pub fn curve_svg(unets: &[UNetSummary]) -> String {
    let colours = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    let mut body = String::new();
    for (u, colour) in unets.iter().zip(colours.iter().cycle()) {
        let pts: Vec<String> = u
            .curve
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    scale(p.threshold, 0.4, 1.0, M, W - M),
                    scale(p.success_rate, 0.0, 1.0, H - M, M)
                )
            })
            .collect();
        let _ = writeln!(
            body,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{colour}\">U-Net {} (AUC {:.3})</text>",
            M + 8.0,
            M + 16.0 + 14.0 * u.unet_index as f64,
            u.unet_index,
            u.auc
        );
    }
    svg_frame("success rate vs weighted foreground IoU threshold (0.4-1.0)", &body)
}

/// Difference against mean of predicted and true values, with bias and
/// limits of agreement.
pub fn bland_altman_svg(name: &str, pred: &[f64], gt: &[f64], stats: &BlandAltman, wrapped: bool) -> String {
    let pts: Vec<(f64, f64)> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let d = if wrapped { wrap(p - g) } else { p - g };
            ((p + g) / 2.0, d)
        })
        .collect();
    let (xlo, xhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let ext = pts
        .iter()
        .map(|p| p.1.abs())
        .fold(stats.upper.abs().max(stats.lower.abs()), f64::max)
        .max(1e-9);
    let mut body = String::new();
    for (x, y) in &pts {
        let _ = writeln!(
            body,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\"/>",
            scale(*x, xlo, xhi, M, W - M),
            scale(*y, -ext, ext, H - M, M)
        );
    }
    for (v, dash) in [(stats.bias, ""), (stats.lower, "4,3"), (stats.upper, "4,3")] {
        let y = scale(v, -ext, ext, H - M, M);
        let _ = writeln!(
            body,
            "<line x1=\"{M}\" x2=\"{}\" y1=\"{y:.2}\" y2=\"{y:.2}\" stroke=\"#d62728\" stroke-dasharray=\"{dash}\"/>",
            W - M
        );
    }
    svg_frame(&format!("Bland-Altman: {name} (bias {:.4})", stats.bias), &body)
}

/// Writes every evaluation artifact under `dir`.
pub fn write_reports(dir: &Path, results: &[SampleResult], unet_count: usize) -> Result<(Vec<UNetSummary>, Option<PoseSummary>)> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(results))?;
    let unets = (0..unet_count)
        .map(|u| summarize_unet(results, u))
        .collect::<Result<Vec<_>>>()?;
    for u in &unets {
        fs::write(dir.join(format!("curve_unet{}.csv", u.unet_index)), curve_csv(&u.curve))?;
    }
    if let Some(last) = unets.last() {
        fs::write(dir.join("curve.csv"), curve_csv(&last.curve))?;
    }
    fs::write(dir.join("curve.svg"), curve_svg(&unets))?;
    let pose = summarize_pose(results)?;
    if let Some(p) = &pose {
        fs::write(dir.join("params.csv"), params_csv(results))?;
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            let (pred, gt): (Vec<f64>, Vec<f64>) = results
                .iter()
                .filter_map(|r| r.predicted.map(|q| (q.to_array()[i], r.ground_truth.to_array()[i])))
                .unzip();
            fs::write(
                dir.join(format!("bland_altman_{name}.svg")),
                bland_altman_svg(name, &pred, &gt, &p.bland_altman[i], i == 2),
            )?;
        }
    }
    fs::write(dir.join("summary.txt"), summary_text(&unets, pose.as_ref()))?;
    Ok((unets, pose))
}
