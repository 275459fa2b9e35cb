//! Segmentation overlap scores and the statistics used to summarize them.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::spatial::wrap;

/// Guard added to overlap denominators.
pub const OVERLAP_EPS: f64 = 1e-12;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("masks differ in size: {a} vs {b}")));
    }
    Ok(())
}

fn counts(gt: &[bool], pred: &[bool]) -> (usize, usize, usize, usize) {
    let mut inter = 0;
    let mut union = 0;
    let mut a = 0;
    let mut b = 0;
    for (&g, &p) in gt.iter().zip(pred) {
        inter += usize::from(g && p);
        union += usize::from(g || p);
        a += usize::from(g);
        b += usize::from(p);
    }
    (inter, union, a, b)
}

/// Jaccard index |A∩B| / (|A∪B| + ε). Two empty masks score 0.
pub fn iou(gt: &[bool], pred: &[bool]) -> Result<f64> {
    check_len(gt.len(), pred.len())?;
    let (i, u, _, _) = counts(gt, pred);
    Ok(i as f64 / (u as f64 + OVERLAP_EPS))
}

/// Dice coefficient 2|A∩B| / (|A| + |B| + ε).
pub fn dice(gt: &[bool], pred: &[bool]) -> Result<f64> {
    check_len(gt.len(), pred.len())?;
    let (i, _, a, b) = counts(gt, pred);
    Ok(2.0 * i as f64 / ((a + b) as f64 + OVERLAP_EPS))
}

pub fn class_mask(labels: &[u8], class: u8) -> Vec<bool> {
    labels.iter().map(|&l| l == class).collect()
}

/// Per-image weighted foreground IoU and the class weights used.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedIou {
    pub value: f64,
    /// (class, weight, IoU) for every class in the requested set.
    pub per_class: Vec<(u8, f64, f64)>,
}

/// Σ_c w_c·IoU_c with w_c the share of ground-truth foreground pixels
/// belonging to class c. Fails when the ground truth has no foreground.
pub fn weighted_fg_iou(gt: &[u8], pred: &[u8], classes: &[u8]) -> Result<WeightedIou> {
    check_len(gt.len(), pred.len())?;
    let fg: usize = gt.iter().filter(|l| classes.contains(l)).count();
    if fg == 0 {
        return Err(Error::UndefinedMetric(
            "ground truth contains no foreground pixels".into(),
        ));
    }
    let mut value = 0.0;
    let mut per_class = Vec::with_capacity(classes.len());
    for &c in classes {
        let g = class_mask(gt, c);
        let p = class_mask(pred, c);
        let count = g.iter().filter(|&&v| v).count();
        let w = count as f64 / fg as f64;
        let j = iou(&g, &p)?;
        value += w * j;
        per_class.push((c, w, j));
    }
    Ok(WeightedIou { value, per_class })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile (h = (n − 1)·q) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    Ok(Summary {
        median: quantile_sorted(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub success_rate: f64,
}

/// Thresholds 0.40, 0.41, …, 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (40..=100).map(|i| i as f64 / 100.0).collect()
}

/// Success-rate curve: fraction of values reaching each threshold
/// (value ≥ t), plus its trapezoidal area normalized by the threshold span so
/// that a perfect system scores 1.
pub fn success_curve(values: &[f64], thresholds: &[f64]) -> Result<(Vec<CurvePoint>, f64)> {
    if values.is_empty() || thresholds.len() < 2 {
        return Err(Error::InvalidArgument(
            "success curve needs values and at least two thresholds".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let points: Vec<CurvePoint> = thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&v| v < t);
            CurvePoint {
                threshold: t,
                success_rate: (sorted.len() - below) as f64 / n,
            }
        })
        .collect();
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].success_rate + w[1].success_rate) * (w[1].threshold - w[0].threshold))
        .sum();
    let span = thresholds[thresholds.len() - 1] - thresholds[0];
    Ok((points, area / span))
}

/// Fraction of values below `threshold`.
pub fn failure_rate(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&v| v < threshold).count() as f64 / values.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub n: usize,
    pub r: f64,
    pub slope: f64,
    pub intercept: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

impl Regression {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Residual pred − gt, wrapped for angular quantities.
fn difference(pred: f64, gt: f64, wrapped: bool) -> f64 {
    if wrapped {
        wrap(pred - gt)
    } else {
        pred - gt
    }
}

/// Least-squares line predicted = slope·gt + intercept with Pearson R. For
/// angles, each prediction is first replaced by gt + wrap(pred − gt).
pub fn regress_params(pred: &[f64], gt: &[f64], wrapped: bool) -> Result<Regression> {
    check_len(pred.len(), gt.len())?;
    let n = pred.len();
    if n < 3 {
        return Err(Error::InvalidArgument("regression needs at least 3 pairs".into()));
    }
    let y: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| g + difference(p, g, wrapped))
        .collect();
    let nf = n as f64;
    let mx = gt.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = gt.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let syy: f64 = y.iter().map(|&v| (v - my) * (v - my)).sum();
    let sxy: f64 = gt.iter().zip(&y).map(|(&x, &v)| (x - mx) * (v - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("ground truth has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
    let dof = nf - 2.0;
    let (t, p) = if r.abs() >= 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else if dof > 0.0 {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    } else {
        (0.0, 1.0)
    };
    Ok(Regression {
        n,
        r,
        slope,
        intercept,
        t_statistic: t,
        p_value: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlandAltman {
    pub n: usize,
    pub bias: f64,
    /// Population standard deviation of the differences.
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// 95th percentile of |difference|: ±band holds 95% of the errors.
    pub p95_band: f64,
}

pub fn bland_altman(pred: &[f64], gt: &[f64], wrapped: bool) -> Result<BlandAltman> {
    check_len(pred.len(), gt.len())?;
    let n = pred.len();
    if n < 2 {
        return Err(Error::InvalidArgument("Bland-Altman needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| difference(p, g, wrapped))
        .collect();
    let nf = n as f64;
    let bias = d.iter().sum::<f64>() / nf;
    let sd = (d.iter().map(|v| (v - bias) * (v - bias)).sum::<f64>() / nf).sqrt();
    let mut abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    Ok(BlandAltman {
        n,
        bias,
        sd,
        lower: bias - 1.96 * sd,
        upper: bias + 1.96 * sd,
        p95_band: quantile_sorted(&abs, 0.95),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> Vec<bool> {
        rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect()
    }

    #[test]
    fn iou_examples() {
        let a = mask(&["##..", "##..", "....", "...."]);
        let b = mask(&[".##.", ".##.", "....", "...."]);
        assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let c = mask(&["....", "....", "..##", "..##"]);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        assert!((iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-9);
        assert!((dice(&a, &b).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(iou(&[false; 4], &[false; 4]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_iou_examples() {
        let gt = [1, 1, 1, 2, 0, 0];
        let pred = [1, 1, 1, 0, 0, 0];
        let w = weighted_fg_iou(&gt, &pred, &[1, 2]).unwrap();
        assert!((w.value - 0.75).abs() < 1e-9);
        assert!((weighted_fg_iou(&gt, &gt, &[1, 2]).unwrap().value - 1.0).abs() < 1e-9);
        assert_eq!(weighted_fg_iou(&gt, &[0; 6], &[1, 2]).unwrap().value, 0.0);
        assert!(matches!(
            weighted_fg_iou(&[0; 6], &[0; 6], &[1, 2]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn summary_examples() {
        assert_eq!(summarize(&[1., 2., 3.]).unwrap().median, 2.0);
        let s = summarize(&[4., 1., 3., 2.]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr), (2.5, 1.75, 3.25, 1.5));
        assert_eq!(summarize(&[0.3; 5]).unwrap().iqr, 0.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn curve_extremes() {
        let t = default_thresholds();
        assert_eq!(t.len(), 61);
        let (pts, auc) = success_curve(&[1.0; 4], &t).unwrap();
        assert!(pts.iter().all(|p| p.success_rate == 1.0));
        assert!((auc - 1.0).abs() < 1e-12);
        let (_, auc) = success_curve(&[0.0; 4], &t).unwrap();
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn bland_altman_examples() {
        let b = bland_altman(&[0.5, 0.2], &[0.5, 0.2], false).unwrap();
        assert_eq!((b.bias, b.lower, b.upper, b.p95_band), (0.0, 0.0, 0.0, 0.0));
        let b = bland_altman(&[-1.0, 1.0], &[0.0, 0.0], false).unwrap();
        assert_eq!(b.bias, 0.0);
        assert!((b.upper - 1.96).abs() < 1e-12 && (b.lower + 1.96).abs() < 1e-12);
        let pi = std::f64::consts::PI;
        let b = bland_altman(&[pi - 0.1, 0.0], &[-pi + 0.1, 0.0], true).unwrap();
        assert!((b.bias + 0.1).abs() < 1e-12);
    }

    #[test]
    fn regression_identities() {
        let gt = [0.1, 0.5, 0.2, 0.9, 0.4];
        let r = regress_params(&gt, &gt, false).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12 && (r.slope - 1.0).abs() < 1e-12 && r.intercept.abs() < 1e-12);
        let pred: Vec<f64> = gt.iter().map(|v| 0.87 * v).collect();
        let r = regress_params(&pred, &gt, false).unwrap();
        assert!((r.slope - 0.87).abs() < 1e-12 && (r.r - 1.0).abs() < 1e-12);
        assert!(regress_params(&[1., 2., 3.], &[1., 1., 1.], false).is_err());
        assert!(regress_params(&[1., 2.], &[1., 2.], false).is_err());
    }
}
