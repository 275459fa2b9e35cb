//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (no test harness) so that the lines are always visible; exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use omega_cli::commands::{cmd_evaluate, cmd_generate, cmd_gradcheck, cmd_train};
use omega_cli::config::RunConfig;
use omega_cli::train::{fold_dir, LOG};
use omega_core::autodiff::{Graph, Mode};
use omega_core::metrics::{bland_altman, dice, iou, regress_params, success_curve, weighted_fg_iou};
use omega_core::omega::{combine_losses, LossWeights};
use omega_core::spatial::{
    bilinear_sample, compose_similarity, decompose_similarity, image_losses, image_losses_graph, linspace_value,
    matrix_losses, matrix_losses_graph, warp_image, wrap, RigidParams, SampleGrid,
};
use omega_core::Tensor;
use omega_data::{apply_augmentation, generate_phantom, AugmentRanges, Corruption, View};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_RUNTIME: Duration = Duration::from_secs(5 * 60);
const SAMPLER_INSTANCES: usize = 100;
const WRAP_CONTINUITY: f64 = 1e-9;
const METRIC_TOLERANCE: f64 = 1e-9;
const DICE_PAIRS: usize = 1000;
const ROUND_TRIP_DRAWS: usize = 10_000;
const ROUND_TRIP_TOLERANCE: f64 = 1e-9;
const CANONICAL_INTENSITY_TOLERANCE: f64 = 0.05;
const MIN_WFIOU: f64 = 0.70;
const MAX_MEDIAN_ROTATION_ERROR: f64 = 0.2;
const MAX_TRANSLATION_P95: f64 = 0.10;
const TRAINING_RUNTIME: Duration = Duration::from_secs(60 * 60);
const HOURGLASS_MARGIN: f64 = 0.01;
const DETERMINISM_EPOCHS: usize = 3;

type Verdict = Result<String>;

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let (reports, _, ok) = cmd_gradcheck(42)?;
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    ensure!(
        ok && worst < GRAD_TOLERANCE,
        "failing checks: {:?}",
        reports.iter().filter(|r| !r.passed()).map(|r| &r.name).collect::<Vec<_>>()
    );
    ensure!(elapsed < GRAD_RUNTIME, "took {elapsed:?}");
    Ok(format!("{} checks, worst relative error {worst:.2e}, {:.1}s", reports.len(), elapsed.as_secs_f64()))
}

fn sampler_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (h, w) = (16usize, 16usize);
    let mut points = 0;
    for instance in 0..SAMPLER_INSTANCES {
        let image: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (oh, ow) = (rng.gen_range(2..24), rng.gen_range(2..24));
        let ys: Vec<f64> = (0..oh * ow).map(|_| rng.gen_range(-1.25..1.25)).collect();
        let xs: Vec<f64> = (0..oh * ow).map(|_| rng.gen_range(-1.25..1.25)).collect();
        let grid = SampleGrid::from_planes(oh, ow, ys.clone(), xs.clone())?;
        let fast = bilinear_sample(&Tensor::new(&[h, w, 1], image.clone())?, &grid)?;
        let mut g = Graph::<f64>::new(Mode::Inference);
        let img = g.constant(Tensor::new(&[1, 1, h, w], image.clone())?);
        let grd = g.constant(Tensor::new(&[1, 2, oh, ow], [ys.clone(), xs.clone()].concat())?);
        let op = g.bilinear_sample(img, grd)?;
        for i in 0..oh * ow {
            let py = (ys[i] + 1.0) * (h - 1) as f64 * 0.5;
            let px = (xs[i] + 1.0) * (w - 1) as f64 * 0.5;
            let mut acc = 0.0;
            for y in 0..h {
                let ky = (1.0 - (py - y as f64).abs()).max(0.0);
                for x in 0..w {
                    acc += image[y * w + x] * ky * (1.0 - (px - x as f64).abs()).max(0.0);
                }
            }
            ensure!(
                fast.data()[i].to_bits() == acc.to_bits() && g.value(op).data()[i].to_bits() == acc.to_bits(),
                "instance {instance}, point {i}: {} / {} vs {acc}",
                fast.data()[i],
                g.value(op).data()[i]
            );
            points += 1;
        }
    }
    Ok(format!("{SAMPLER_INSTANCES} instances, {points} points bit-identical"))
}

fn wrapped_loss() -> Verdict {
    let theta_loss = |p: f64, gt: f64| {
        matrix_losses(&RigidParams::new(0.0, 0.0, p, 1.0), &RigidParams::new(0.0, 0.0, gt, 1.0)).theta
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let gt = rng.gen_range(-PI..PI);
        for k in -3..=3 {
            let l = theta_loss(gt + 2.0 * PI * k as f64, gt);
            ensure!(l < 1e-20, "loss {l} at k = {k}");
        }
    }
    ensure!(theta_loss(-PI, PI) == 0.0, "loss(−π, π) = {}", theta_loss(-PI, PI));
    let mut worst = 0.0f64;
    for eps in [1e-3, 1e-6, 1e-9, 1e-12] {
        worst = worst.max((theta_loss(PI - eps, 0.0) - theta_loss(PI + eps, 0.0)).abs());
        worst = worst.max((theta_loss(-PI + eps, 0.0) - theta_loss(-PI - eps, 0.0)).abs());
    }
    ensure!(worst < WRAP_CONTINUITY, "jump {worst:e} across ±π");
    Ok(format!("periodic for k ∈ −3..3, zero at (−π, π), jump across ±π {worst:.1e}"))
}

fn close(a: f64, b: f64, what: &str) -> Result<()> {
    ensure!((a - b).abs() < METRIC_TOLERANCE, "{what}: {a} ≠ {b}");
    Ok(())
}

fn metrics_oracle() -> Verdict {
    let w = weighted_fg_iou(&[0, 1, 1, 2, 2, 2, 0, 0], &[0, 1, 0, 2, 2, 2, 2, 0], &[1, 2])?;
    close(w.value, 0.65, "weighted IoU")?;
    let (_, auc) = success_curve(&[0.5, 0.8, 1.0], &[0.4, 0.6, 0.8, 1.0])?;
    close(auc, 2.0 / 3.0, "AUC")?;
    let r = regress_params(&[2.0, 3.0, 5.0, 6.0], &[1.0, 2.0, 3.0, 4.0], false)?;
    close(r.slope, 1.4, "slope")?;
    close(r.intercept, 0.5, "intercept")?;
    close(r.r, 7.0 / 50f64.sqrt(), "r")?;
    close(r.p_value, 1.0 - 7.0 / 50f64.sqrt(), "p")?;
    let b = bland_altman(&[2.0, 3.0, 5.0, 6.0], &[1.0, 2.0, 3.0, 4.0], false)?;
    close(b.bias, 1.5, "bias")?;
    close(b.lower, 0.52, "lower limit")?;
    close(b.upper, 2.48, "upper limit")?;
    let dm = dice(&[true, true, false, false], &[true, false, true, false])?;
    close(dm, 0.5, "dice")?;

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    for _ in 0..DICE_PAIRS {
        let n = rng.gen_range(1..256);
        let p = rng.gen_range(0.0..1.0);
        let a: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        let j = iou(&a, &b)?;
        worst = worst.max((dice(&a, &b)? - 2.0 * j / (1.0 + j)).abs());
    }
    ensure!(worst < METRIC_TOLERANCE, "Dice/IoU identity off by {worst:e}");
    Ok(format!("fixtures within {METRIC_TOLERANCE:e}; Dice identity on {DICE_PAIRS} pairs, worst {worst:.1e}"))
}

fn similarity_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..ROUND_TRIP_DRAWS {
        let p = RigidParams::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-PI..PI),
            rng.gen_range(0.1..2.0),
        );
        let q = decompose_similarity(&compose_similarity(&p))?;
        for e in [q.tx - p.tx, q.ty - p.ty, wrap(q.theta - p.theta), q.s - p.s] {
            worst = worst.max(e.abs());
        }
    }
    ensure!(worst < ROUND_TRIP_TOLERANCE, "round-trip error {worst:e}");

    // Resampling an augmented image with its updated pose must still give
    // the canonical scene.
    let size = 64;
    let mut worst_mae = 0.0f64;
    for i in 0..50 {
        let view = View::ALL[i % 5];
        let p = omega_data::phantom::draw_params(&mut rng);
        let canonical = generate_phantom(i as u64, 0, view, 0, RigidParams::identity(), size, Corruption::NONE)?;
        let observed = generate_phantom(i as u64, 0, view, 0, p, size, Corruption::NONE)?;
        let a = AugmentRanges::default().draw(&mut rng);
        let aug = apply_augmentation(&observed.image, &observed.labels, size, &p, &a)?;
        let (m_old, m_new) = (compose_similarity(&p), compose_similarity(&aug.params));
        let back = warp_image(&aug.image, (size, size), &m_new, (size, size))?;
        let (mut sum, mut n) = (0.0, 0usize);
        for r in 0..size {
            for c in 0..size {
                let (x, y) = (linspace_value::<f64>(c, size), linspace_value::<f64>(r, size));
                let inside = |m: &omega_core::spatial::SimilarityMatrix<f64>| {
                    let (u, v) = m.apply(x, y);
                    u.abs() <= 1.0 && v.abs() <= 1.0
                };
                if inside(&m_old) && inside(&m_new) {
                    sum += (back[r * size + c] - canonical.image[r * size + c]).abs();
                    n += 1;
                }
            }
        }
        worst_mae = worst_mae.max(sum / n.max(1) as f64);
    }
    ensure!(worst_mae < CANONICAL_INTENSITY_TOLERANCE, "canonical mismatch {worst_mae:.4}");
    Ok(format!(
        "{ROUND_TRIP_DRAWS} draws, worst error {worst:.1e}; augmented canonicalization worst MAE {worst_mae:.4}"
    ))
}

fn desk_config() -> Result<RunConfig> {
    let mut cfg = RunConfig::preset("desk")?;
    cfg.set("variant", "B")?;
    cfg.seed = 42;
    cfg.workers = 1;
    Ok(cfg)
}

/// Per held-out fold: (final U-Net median wfIoU, U-Net 0 median, median
/// |θ error|, translation error p95).
type FoldStats = Vec<(usize, f64, f64, f64, f64)>;

fn desk_training(tmp: &std::path::Path) -> Result<(FoldStats, Duration)> {
    let start = Instant::now();
    let mut cfg = desk_config()?;
    cmd_generate(&cfg, &tmp.join("data"), false)?;
    cfg.data = Some(tmp.join("data"));
    cmd_train(&cfg, &tmp.join("train"), false, &mut |fold, row| {
        eprintln!(
            "    fold {fold} epoch {:>2} loss {:.3} val {:.4}",
            row.epoch,
            row.losses.total,
            row.val_wfiou_median.unwrap_or(f64::NAN)
        )
    })?;
    cfg.checkpoint = Some(tmp.join("train"));
    let evals = cmd_evaluate(&cfg, &tmp.join("eval"))?;
    let elapsed = start.elapsed();
    let mut stats = Vec::new();
    for e in evals {
        let pose = e.pose.as_ref().ok_or_else(|| anyhow::anyhow!("no pose statistics"))?;
        stats.push((
            e.held_out,
            e.unets[e.unets.len() - 1].overall.median,
            e.unets[0].overall.median,
            pose.median_abs_rotation_error,
            pose.translation_p95,
        ));
    }
    Ok((stats, elapsed))
}

fn criterion6(run: &Result<(FoldStats, Duration)>) -> Verdict {
    let (stats, elapsed) = run.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
    ensure!(stats.len() == 3, "expected 3 folds, got {}", stats.len());
    let mut parts = Vec::new();
    let mut ok = *elapsed <= TRAINING_RUNTIME;
    for &(f, wfiou, _, rot, trans) in stats {
        ok &= wfiou >= MIN_WFIOU && rot <= MAX_MEDIAN_ROTATION_ERROR && trans <= MAX_TRANSLATION_P95;
        parts.push(format!("fold {f}: wfIoU {wfiou:.3}, |Δθ| {rot:.3}, t p95 {trans:.3}"));
    }
    let text = format!("{}; {:.1} min", parts.join("; "), elapsed.as_secs_f64() / 60.0);
    ensure!(ok, "{text}");
    Ok(text)
}

fn criterion7(run: &Result<(FoldStats, Duration)>) -> Verdict {
    let (stats, _) = run.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
    let mut ok = !stats.is_empty();
    let mut parts = Vec::new();
    for &(f, last, first, _, _) in stats {
        ok &= last >= first - HOURGLASS_MARGIN;
        parts.push(format!("fold {f}: U-Net 1 {last:.3} vs U-Net 0 {first:.3} ({:+.3})", last - first));
    }
    ensure!(ok, "{}", parts.join("; "));
    Ok(parts.join("; "))
}

fn loss_assembly() -> Verdict {
    let total = combine_losses(&LossWeights::default(), 1.0, Some(&[1.0; 4]), Some(&[1.0; 3]), &[1.0]);
    ensure!(total == 501.3, "unit components give {total}");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gt: Vec<RigidParams<f64>> = (0..4).map(|_| omega_data::phantom::draw_params(&mut rng)).collect();
    let size = 16;
    let images: Vec<f64> = (0..4 * size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut g = Graph::<f64>::new(Mode::Training);
    let pred = g.leaf(Tensor::new(&[4, 4], gt.iter().flat_map(|p| p.to_array()).collect())?);
    let img = g.constant(Tensor::new(&[4, 1, size, size], images.clone())?);
    let mut values: Vec<f64> = matrix_losses_graph(&mut g, pred, &gt)?.iter().map(|&v| g.item(v)).collect();
    values.extend(image_losses_graph(&mut g, img, pred, &gt)?.0.iter().map(|&v| g.item(v)));
    for (i, p) in gt.iter().enumerate() {
        let m = matrix_losses(p, p);
        let im = image_losses(&images[i * size * size..(i + 1) * size * size], (size, size), p, p)?;
        values.extend([m.tx, m.ty, m.theta, m.s, im.t, im.theta, im.s]);
    }
    ensure!(values.iter().all(|&v| v == 0.0), "non-zero transformer losses {values:?}");
    Ok(format!("unit components → {total}; {} transformer losses exactly 0 at ground truth", values.len()))
}

fn determinism(tmp: &std::path::Path) -> Verdict {
    let mut cfg = desk_config()?;
    cfg.epochs = DETERMINISM_EPOCHS;
    cfg.train_folds = vec![0];
    cmd_generate(&cfg, &tmp.join("data"), false)?;
    cfg.data = Some(tmp.join("data"));
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        cmd_train(&cfg, &tmp.join(run), false, &mut |_, _| {})?;
        logs.push(std::fs::read_to_string(fold_dir(&tmp.join(run), 0).join(LOG))?);
    }
    let rows = logs[0].lines().count() - 1;
    ensure!(rows == DETERMINISM_EPOCHS, "expected {DETERMINISM_EPOCHS} rows, got {rows}");
    ensure!(logs[0] == logs[1], "logs differ:\n{}\n{}", logs[0], logs[1]);
    Ok(format!("epochs 0..{} bit-identical across two runs", DETERMINISM_EPOCHS - 1))
}

fn report(id: usize, name: &str, verdict: Verdict, all: &mut bool) {
    match verdict {
        Ok(detail) => println!("[PASS] {id}. {name}: {detail}"),
        Err(e) => {
            *all = false;
            println!("[FAIL] {id}. {name}: {e:#}");
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    // A positional filter that does not select this target skips it.
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut all = true;
    report(1, "gradient suite", gradient_suite(), &mut all);
    report(2, "sampler oracle", sampler_oracle(), &mut all);
    report(3, "wrapped-phase loss", wrapped_loss(), &mut all);
    report(4, "metrics oracle", metrics_oracle(), &mut all);
    report(5, "similarity algebra", similarity_algebra(), &mut all);
    eprintln!("    training Network B on the desk preset (3 folds)...");
    let run = desk_training(&tmp.path().join("desk"));
    report(6, "desk-scale training", criterion6(&run), &mut all);
    report(7, "hourglass non-inferiority", criterion7(&run), &mut all);
    report(8, "loss assembly", loss_assembly(), &mut all);
    report(9, "determinism", determinism(&tmp.path().join("determinism")), &mut all);
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
