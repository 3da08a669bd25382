//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line
//! for its criterion, straight to stdout so the line survives output capture,
//! then asserts the verdict.

mod common;

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{recovery_trial, Fixture};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num::{BigRational, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use splatpose::estimator::{
    coarse_estimate, generate_candidates, refine, refine_observed, track_sequence, CoarseConfig, EarlyStopping,
    LearningRates, PlateauScheduler, RefinerConfig,
};
use splatpose::geometry::{project, projection_jacobian, Intrinsics, Pose, Rotation};
use splatpose::gradcheck::{run_gradcheck, GradcheckConfig};
use splatpose::metrics_io::{ade, aggregate_reports, fde, per_axis_error, MetricsReport, Trajectory, TrajectoryRecord};
use splatpose::renderer::{pixel_averaged_loss, render, render_model, RenderSettings};
use splatpose::synthlab::{generate_dataset, generate_sequence, load_manifest, DatasetSpec, SequenceSpec};
use splatpose::tool_model::{default_tool_model, default_tool_model_with_shaft, JointVector, PosedGaussian};

/// Heavy criteria run one at a time so their timings are not shared.
static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{name}: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn gradient_correctness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = GradcheckConfig::default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let report = pool.install(|| run_gradcheck(&cfg)).unwrap();
    let elapsed = start.elapsed();
    let failed = report.failures().count();
    let pass = cfg.trials >= 100
        && (cfg.width, cfg.height) == (64, 64)
        && failed == 0
        && elapsed <= Duration::from_secs(300);
    verdict(
        "gradient correctness",
        pass,
        &format!(
            "{} instances at {}x{}, {failed}/{} blocks failed, worst rel err {:.2e}, {} redrawn, {:.1} s single-threaded",
            cfg.trials,
            cfg.width,
            cfg.height,
            report.checks.len(),
            report.worst_rel_err(),
            report.redrawn,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn fixed_point_refinement() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let fx = Fixture::new(64);
    let cfg = RefinerConfig::default();
    let results: Vec<(bool, usize, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = fx.random_pose(&mut rng);
            let q = fx.random_joints(&mut rng, 0.1);
            let (target, _) = fx.target(&pose, &q);
            let e = refine(&pose, &q, &target, &fx.scene(), &cfg, cfg.max_iters_first_frame).unwrap();
            let moved = (e.pose.translation - pose.translation)
                .amax()
                .max(e.pose.rotation.angle_to(&pose.rotation))
                .max((e.q.0 - q.0).amax());
            (e.stopped_early, e.iters_used, moved)
        })
        .collect();
    let bound = cfg.early_stop_window + 1;
    let ok = results.iter().filter(|(s, n, m)| *s && *n <= bound && *m <= 1e-6).count();
    let worst_iters = results.iter().map(|r| r.1).max().unwrap();
    let worst_move = results.iter().map(|r| r.2).fold(0.0, f64::max);
    verdict(
        "fixed-point refinement",
        ok == results.len(),
        &format!(
            "{ok}/{} scenes stop within {bound} iterations without moving; worst {worst_iters} iterations, largest move {worst_move:.1e}",
            results.len()
        ),
    );
}

#[test]
fn single_frame_recovery() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let fx = Fixture::new(128);
    let cfg = RefinerConfig::default();
    let trials: Vec<_> = (0..50u64).into_par_iter().map(|s| recovery_trial(&fx, 1000 + s, &cfg)).collect();
    let ok = trials.iter().filter(|r| r.within(1e-3, 1f64.to_radians(), 0.02)).count();
    verdict(
        "single-frame recovery",
        ok * 100 >= 95 * trials.len(),
        &format!(
            "{ok}/50 within 1 mm / 1 deg / 0.02 rad (need 48); median errors {:.3} mm, {:.2} deg, {:.3} rad",
            median(trials.iter().map(|r| r.t_err * 1e3).collect()),
            median(trials.iter().map(|r| r.r_err.to_degrees()).collect()),
            median(trials.iter().map(|r| r.q_err).collect()),
        ),
    );
}

#[test]
fn sequence_tracking() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let model = default_tool_model();
    let spec = SequenceSpec::default();
    let dir = tempfile::tempdir().unwrap();
    let seq = generate_sequence(&model, &spec, dir.path()).unwrap();
    let truth = seq.truth.records();
    let motion_ok = truth.windows(2).all(|w| {
        (w[1].pose.translation - w[0].pose.translation).norm() <= 0.002 + 1e-12
            && w[1].pose.rotation.angle_to(&w[0].pose.rotation) <= 2f64.to_radians() + 1e-12
    });

    let render = RenderSettings::default();
    let loss = Default::default();
    let scene = splatpose::estimator::Scene {
        model: &model,
        intrinsics: &seq.intrinsics,
        render: &render,
        loss: &loss,
    };
    let refiner = RefinerConfig::default();
    let start = Instant::now();
    let est = track_sequence(&seq.frames, &scene, &CoarseConfig::default(), &refiner).unwrap();
    let elapsed = start.elapsed();
    let cap_ok = refiner.max_iters_tracking == 10
        && est[1..].iter().all(|e| e.iters_used <= 10 && e.history.len() <= 10);
    let traj = Trajectory::from_estimates(&est).unwrap();
    let (a, f) = (ade(&traj, &seq.truth).unwrap(), fde(&traj, &seq.truth).unwrap());
    let pass = spec.n_frames == 30 && motion_ok && cap_ok && a <= 1e-3 && f <= 2e-3 && elapsed <= Duration::from_secs(120);
    verdict(
        "sequence tracking",
        pass,
        &format!(
            "30 frames, motion within bounds {motion_ok}, cap of 10 honored {cap_ok}, ADE {:.3} mm (<= 1), FDE {:.3} mm (<= 2), {:.1} s (<= 120)",
            a * 1e3,
            f * 1e3,
            elapsed.as_secs_f64()
        ),
    );
}

fn in_plane_angle(r: &Rotation<f64>) -> f64 {
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}

#[test]
fn coarse_estimator_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let fx = Fixture::new(64);
    let coarse = CoarseConfig::default();
    let refiner = RefinerConfig::default();
    let q0 = fx.model.limits().neutral();

    let mut exact = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let gt = fx.random_pose(&mut rng);
        let (frame, mask) = fx.target(&gt, &fx.random_joints(&mut rng, 0.1));
        let res = coarse_estimate(&frame, &mask, &fx.scene(), &coarse, &refiner).unwrap();
        let losses: Vec<f64> = res
            .candidates
            .par_iter()
            .map(|c| {
                let e = refine(c, &q0, &frame, &fx.scene(), &refiner, coarse.refine_iters_per_candidate).unwrap();
                let out = render_model(&fx.model, &e.pose, &e.q, &fx.k, &fx.render).unwrap();
                pixel_averaged_loss(&out, &frame, &fx.loss, coarse.alpha_support).unwrap()
            })
            .collect();
        let best = (0..losses.len()).fold(0, |b, i| if losses[i] < losses[b] { i } else { b });
        exact += usize::from(res.candidates.len() == coarse.candidate_count() && res.index == best);
    }

    // Planted truth: the rotation is exactly one of the candidate bins and the
    // origin sits on the grid center. The grid is anchored at the silhouette
    // centroid, so the shaft is shortened to 12 mm, which puts that centroid
    // on the tool origin.
    let planted_fx = Fixture {
        model: default_tool_model_with_shaft(0.012),
        ..Fixture::new(64)
    };
    let n_rot = coarse.n_rotations;
    let bin = std::f64::consts::TAU / n_rot as f64;
    let mut planted = 0;
    let mut misses = Vec::new();
    let mut worst_offset = 0.0f64;
    let planted_scenes = 5;
    for seed in 0..planted_scenes {
        let fx = &planted_fx;
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let theta = rng.random_range(0..n_rot) as f64 * bin;
        let gt = Pose::new(
            Rotation::rz(theta),
            Vector3::new(rng.random_range(-0.002..0.002), rng.random_range(-0.002..0.002), coarse.init_depth),
        );
        let (frame, mask) = fx.target(&gt, &q0);
        let res = coarse_estimate(&frame, &mask, &fx.scene(), &coarse, &refiner).unwrap();
        let cands = generate_candidates(&mask, &fx.k, &coarse).unwrap();
        let g = coarse.grid_size;
        let cell = |t: &Vector3<f64>| {
            (0..g * g)
                .min_by(|a, b| {
                    let da = (cands[a * n_rot].translation - t).xy().norm();
                    let db = (cands[b * n_rot].translation - t).xy().norm();
                    da.total_cmp(&db)
                })
                .unwrap()
        };
        let (sel_cell, true_cell) = (res.index / n_rot, cell(&gt.translation));
        let spacing = (cands[n_rot].translation - cands[0].translation).norm();
        worst_offset = worst_offset.max((cands[true_cell * n_rot].translation - gt.translation).norm() / spacing);
        let cell_ok = (sel_cell % g).abs_diff(true_cell % g) <= 1 && (sel_cell / g).abs_diff(true_cell / g) <= 1;
        let d = (in_plane_angle(&cands[res.index].rotation) - theta).rem_euclid(std::f64::consts::TAU);
        let rot_ok = d.min(std::f64::consts::TAU - d) <= bin + 1e-9;
        if cell_ok && rot_ok {
            planted += 1;
        } else {
            misses.push(format!(
                "scene {seed} cell {sel_cell} vs {true_cell}, bin {} vs {}, refined estimate {:.1} deg from truth",
                res.index % n_rot,
                (theta / bin).round(),
                res.estimate.pose.rotation.angle_to(&gt.rotation).to_degrees()
            ));
        }
    }
    verdict(
        "coarse estimator exactness",
        exact == 10 && planted == planted_scenes as usize,
        &format!(
            "{exact}/10 selections equal the exhaustive argmin over {} candidates; {planted}/{planted_scenes} planted scenes within one grid spacing and one {:.0} deg bin (truth within {:.2} spacings of a grid point){}",
            coarse.candidate_count(),
            bin.to_degrees(),
            worst_offset,
            if misses.is_empty() { String::new() } else { format!(" (misses: {})", misses.join("; ")) }
        ),
    );
}

#[test]
fn optimizer_mechanics() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let defaults = RefinerConfig::default();
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    check(
        defaults.trans_clamp == 0.02 && defaults.scheduler_patience == 20 && defaults.scheduler_factor == 0.5,
        "default clamp, patience and factor",
    );
    check(defaults.early_stop_delta == 1e-7 && defaults.early_stop_window == 10, "default early stopping");

    let mut s = PlateauScheduler::new(defaults.scheduler_factor, defaults.scheduler_patience);
    let mut r = defaults.rates();
    let reduced: Vec<bool> = (0..41).map(|_| s.step(1.0, &mut r)).collect();
    let when: Vec<usize> = reduced.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();
    check(when == [20, 40], "halving exactly after 20 non-improving iterations");
    check(
        r == LearningRates {
            rot: 0.075,
            trans: 7.5e-5,
            joint: 2.5e-4,
        },
        "rates halved twice",
    );

    let mut e = EarlyStopping::new(1e-7, 10);
    let fired = (0..12).map(|i| e.step(1.0 - 5e-9 * i as f64)).position(|f| f);
    check(fired == Some(10), "early stop when the change over 10 iterations is below 1e-7");
    let mut e = EarlyStopping::new(1e-7, 10);
    check((0..100).all(|i| !e.step(1.0 - 2e-8 * i as f64)), "no early stop at 2e-7 over 10");

    // Clamp and joint limits, observed at every iterate of hard refinements.
    let fx = Fixture::new(64);
    let cfg = RefinerConfig {
        lr_joint: 50.0,
        ..RefinerConfig::default()
    };
    let limits = fx.model.limits();
    let (mut saturated, mut at_bound, mut iterates) = (0, 0, 0);
    let (mut clamp_ok, mut limits_ok) = (true, true);
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let gt = fx.random_pose(&mut rng);
        let (target, _) = fx.target(&gt, &fx.random_joints(&mut rng, 0.1));
        let init = Pose::new(gt.rotation, gt.translation + Vector3::new(0.004, -0.003, 0.005));
        let q = limits.neutral();
        let mut records = Vec::new();
        refine_observed(&init, &q, &target, &fx.scene(), &cfg, 40, cfg.rates(), |r| records.push(r.clone())).unwrap();
        for w in records.windows(2) {
            let r = &w[0];
            for i in 0..3 {
                clamp_ok &= r.clamped_t[i] == r.grad.t[i].clamp(-0.02, 0.02);
                saturated += usize::from(r.grad.t[i].abs() > 0.02);
            }
            let step = w[1].pose.translation - r.pose.translation;
            let ulp = 4.0 * f64::EPSILON * r.pose.translation.amax();
            clamp_ok &= (step + r.clamped_t * r.rates.trans).amax() <= ulp;
        }
        for r in &records {
            iterates += 1;
            limits_ok &= limits.contains(&r.q);
            at_bound += usize::from((0..3).any(|i| r.q.0[i] == limits.min[i] || r.q.0[i] == limits.max[i]));
        }
    }
    check(clamp_ok && saturated > 0, "translation gradient clamped to +-0.02 and applied");
    check(limits_ok && at_bound > 0, "joints clamped to limits after every step");
    verdict(
        "optimizer mechanics",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("clamp saturated on {saturated} components, {at_bound}/{iterates} iterates on a joint limit, scheduler and early stopping exact")
        } else {
            format!("failed: {}", failures.join("; "))
        },
    );
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|i| TrajectoryRecord {
                frame: i as u64,
                pose: Pose::new(
                    Rotation::exp(&Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))),
                    Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.2)),
                ),
                q: JointVector::zeros(),
                loss: None,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn metrics_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut reports = Vec::new();
    let mut ade_oracle = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1..30);
        let (est, gt) = (random_trajectory(&mut rng, n), random_trajectory(&mut rng, n));
        let diffs: Vec<[BigRational; 3]> = est
            .records()
            .iter()
            .zip(gt.records())
            .map(|(a, b)| {
                let (p, g) = (a.pose.translation, b.pose.translation);
                [0, 1, 2].map(|k| rational(p[k]) - rational(g[k]))
            })
            .collect();
        let count = BigRational::from_integer((n as i64).into());
        let norm = |d: &[BigRational; 3]| (&d[0] * &d[0] + &d[1] * &d[1] + &d[2] * &d[2]).to_f64().unwrap().sqrt();
        let o_ade = (diffs.iter().fold(rational(0.0), |s, d| s + rational(norm(d))) / &count).to_f64().unwrap();
        let o_fde = norm(diffs.last().unwrap());
        worst = worst.max(rel(ade(&est, &gt).unwrap(), o_ade)).max(rel(fde(&est, &gt).unwrap(), o_fde));
        let axis = per_axis_error(&est, &gt).unwrap();
        for k in 0..3 {
            let m = diffs.iter().fold(rational(0.0), |s, d| s + &d[k]) / &count;
            let v = diffs.iter().fold(rational(0.0), |s, d| s + (&d[k] - &m) * (&d[k] - &m)) / &count;
            let (m, sd) = (m.to_f64().unwrap(), v.to_f64().unwrap().sqrt());
            // A signed mean can cancel; measure it on the scale of the spread.
            worst = worst.max((axis.mean[k] - m).abs() / m.abs().max(sd).max(f64::MIN_POSITIVE));
            worst = worst.max(if sd == 0.0 { axis.std[k] } else { rel(axis.std[k], sd) });
        }
        reports.push(MetricsReport::compute(&est, &gt).unwrap());
        ade_oracle.push(rational(o_ade));
    }
    let agg = aggregate_reports(&reports).unwrap();
    let count = BigRational::from_integer(1000.into());
    let m = ade_oracle.iter().fold(rational(0.0), |s, x| s + x) / &count;
    let v = ade_oracle.iter().fold(rational(0.0), |s, x| s + (x - &m) * (x - &m)) / &count;
    worst = worst
        .max(rel(agg.ade.mean, m.to_f64().unwrap()))
        .max(rel(agg.ade.std, v.to_f64().unwrap().sqrt()));

    let line = |off: Vector3<f64>| {
        Trajectory::new(
            (0..5)
                .map(|i| TrajectoryRecord {
                    frame: i,
                    pose: Pose::from_translation(Vector3::new(0.01 * i as f64, 0.0, 0.1) + off),
                    q: JointVector::zeros(),
                    loss: None,
                })
                .collect(),
        )
        .unwrap()
    };
    let offset_ade = ade(&line(Vector3::new(0.003, 0.004, 0.0)), &line(Vector3::zeros())).unwrap();
    let expected = Vector3::new(0.003f64, 0.004, 0.0).norm();
    verdict(
        "metrics oracle",
        worst <= 1e-12 && offset_ade == expected && (offset_ade - 0.005).abs() <= 1e-15,
        &format!("1000 random pairs, worst relative error {worst:.1e}; offset (3,4,0) mm gives ADE {:.15} mm", offset_ade * 1e3),
    );
}

/// Effective opacity of one Gaussian at a pixel, evaluated directly.
fn oracle_alpha(g: &PosedGaussian<f64>, k: &Intrinsics<f64>, p: Vector2<f64>, s: &RenderSettings<f64>) -> f64 {
    let c = s.alpha_cutoff;
    let Ok(mu) = project(&g.mean_cam, k, 1e-4) else {
        return 0.0;
    };
    let j = projection_jacobian(&g.mean_cam, k, 1e-4).unwrap();
    let cov: Matrix2<f64> = j * g.cov_cam * j.transpose() + Matrix2::identity() * s.dilation;
    let d = p - mu;
    let a = g.opacity * (-0.5 * (d.transpose() * cov.try_inverse().unwrap() * d)[(0, 0)]).exp();
    if a < c || g.opacity <= c {
        0.0
    } else if a >= c * (1.0 + s.taper_band) {
        a
    } else {
        let u = (a - c) / (c * s.taper_band);
        a * u.powi(3) * (6.0 * u * u - 15.0 * u + 10.0)
    }
}

#[test]
fn renderer_invariants() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let k = Intrinsics::centered(48, 48, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut s = RenderSettings::default();
    let mut worst = 0.0f64;
    let mut in_range = true;
    for _ in 0..100 {
        s.background = Vector3::from_fn(|_, _| rng.random_range(0.0..1.0));
        let scene: Vec<PosedGaussian<f64>> = (0..30)
            .map(|_| {
                let r = Rotation::exp(&Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0)));
                let m = r.matrix() * Matrix3::from_diagonal(&Vector3::from_fn(|_, _| rng.random_range(0.0005..0.004)));
                PosedGaussian {
                    mean_cam: Vector3::new(
                        rng.random_range(-0.03..0.03),
                        rng.random_range(-0.03..0.03),
                        rng.random_range(0.06..0.15),
                    ),
                    cov_cam: m * m.transpose(),
                    opacity: rng.random_range(0.0..1.0),
                    color: Vector3::from_fn(|_, _| rng.random_range(0.0..1.0)),
                }
            })
            .collect();
        let out = render(&scene, &k, &s);
        let mut order: Vec<usize> = (0..scene.len()).collect();
        order.sort_by(|a, b| scene[*b].mean_cam.z.total_cmp(&scene[*a].mean_cam.z));
        for y in 0..k.height {
            for x in 0..k.width {
                let p = Vector2::new(x as f64, y as f64);
                let (mut c, mut t) = (s.background, 1.0);
                for &i in &order {
                    let a = oracle_alpha(&scene[i], &k, p, &s);
                    c = scene[i].color * a + c * (1.0 - a);
                    t *= 1.0 - a;
                }
                let got = out.image.pixel(x, y);
                let alpha = out.alpha[y * k.width + x];
                worst = worst.max((got - c).amax()).max((alpha - (1.0 - t)).abs());
                in_range &= got.iter().all(|v| (0.0..=1.0).contains(v)) && (0.0..=1.0).contains(&alpha);
            }
        }
    }
    let empty = render(&[], &k, &s);
    let empty_ok = empty.alpha.iter().all(|a| *a == 0.0)
        && (0..k.height).all(|y| (0..k.width).all(|x| empty.image.pixel(x, y) == s.background));
    verdict(
        "renderer invariants",
        in_range && worst <= 1e-6 && empty_ok,
        &format!(
            "100 random scenes: values in [0,1] {in_range}, front-to-back vs back-to-front max diff {worst:.1e}, empty scene is background {empty_ok}"
        ),
    );
}

#[test]
fn dataset_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let model = default_tool_model();
    let spec = DatasetSpec {
        n_canonical: 3,
        n_posed: 5,
        views_per_config: 3,
        width: 64,
        height: 64,
        noise_std: 0.02,
        seed: 12,
        ..DatasetSpec::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_dataset(&model, &spec, a.path()).unwrap();
    let mb = generate_dataset(&model, &spec, b.path()).unwrap();
    let bytes = |p: &std::path::Path| std::fs::read(p).unwrap();
    let mut identical = bytes(&ma.path()) == bytes(&mb.path());
    for r in &ma.records {
        identical &= bytes(&a.path().join(&r.image)) == bytes(&b.path().join(&r.image));
        identical &= bytes(&a.path().join(&r.mask)) == bytes(&b.path().join(&r.mask));
    }
    let loaded = load_manifest(&ma.path()).unwrap();
    let mut worst_ratio = 0.0f64;
    for r in &loaded.records {
        let l = r.load(&loaded.dir).unwrap();
        let out = render_model(&model, &l.pose, &l.q, &l.intrinsics, &RenderSettings::default()).unwrap();
        let worst = out.image.pixels.iter().zip(&l.frame.pixels).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(worst / r.noise_bound());
    }
    verdict(
        "dataset determinism",
        identical && worst_ratio <= 1.0 + 1e-12,
        &format!(
            "{} records, byte-identical across runs {identical}, worst re-render error {:.3} of the noise bound",
            loaded.records.len(),
            worst_ratio
        ),
    );
}
