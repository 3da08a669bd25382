//! Finite-difference validation of the analytic pose and joint gradients.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geometry::{Intrinsics, Pose, Rotation};
use crate::renderer::{combined_loss, evaluate, render_model, LossConfig, RenderSettings};
use crate::tool_model::{default_tool_model, GaussianPrimitive, JointVector, ToolModel};

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub trials: usize,
    pub width: usize,
    pub height: usize,
    /// Central-difference step for every coordinate.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub render: RenderSettings<f64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            width: 64,
            height: 64,
            step: 1e-5,
            rel_tol: 1e-3,
            abs_floor: 1e-8,
            render: RenderSettings::default(),
        }
    }
}

/// Gradient blocks returned by the backward pass, each a 3-vector.
pub const BLOCKS: [&str; 3] = ["omega", "t", "q"];

/// Analytic versus central-difference gradient for one block of one trial.
/// The relative error is `|a - n| / max(|a|, |n|)` over the 3-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub trial: usize,
    pub block: &'static str,
    pub analytic: Vector3<f64>,
    pub numeric: Vector3<f64>,
    pub abs_err: f64,
    pub rel_err: f64,
    pub passed: bool,
}

impl BlockCheck {
    /// Largest per-component relative error, for diagnostics.
    pub fn worst_component_rel_err(&self) -> f64 {
        (0..3)
            .map(|i| {
                let d = (self.analytic[i] - self.numeric[i]).abs();
                let m = self.analytic[i].abs().max(self.numeric[i].abs());
                if m > 0.0 {
                    d / m
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub checks: Vec<BlockCheck>,
    /// Instances redrawn because a perturbation changed the splat depth
    /// order, where the loss is discontinuous.
    pub redrawn: usize,
}

impl GradcheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &BlockCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn worst_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }
}

/// One randomized problem: appearance-jittered model, oblique pose, joint
/// configuration and a target rendered from a nearby pose.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: ToolModel<f64>,
    pub pose: Pose<f64>,
    pub q: JointVector<f64>,
    pub target: crate::renderer::Frame<f64>,
    pub intrinsics: Intrinsics<f64>,
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rotation<f64> {
    let axis = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
    let angle = rng.random_range(0.0..max_angle);
    Rotation::from_axis_angle(&axis.normalize(), angle)
}

fn random_q(rng: &mut ChaCha8Rng, model: &ToolModel<f64>, margin: f64) -> JointVector<f64> {
    let l = model.limits();
    loop {
        let q = JointVector(Vector3::from_fn(|i, _| rng.random_range(l.min[i] + margin..l.max[i] - margin)));
        if q.q2() + q.q3() >= margin {
            return q;
        }
    }
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    settings: &RenderSettings<f64>,
) -> Result<Instance> {
    let base = default_tool_model::<f64>();
    let gaussians: Vec<GaussianPrimitive<f64>> = base
        .gaussians()
        .iter()
        .map(|g| GaussianPrimitive {
            color: g.color.map(|c| (c + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0)),
            opacity: (g.opacity + rng.random_range(-0.2..0.1)).clamp(0.05, 1.0),
            ..g.clone()
        })
        .collect();
    let model = base.with_gaussians(gaussians)?;
    let intrinsics = Intrinsics::centered(width, height, 3.0)?;
    let pose = Pose::new(
        random_rotation(rng, std::f64::consts::PI),
        Vector3::new(rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004), rng.random_range(0.08..0.13)),
    );
    let q = random_q(rng, &model, 0.05);
    let target_pose = Pose::new(
        pose.rotation.mul(&random_rotation(rng, 0.1)),
        pose.translation + Vector3::from_fn(|_, _| rng.random_range(-0.003..0.003)),
    );
    let target_q = random_q(rng, &model, 0.05);
    let target = render_model(&model, &target_pose, &target_q, &intrinsics, settings)?.image;
    Ok(Instance {
        model,
        pose,
        q,
        target,
        intrinsics,
    })
}

/// Pose and joints displaced by `h` along coordinate `i` of
/// `(omega, delta_t, q)`, the tangent space of the analytic gradient.
fn displaced(pose: &Pose<f64>, q: &JointVector<f64>, i: usize, h: f64) -> (Pose<f64>, JointVector<f64>) {
    let mut pose = *pose;
    let mut q = *q;
    match i {
        0..=2 => {
            let mut w = Vector3::zeros();
            w[i] = h;
            pose.rotation = pose.rotation.mul(&Rotation::exp(&w));
        }
        3..=5 => pose.translation[i - 3] += h,
        _ => q.0[i - 6] += h,
    }
    (pose, q)
}

/// Compares analytic and central-difference gradients on one instance.
/// Returns `None` when some perturbation reorders the splats, since the
/// loss is not differentiable there.
pub fn check_instance(inst: &Instance, cfg: &GradcheckConfig, trial: usize) -> Result<Option<Vec<BlockCheck>>> {
    let settings = cfg.render;
    let loss_cfg = LossConfig::default();
    let e = evaluate(&inst.model, &inst.pose, &inst.q, &inst.target, &inst.intrinsics, &settings, &loss_cfg)?;
    let order = e.render.cache.depth_order();
    let analytic: Vec<f64> = e.grad.omega.iter().chain(e.grad.t.iter()).chain(e.grad.q.iter()).copied().collect();
    let f = |pose: &Pose<f64>, q: &JointVector<f64>| -> Result<Option<f64>> {
        let out = render_model(&inst.model, pose, q, &inst.intrinsics, &settings)?;
        if out.cache.depth_order() != order {
            return Ok(None);
        }
        combined_loss(&out.image, &inst.target, &loss_cfg).map(Some)
    };
    let mut numeric = [0.0; 9];
    for (i, n) in numeric.iter_mut().enumerate() {
        let (pp, qp) = displaced(&inst.pose, &inst.q, i, cfg.step);
        let (pm, qm) = displaced(&inst.pose, &inst.q, i, -cfg.step);
        let (Some(lp), Some(lm)) = (f(&pp, &qp)?, f(&pm, &qm)?) else {
            return Ok(None);
        };
        *n = (lp - lm) / (2.0 * cfg.step);
    }
    Ok(Some(
        BLOCKS
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let a = Vector3::from_column_slice(&analytic[3 * b..3 * b + 3]);
                let n = Vector3::from_column_slice(&numeric[3 * b..3 * b + 3]);
                let abs_err = (a - n).norm();
                let scale = a.norm().max(n.norm());
                let rel_err = if scale > 0.0 { abs_err / scale } else { 0.0 };
                BlockCheck {
                    trial,
                    block,
                    analytic: a,
                    numeric: n,
                    abs_err,
                    rel_err,
                    passed: abs_err <= cfg.abs_floor || rel_err <= cfg.rel_tol,
                }
            })
            .collect(),
    ))
}

/// Runs `cfg.trials` seeded instances and compares every gradient block.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradcheckReport::default();
    let mut trial = 0;
    while trial < cfg.trials {
        let inst = random_instance(&mut rng, cfg.width, cfg.height, &cfg.render)?;
        match check_instance(&inst, cfg, trial)? {
            Some(checks) => {
                report.checks.extend(checks);
                trial += 1;
            }
            None => report.redrawn += 1,
        }
    }
    Ok(report)
}
