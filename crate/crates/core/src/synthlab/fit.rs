use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::renderer::{combined_loss_with_grad, render, render_backward_gaussians, Frame, LossConfig, RenderSettings};
use crate::tool_model::{forward_kinematics, pose_gaussians, GaussianPrimitive, ToolModel};

/// One observed view of the tool at its neutral configuration.
#[derive(Debug, Clone)]
pub struct FitView {
    pub frame: Frame<f64>,
    /// Tool-to-camera transform.
    pub pose: Pose<f64>,
    pub intrinsics: Intrinsics<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iters: usize,
    pub lr_mean: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub min_scale: f64,
    pub min_opacity: f64,
    /// Stop once the mean loss is at or below this value; Adam would
    /// otherwise amplify round-off gradients into full-size steps.
    pub tolerance: f64,
    pub render: RenderSettings<f64>,
    pub loss: LossConfig<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iters: 200,
            lr_mean: 1e-4,
            lr_scale: 5e-5,
            lr_opacity: 1e-2,
            lr_color: 1e-2,
            min_scale: 1e-5,
            min_opacity: 1e-3,
            tolerance: 1e-12,
            render: RenderSettings::default(),
            loss: LossConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr_mean, self.lr_scale, self.lr_opacity, self.lr_color];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("fit learning rates must be positive".into()));
        }
        if !(self.min_scale > 0.0 && (0.0..=1.0).contains(&self.min_opacity) && self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("min_scale must be positive, min_opacity in [0, 1] and tolerance >= 0".into()));
        }
        self.render.validate()?;
        self.loss.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ToolModel<f64>,
    /// Mean loss over views before any update.
    pub initial_loss: f64,
    /// Mean loss over views of the returned model, the best one visited.
    pub final_loss: f64,
    /// Mean loss at each iteration, before its update.
    pub history: Vec<f64>,
}

const PARAMS: usize = 10;

/// Flat per-Gaussian gradient: mean, scale, opacity, color.
type ParamGrad = [f64; PARAMS];

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn steps(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        g.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(g, (m, v))| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Loss of one view and the gradient of that loss with respect to every
/// Gaussian's local parameters.
fn view_gradient(
    model: &ToolModel<f64>,
    link_rot: &[Matrix3<f64>],
    view: &FitView,
    cfg: &FitConfig,
) -> Result<(f64, Vec<ParamGrad>)> {
    let q = model.limits().neutral();
    let posed = pose_gaussians(model, &view.pose, &q)?;
    let out = render(&posed, &view.intrinsics, &cfg.render);
    let l = combined_loss_with_grad(&out.image, &view.frame, &cfg.loss)?;
    let gg = render_backward_gaussians(&out, &l.grad, &posed)?;
    let rp = view.pose.rotation.matrix();
    let grads = model
        .gaussians()
        .iter()
        .zip(&gg)
        .map(|(g, d)| {
            let rl = rp * link_rot[g.link];
            let dm = rl.transpose() * d.mean_cam;
            let a = rl * g.orient_local.matrix();
            let mut p = [0.0; PARAMS];
            p[..3].copy_from_slice(dm.as_slice());
            for k in 0..3 {
                let col = a.column(k);
                p[3 + k] = 2.0 * g.scale[k] * (col.transpose() * d.cov_cam * col)[0];
            }
            p[6] = d.opacity;
            p[7..].copy_from_slice(d.color.as_slice());
            p
        })
        .collect();
    Ok((l.value, grads))
}

fn mean_loss_and_grad(
    model: &ToolModel<f64>,
    link_rot: &[Matrix3<f64>],
    views: &[FitView],
    cfg: &FitConfig,
) -> Result<(f64, Vec<f64>)> {
    let per_view: Vec<(f64, Vec<ParamGrad>)> = views
        .par_iter()
        .map(|v| view_gradient(model, link_rot, v, cfg))
        .collect::<Result<_>>()?;
    let n = views.len() as f64;
    let mut grad = vec![0.0; PARAMS * model.gaussians().len()];
    let mut loss = 0.0;
    for (l, g) in &per_view {
        loss += l / n;
        for (dst, src) in grad.chunks_exact_mut(PARAMS).zip(g) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s / n;
            }
        }
    }
    Ok((loss, grad))
}

/// Fits Gaussian means, scales, opacities and colors of `init` to views of
/// the tool at its neutral configuration by Adam on the mean combined loss.
/// After every step scales, opacities and colors are projected back into
/// their valid ranges. Returns the best model visited.
pub fn fit_canonical_model(init: &ToolModel<f64>, views: &[FitView], cfg: &FitConfig) -> Result<FitResult> {
    if views.len() < 2 {
        return Err(Error::InsufficientViews(views.len()));
    }
    cfg.validate()?;
    let link_rot: Vec<Matrix3<f64>> = forward_kinematics(init, &init.limits().neutral())?
        .iter()
        .map(|p| *p.rotation.matrix())
        .collect();
    let rates = [
        cfg.lr_mean,
        cfg.lr_mean,
        cfg.lr_mean,
        cfg.lr_scale,
        cfg.lr_scale,
        cfg.lr_scale,
        cfg.lr_opacity,
        cfg.lr_color,
        cfg.lr_color,
        cfg.lr_color,
    ];

    let mut model = init.clone();
    let mut adam = Adam::new(PARAMS * model.gaussians().len());
    let mut history = Vec::with_capacity(cfg.iters);
    let mut best: Option<(f64, ToolModel<f64>)> = None;
    for _ in 0..cfg.iters {
        let (loss, grad) = mean_loss_and_grad(&model, &link_rot, views, cfg)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: history.len(),
                detail: format!("canonical fit loss is {loss}"),
            });
        }
        history.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, model.clone()));
        }
        if loss <= cfg.tolerance {
            break;
        }
        let steps = adam.steps(&grad);
        let updated: Vec<GaussianPrimitive<f64>> = model
            .gaussians()
            .iter()
            .zip(steps.chunks_exact(PARAMS))
            .map(|(g, s)| {
                let d = |i: usize| s[i] * rates[i];
                GaussianPrimitive {
                    mean_local: g.mean_local - Vector3::new(d(0), d(1), d(2)),
                    scale: (g.scale - Vector3::new(d(3), d(4), d(5))).map(|x| x.max(cfg.min_scale)),
                    opacity: (g.opacity - d(6)).clamp(cfg.min_opacity, 1.0),
                    color: (g.color - Vector3::new(d(7), d(8), d(9))).map(|x| x.clamp(0.0, 1.0)),
                    ..g.clone()
                }
            })
            .collect();
        model = model.with_gaussians(updated)?;
    }
    let (last_loss, _) = mean_loss_and_grad(&model, &link_rot, views, cfg)?;
    let (final_loss, model) = match best {
        Some((b, m)) if b <= last_loss => (b, m),
        _ => (last_loss, model),
    };
    let initial_loss = history.first().copied().unwrap_or(final_loss);
    Ok(FitResult {
        model,
        initial_loss,
        final_loss,
        history,
    })
}
