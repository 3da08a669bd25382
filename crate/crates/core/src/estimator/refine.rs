use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{FrameEstimate, Scene};
use crate::error::{Error, Result};
use crate::geometry::{apply_rotation_update, clamp_vector, Pose};
use crate::renderer::{evaluate, Frame, PoseGradient};
use crate::scalar::Real;
use crate::tool_model::{clamp_joints, JointVector};

/// How a raw gradient is turned into a parameter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Plain scaled gradient: `x -= lr * g`.
    Gradient,
    /// Bias-corrected first/second moment normalized step, `x -= lr * m / sqrt(v)`.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinerConfig {
    pub lr_rot: f64,
    pub lr_trans: f64,
    /// Symmetric clamp applied to the raw translation gradient, meters.
    pub trans_clamp: f64,
    pub lr_joint: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_delta: f64,
    pub early_stop_window: usize,
    pub max_iters_first_frame: usize,
    pub max_iters_tracking: usize,
    /// How each block's gradient becomes a step before scaling by its rate.
    /// Adam normalizes the step to roughly the rate per iteration.
    pub rotation_step: StepRule,
    pub translation_step: StepRule,
    pub joint_step: StepRule,
    /// Restore the configured learning rates at every tracked frame.
    pub reset_rates_per_frame: bool,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            lr_rot: 0.3,
            lr_trans: 3e-4,
            trans_clamp: 0.02,
            lr_joint: 1e-3,
            scheduler_factor: 0.5,
            scheduler_patience: 20,
            early_stop_delta: 1e-7,
            early_stop_window: 10,
            max_iters_first_frame: 300,
            max_iters_tracking: 10,
            rotation_step: StepRule::Gradient,
            translation_step: StepRule::Gradient,
            joint_step: StepRule::Gradient,
            reset_rates_per_frame: true,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        for (name, lr) in [("lr_rot", self.lr_rot), ("lr_trans", self.lr_trans), ("lr_joint", self.lr_joint)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(&format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return bad("scheduler_factor must lie in (0, 1)");
        }
        if self.scheduler_patience == 0 || self.early_stop_window == 0 {
            return bad("scheduler_patience and early_stop_window must be at least 1");
        }
        if !(self.trans_clamp > 0.0 && self.trans_clamp.is_finite()) {
            return bad("trans_clamp must be positive");
        }
        if !(self.early_stop_delta >= 0.0) {
            return bad("early_stop_delta must be non-negative");
        }
        if self.max_iters_first_frame == 0 || self.max_iters_tracking == 0 {
            return bad("iteration caps must be at least 1");
        }
        Ok(())
    }

    pub fn rates(&self) -> LearningRates {
        LearningRates {
            rot: self.lr_rot,
            trans: self.lr_trans,
            joint: self.lr_joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub rot: f64,
    pub trans: f64,
    pub joint: f64,
}

impl LearningRates {
    fn scale(&mut self, factor: f64) {
        self.rot *= factor;
        self.trans *= factor;
        self.joint *= factor;
    }
}

/// Multiplies every learning rate by `factor` once the best loss has failed
/// to improve for `patience` consecutive iterations, then starts counting
/// again.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    /// Records `loss`; returns true when the rates were reduced.
    pub fn step(&mut self, loss: f64, rates: &mut LearningRates) -> bool {
        if loss < self.best {
            self.best = loss;
            self.bad = 0;
            return false;
        }
        self.bad += 1;
        if self.bad >= self.patience {
            rates.scale(self.factor);
            self.bad = 0;
            return true;
        }
        false
    }

    pub fn non_improving(&self) -> usize {
        self.bad
    }
}

/// Fires when `|L_k - L_{k - window}| < delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    delta: f64,
    window: usize,
    history: Vec<f64>,
}

impl EarlyStopping {
    pub fn new(delta: f64, window: usize) -> Self {
        Self {
            delta,
            window,
            history: Vec::new(),
        }
    }

    pub fn step(&mut self, loss: f64) -> bool {
        self.history.push(loss);
        let n = self.history.len();
        n > self.window && (self.history[n - 1] - self.history[n - 1 - self.window]).abs() < self.delta
    }
}

#[derive(Debug, Clone)]
struct Moments<T: Real> {
    m: Vector3<T>,
    v: Vector3<T>,
}

impl<T: Real> Moments<T> {
    fn new() -> Self {
        Self {
            m: Vector3::zeros(),
            v: Vector3::zeros(),
        }
    }

    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn direction(&mut self, g: &Vector3<T>, rule: StepRule, t: i32) -> Vector3<T> {
        match rule {
            StepRule::Gradient => *g,
            StepRule::Adam => {
                let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
                self.m = self.m * b1 + g * (T::one() - b1);
                self.v = self.v * b2 + g.component_mul(g) * (T::one() - b2);
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                self.m.zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + T::lit(Self::EPS)))
            }
        }
    }
}

/// Refines `(pose, q)` against `target` starting from the configured rates.
pub fn refine<T: Real>(
    pose: &Pose<T>,
    q: &JointVector<T>,
    target: &Frame<T>,
    scene: &Scene<T>,
    cfg: &RefinerConfig,
    max_iters: usize,
) -> Result<FrameEstimate<T>> {
    refine_with_rates(pose, q, target, scene, cfg, max_iters, cfg.rates())
}

/// Render, compare, back-propagate and step, for at most `max_iters`
/// evaluations. Returns the lowest-loss iterate seen.
pub fn refine_with_rates<T: Real>(
    pose: &Pose<T>,
    q: &JointVector<T>,
    target: &Frame<T>,
    scene: &Scene<T>,
    cfg: &RefinerConfig,
    max_iters: usize,
    rates: LearningRates,
) -> Result<FrameEstimate<T>> {
    refine_observed(pose, q, target, scene, cfg, max_iters, rates, |_| {})
}

/// State seen by a [`refine_observed`] callback at one evaluation.
#[derive(Debug, Clone)]
pub struct IterationRecord<T: Real> {
    pub iteration: usize,
    /// Iterate that was evaluated.
    pub pose: Pose<T>,
    pub q: JointVector<T>,
    pub loss: T,
    pub grad: PoseGradient<T>,
    /// Translation gradient after clamping.
    pub clamped_t: Vector3<T>,
    /// Rates used for the step that follows this evaluation.
    pub rates: LearningRates,
}

/// [`refine_with_rates`] that reports every evaluation to `observe`.
#[allow(clippy::too_many_arguments)]
pub fn refine_observed<T: Real>(
    pose: &Pose<T>,
    q: &JointVector<T>,
    target: &Frame<T>,
    scene: &Scene<T>,
    cfg: &RefinerConfig,
    max_iters: usize,
    mut rates: LearningRates,
    mut observe: impl FnMut(&IterationRecord<T>),
) -> Result<FrameEstimate<T>> {
    cfg.validate()?;
    if max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    let limits = scene.model.limits();
    limits.check(q)?;
    let clamp = T::lit(cfg.trans_clamp);
    let mut scheduler = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut stopper = EarlyStopping::new(cfg.early_stop_delta, cfg.early_stop_window);
    let (mut m_rot, mut m_trans, mut m_joint) = (Moments::new(), Moments::new(), Moments::new());
    let (mut pose, mut q) = (*pose, *q);
    let mut best: Option<(T, Pose<T>, JointVector<T>)> = None;
    let mut history = Vec::with_capacity(max_iters);
    let mut stopped_early = false;
    for it in 0..max_iters {
        let e = evaluate(scene.model, &pose, &q, target, scene.intrinsics, scene.render, scene.loss)?;
        check_finite(it, e.loss, &e.grad)?;
        history.push(e.loss);
        log::trace!(
            "iter {it}: loss {} rates {:.3e} {:.3e} {:.3e}",
            e.loss,
            rates.rot,
            rates.trans,
            rates.joint
        );
        if best.as_ref().is_none_or(|b| e.loss < b.0) {
            best = Some((e.loss, pose, q));
        }
        let loss = e.loss.as_f64();
        if stopper.step(loss) {
            stopped_early = true;
            break;
        }
        if it + 1 == max_iters {
            break;
        }
        let t = (it + 1) as i32;
        let g_t = clamp_vector(&e.grad.t, -clamp, clamp);
        observe(&IterationRecord {
            iteration: it,
            pose,
            q,
            loss: e.loss,
            grad: e.grad,
            clamped_t: g_t,
            rates,
        });
        let d_rot = m_rot.direction(&e.grad.omega, cfg.rotation_step, t);
        let d_trans = m_trans.direction(&g_t, cfg.translation_step, t);
        let d_joint = m_joint.direction(&e.grad.q, cfg.joint_step, t);
        pose.rotation = apply_rotation_update(&pose.rotation, &-d_rot, T::lit(rates.rot));
        pose.translation -= d_trans * T::lit(rates.trans);
        q = clamp_joints(&JointVector(q.0 - d_joint * T::lit(rates.joint)), limits);
        scheduler.step(loss, &mut rates);
    }
    let (final_loss, pose, q) = best.expect("at least one evaluation");
    Ok(FrameEstimate {
        pose,
        q,
        final_loss,
        iters_used: history.len(),
        stopped_early,
        rates,
        history,
        failed: false,
    })
}

fn check_finite<T: Real>(iteration: usize, loss: T, grad: &PoseGradient<T>) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            detail: format!("loss = {loss}"),
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            detail: "non-finite gradient".into(),
        });
    }
    Ok(())
}
