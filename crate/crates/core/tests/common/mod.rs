#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use splatpose::estimator::{refine, RefinerConfig, Scene};
use splatpose::geometry::{Intrinsics, Pose, Rotation};
use splatpose::renderer::{render_model, Frame, LossConfig, Mask, RenderSettings};
use splatpose::tool_model::{default_tool_model, JointVector, ToolModel};

pub fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng)).normalize()
}

pub struct Fixture {
    pub model: ToolModel<f64>,
    pub k: Intrinsics<f64>,
    pub render: RenderSettings<f64>,
    pub loss: LossConfig<f64>,
}

impl Fixture {
    pub fn new(size: usize) -> Self {
        Self {
            model: default_tool_model(),
            k: Intrinsics::centered(size, size, 1.5).unwrap(),
            render: RenderSettings::default(),
            loss: LossConfig::default(),
        }
    }

    pub fn scene(&self) -> Scene<'_, f64> {
        Scene {
            model: &self.model,
            intrinsics: &self.k,
            render: &self.render,
            loss: &self.loss,
        }
    }

    pub fn target(&self, pose: &Pose<f64>, q: &JointVector<f64>) -> (Frame<f64>, Mask) {
        let out = render_model(&self.model, pose, q, &self.k, &self.render).unwrap();
        let mask = Mask::from_threshold(&out.alpha, self.k.width, self.k.height, 0.01);
        (out.image, mask)
    }

    /// Joint vector at least `margin` inside the limits with `q2 + q3 >= 2 margin`.
    pub fn random_joints(&self, rng: &mut ChaCha8Rng, margin: f64) -> JointVector<f64> {
        let l = self.model.limits();
        loop {
            let q = JointVector(Vector3::from_fn(|i, _| rng.random_range(l.min[i] + margin..l.max[i] - margin)));
            if q.q2() + q.q3() >= 2.0 * margin {
                return q;
            }
        }
    }

    /// Random orientation, tool origin within 5 mm of the optical axis at 9 to 11 cm.
    pub fn random_pose(&self, rng: &mut ChaCha8Rng) -> Pose<f64> {
        let rot = Rotation::from_axis_angle(&unit(rng), rng.random_range(0.0..std::f64::consts::PI));
        Pose::new(
            rot,
            Vector3::new(rng.random_range(-0.005..0.005), rng.random_range(-0.005..0.005), rng.random_range(0.09..0.11)),
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Recovery {
    pub t_err: f64,
    pub r_err: f64,
    pub q_err: f64,
    pub iters: usize,
}

impl Recovery {
    pub fn within(&self, t: f64, r: f64, q: f64) -> bool {
        self.t_err <= t && self.r_err <= r && self.q_err <= q
    }
}

/// Renders a random ground truth, starts 5 mm / 5 deg / 0.1 rad per joint
/// away from it and refines with `cfg`.
pub fn recovery_trial(fx: &Fixture, seed: u64, cfg: &RefinerConfig) -> Recovery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = fx.random_pose(&mut rng);
    let gq = fx.random_joints(&mut rng, 0.1);
    let (target, _) = fx.target(&gt, &gq);
    let init = Pose::new(
        gt.rotation.mul(&Rotation::from_axis_angle(&unit(&mut rng), 5f64.to_radians())),
        gt.translation + unit(&mut rng) * 0.005,
    );
    let iq = JointVector(gq.0 + Vector3::from_fn(|_, _| if rng.random_bool(0.5) { 0.1 } else { -0.1 }));
    let e = refine(&init, &iq, &target, &fx.scene(), cfg, cfg.max_iters_first_frame).unwrap();
    Recovery {
        t_err: (e.pose.translation - gt.translation).norm(),
        r_err: e.pose.rotation.angle_to(&gt.rotation),
        q_err: (e.q.0 - gq.0).abs().max(),
        iters: e.iters_used,
    }
}
