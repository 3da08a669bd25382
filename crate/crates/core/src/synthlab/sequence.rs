use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{create_dirs, look_at, model_centroid, sample_joints, write_view};
use super::{uniform, DatasetManifest, GroundTruthRecord, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation};
use crate::metrics_io::{save_trajectory, Trajectory, TrajectoryRecord};
use crate::renderer::{Frame, Mask, RenderSettings};
use crate::tool_model::{jaws_non_crossing, JointVector, ToolModel};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// Smooth bounded motion of the tool in front of a fixed camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSpec {
    pub n_frames: usize,
    /// Largest translation between consecutive frames, meters.
    pub translation_bound: f64,
    /// Largest rotation between consecutive frames, radians.
    pub rotation_bound: f64,
    /// Largest per-joint change between consecutive frames, radians.
    pub joint_velocity_bound: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub focal_ratio: f64,
    /// Distance from the camera to the tool centroid at the first frame.
    pub distance: f64,
    /// Exponential smoothing of the per-frame velocity.
    pub smoothing: f64,
    pub alpha_support: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            n_frames: 30,
            translation_bound: 0.002,
            rotation_bound: 2f64.to_radians(),
            joint_velocity_bound: 0.005,
            noise_std: 0.0,
            seed: 0,
            width: 128,
            height: 128,
            focal_ratio: 1.5,
            distance: 0.10,
            smoothing: 0.8,
            alpha_support: crate::renderer::DEFAULT_ALPHA_SUPPORT,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_frames == 0 {
            return bad("n_frames must be at least 1".into());
        }
        for (name, v) in [
            ("translation_bound", self.translation_bound),
            ("rotation_bound", self.rotation_bound),
            ("joint_velocity_bound", self.joint_velocity_bound),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_std) {
            return bad(format!("noise_std must lie in [0, 1], got {}", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad(format!("smoothing must lie in [0, 1), got {}", self.smoothing));
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return bad(format!("distance must be positive, got {}", self.distance));
        }
        Intrinsics::<f64>::centered(self.width, self.height, self.focal_ratio)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// Frames as stored on disk, with their masks.
    pub frames: Vec<(Frame<f64>, Mask)>,
    pub truth: Trajectory,
    pub intrinsics: Intrinsics<f64>,
    pub manifest: DatasetManifest,
}

/// Pull toward the start state, as a fraction of the offset per frame.
const RESTORING: f64 = 0.05;

fn clamp_norm(v: Vector3<f64>, bound: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > bound {
        v * (bound / n)
    } else {
        v
    }
}

fn unit_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

struct Walk {
    poses: Vec<Pose<f64>>,
    joints: Vec<JointVector<f64>>,
}

/// Velocities are convex combinations of bounded proposals, so every
/// per-frame step respects its bound without clipping the trajectory.
fn random_walk(model: &ToolModel<f64>, spec: &SequenceSpec, rng: &mut ChaCha8Rng) -> Result<Walk> {
    let limits = model.limits();
    let q0 = sample_joints(rng, limits)?;
    let az = uniform(rng, [0.0, std::f64::consts::TAU]);
    let el = uniform(rng, [-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4]);
    let target = model_centroid(model, &q0)?;
    let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let start = look_at(&(target + dir * spec.distance), &target, &Vector3::z())?;

    let s = spec.smoothing;
    let (bt, br, bq) = (spec.translation_bound, spec.rotation_bound, spec.joint_velocity_bound);
    let (mut vt, mut vr, mut vq) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    let mut pose = start;
    let mut q = q0;
    let mut poses = vec![pose];
    let mut joints = vec![q];
    for _ in 1..spec.n_frames {
        let ut = clamp_norm(unit_ball(rng) * bt + (start.translation - pose.translation) * RESTORING, bt);
        vt = vt * s + ut * (1.0 - s);
        let back = start.rotation.mul(&pose.rotation.inverse()).log();
        let ur = clamp_norm(unit_ball(rng) * br + back * RESTORING, br);
        vr = vr * s + ur * (1.0 - s);
        pose = Pose::new(Rotation::exp(&vr).mul(&pose.rotation), pose.translation + vt);

        let uq = Vector3::from_fn(|i, _| {
            let p = rng.random_range(-1.0..=1.0) * bq + (q0.0[i] - q.0[i]) * RESTORING;
            p.clamp(-bq, bq)
        });
        vq = vq * s + uq * (1.0 - s);
        let valid = |c: &JointVector<f64>| limits.contains(c) && jaws_non_crossing(c);
        let mut next = JointVector(q.0 + vq);
        if !valid(&next) {
            vq = -vq;
            next = JointVector(q.0 + vq);
            if !valid(&next) {
                vq = Vector3::zeros();
                next = q;
            }
        }
        q = next;
        poses.push(pose);
        joints.push(q);
    }
    Ok(Walk { poses, joints })
}

/// Renders a smooth random motion into `out_dir`, writing images, masks,
/// the manifest and the exact ground-truth trajectory.
pub fn generate_sequence(model: &ToolModel<f64>, spec: &SequenceSpec, out_dir: &Path) -> Result<SequenceOutput> {
    spec.validate()?;
    let k = Intrinsics::centered(spec.width, spec.height, spec.focal_ratio)?;
    let settings = RenderSettings::default();
    create_dirs(out_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let walk = random_walk(model, spec, &mut rng)?;

    let rendered: Vec<(GroundTruthRecord, Frame<f64>, Mask)> = (0..spec.n_frames)
        .into_par_iter()
        .map(|i| {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            noise_rng.set_stream(i as u64 + 1);
            write_view(
                model,
                &walk.poses[i],
                &walk.joints[i],
                &k,
                &settings,
                spec.noise_std,
                spec.alpha_support,
                &mut noise_rng,
                out_dir,
                i as u64,
                0,
                false,
            )
        })
        .collect::<Result<_>>()?;

    let truth = Trajectory::new(
        walk.poses
            .iter()
            .zip(&walk.joints)
            .enumerate()
            .map(|(i, (pose, q))| TrajectoryRecord {
                frame: i as u64,
                pose: *pose,
                q: *q,
                loss: None,
            })
            .collect(),
    )?;
    save_trajectory(&out_dir.join(GROUND_TRUTH_FILE), &truth)?;

    let mut records = Vec::with_capacity(rendered.len());
    let mut frames = Vec::with_capacity(rendered.len());
    for (r, f, m) in rendered {
        records.push(r);
        frames.push((f, m));
    }
    super::save_manifest(&out_dir.join(MANIFEST_FILE), &records)?;
    Ok(SequenceOutput {
        frames,
        truth,
        intrinsics: k,
        manifest: DatasetManifest {
            dir: out_dir.to_path_buf(),
            records,
        },
    })
}
