//! Articulated instrument model: kinematic chain, joint limits and the
//! Gaussian primitives rigidly attached to each link.

mod default;
mod file;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{skew, Pose, Rotation};
use crate::scalar::Real;

pub use default::{default_tool_model, default_tool_model_with_shaft, DEFAULT_SHAFT_LENGTH};
pub use file::{load_tool_model, save_tool_model, tool_model_from_toml, tool_model_to_toml};

/// Number of revolute joints: pitch plus two jaws.
pub const NUM_JOINTS: usize = 3;

/// Slack allowed when checking that a configuration lies within limits.
pub const JOINT_LIMIT_SLACK: f64 = 1e-9;

/// Joint configuration `[q1, q2, q3]`: pitch and the two jaw angles, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVector<T: Real>(pub Vector3<T>);

impl<T: Real> JointVector<T> {
    pub fn new(q1: T, q2: T, q3: T) -> Self {
        JointVector(Vector3::new(q1, q2, q3))
    }

    pub fn zeros() -> Self {
        JointVector(Vector3::zeros())
    }

    pub fn q1(&self) -> T {
        self.0.x
    }

    pub fn q2(&self) -> T {
        self.0.y
    }

    pub fn q3(&self) -> T {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<T> {
        &self.0
    }

    pub fn cast<U: Real>(&self) -> JointVector<U> {
        JointVector(self.0.map(|x| U::lit(x.as_f64())))
    }
}

/// Box limits on the joint vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits<T: Real> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

impl<T: Real> JointLimits<T> {
    pub fn new(min: Vector3<T>, max: Vector3<T>) -> Result<Self> {
        for i in 0..NUM_JOINTS {
            if !(min[i] <= max[i]) {
                return Err(Error::InvalidModel {
                    path: format!("limits[{i}]"),
                    msg: format!("q_min {} > q_max {}", min[i], max[i]),
                });
            }
        }
        Ok(JointLimits { min, max })
    }

    pub fn check(&self, q: &JointVector<T>) -> Result<()> {
        let slack = T::lit(JOINT_LIMIT_SLACK);
        for i in 0..NUM_JOINTS {
            let v = q.0[i];
            if !(v >= self.min[i] - slack && v <= self.max[i] + slack) {
                return Err(Error::JointOutOfRange {
                    joint: i + 1,
                    value: v.as_f64(),
                    min: self.min[i].as_f64(),
                    max: self.max[i].as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &JointVector<T>) -> bool {
        self.check(q).is_ok()
    }

    /// Neutral configuration: zero clamped into the limits.
    pub fn neutral(&self) -> JointVector<T> {
        clamp_joints(&JointVector::zeros(), self)
    }
}

/// Componentwise clamp of `q` into `[q_min, q_max]`.
pub fn clamp_joints<T: Real>(q: &JointVector<T>, limits: &JointLimits<T>) -> JointVector<T> {
    JointVector(Vector3::from_fn(|i, _| q.0[i].clamp(limits.min[i], limits.max[i])))
}

/// Jaws may not pass through each other: `q2 + q3 >= 0`.
pub fn jaws_non_crossing<T: Real>(q: &JointVector<T>) -> bool {
    q.q2() + q.q3() >= T::zero()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Fixed,
    /// Driven by `q[index]`.
    Revolute { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link<T: Real> {
    pub name: String,
    pub parent: Option<usize>,
    /// Transform from the parent link frame to this link's joint frame.
    pub offset: Pose<T>,
    /// Unit joint axis in the joint frame.
    pub axis: Vector3<T>,
    pub kind: JointKind,
}

/// A 3D Gaussian attached to a link.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive<T: Real> {
    pub link: usize,
    pub mean_local: Vector3<T>,
    /// Per-axis standard deviations, meters.
    pub scale: Vector3<T>,
    pub orient_local: Rotation<T>,
    pub opacity: T,
    pub color: Vector3<T>,
}

impl<T: Real> GaussianPrimitive<T> {
    fn validate(&self, n_links: usize, path: &str) -> Result<()> {
        let err = |msg: String| Error::InvalidModel {
            path: path.to_string(),
            msg,
        };
        if self.link >= n_links {
            return Err(err(format!("link {} does not exist", self.link)));
        }
        if self.mean_local.iter().any(|x| !x.is_finite()) {
            return Err(err("non-finite mean".into()));
        }
        if self.scale.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
            return Err(err(format!("scale must be positive, got {:?}", self.scale.as_slice())));
        }
        if !(self.opacity >= T::zero() && self.opacity <= T::one()) {
            return Err(err(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if self.color.iter().any(|c| !(*c >= T::zero() && *c <= T::one())) {
            return Err(err("color components must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Articulated tool: a link tree rooted at the end-effector base plus its Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolModel<T: Real> {
    links: Vec<Link<T>>,
    gaussians: Vec<GaussianPrimitive<T>>,
    limits: JointLimits<T>,
    shaft_length: T,
    /// `joint_link[j]` is the link driven by `q[j]`.
    joint_link: [usize; NUM_JOINTS],
}

impl<T: Real> ToolModel<T> {
    /// Validates the chain and every Gaussian.
    ///
    /// Links must be listed parents-first with link 0 as the unique root.
    pub fn new(
        links: Vec<Link<T>>,
        gaussians: Vec<GaussianPrimitive<T>>,
        limits: JointLimits<T>,
        shaft_length: T,
    ) -> Result<Self> {
        let err = |path: String, msg: String| Error::InvalidModel { path, msg };
        if links.is_empty() {
            return Err(err("links".into(), "model has no links".into()));
        }
        let mut joint_link = [usize::MAX; NUM_JOINTS];
        for (i, link) in links.iter().enumerate() {
            let path = format!("links[{i}]");
            match (i, link.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(err(path + ".parent", "root link cannot have a parent".into())),
                (_, None) => return Err(err(path + ".parent", "only link 0 may be the root".into())),
                (_, Some(p)) if p >= i => {
                    return Err(err(path + ".parent", format!("parent {p} must precede link {i}")))
                }
                _ => {}
            }
            if let JointKind::Revolute { index } = link.kind {
                if index >= NUM_JOINTS {
                    return Err(err(path + ".joint", format!("joint index {index} out of range")));
                }
                if joint_link[index] != usize::MAX {
                    return Err(err(path + ".joint", format!("joint q{} driven twice", index + 1)));
                }
                let n = link.axis.norm();
                if !((n - T::one()).abs() < T::lit(1e-6)) {
                    return Err(err(path + ".axis", format!("axis must be unit length, norm {n}")));
                }
                joint_link[index] = i;
            }
            if link.offset.translation.iter().any(|x| !x.is_finite()) {
                return Err(err(path + ".translation", "non-finite offset".into()));
            }
        }
        if let Some(j) = joint_link.iter().position(|l| *l == usize::MAX) {
            return Err(err("links".into(), format!("no revolute link drives q{}", j + 1)));
        }
        for (i, g) in gaussians.iter().enumerate() {
            g.validate(links.len(), &format!("gaussians[{i}]"))?;
        }
        if !(shaft_length >= T::zero()) {
            return Err(err("shaft_length".into(), "must be non-negative".into()));
        }
        Ok(ToolModel {
            links,
            gaussians,
            limits,
            shaft_length,
            joint_link,
        })
    }

    pub fn links(&self) -> &[Link<T>] {
        &self.links
    }

    pub fn gaussians(&self) -> &[GaussianPrimitive<T>] {
        &self.gaussians
    }

    pub fn limits(&self) -> &JointLimits<T> {
        &self.limits
    }

    pub fn shaft_length(&self) -> T {
        self.shaft_length
    }

    pub fn joint_link(&self, joint: usize) -> usize {
        self.joint_link[joint]
    }

    pub fn revolute_count(&self) -> usize {
        self.links
            .iter()
            .filter(|l| matches!(l.kind, JointKind::Revolute { .. }))
            .count()
    }

    /// Replaces the Gaussian set, re-validating it.
    pub fn with_gaussians(&self, gaussians: Vec<GaussianPrimitive<T>>) -> Result<Self> {
        for (i, g) in gaussians.iter().enumerate() {
            g.validate(self.links.len(), &format!("gaussians[{i}]"))?;
        }
        Ok(ToolModel {
            gaussians,
            ..self.clone()
        })
    }

    pub fn with_limits(&self, limits: JointLimits<T>) -> Self {
        ToolModel {
            limits,
            ..self.clone()
        }
    }

    /// True when `link` is `ancestor` or lies below it in the tree.
    pub fn is_descendant(&self, link: usize, ancestor: usize) -> bool {
        let mut cur = Some(link);
        while let Some(l) = cur {
            if l == ancestor {
                return true;
            }
            cur = self.links[l].parent;
        }
        false
    }

    pub fn cast<U: Real>(&self) -> ToolModel<U> {
        let links = self
            .links
            .iter()
            .map(|l| Link {
                name: l.name.clone(),
                parent: l.parent,
                offset: l.offset.cast(),
                axis: l.axis.map(|x| U::lit(x.as_f64())),
                kind: l.kind,
            })
            .collect();
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| GaussianPrimitive {
                link: g.link,
                mean_local: g.mean_local.map(|x| U::lit(x.as_f64())),
                scale: g.scale.map(|x| U::lit(x.as_f64())),
                orient_local: g.orient_local.cast(),
                opacity: U::lit(g.opacity.as_f64()),
                color: g.color.map(|x| U::lit(x.as_f64())),
            })
            .collect();
        ToolModel {
            links,
            gaussians,
            limits: JointLimits {
                min: self.limits.min.map(|x| U::lit(x.as_f64())),
                max: self.limits.max.map(|x| U::lit(x.as_f64())),
            },
            shaft_length: U::lit(self.shaft_length.as_f64()),
            joint_link: self.joint_link,
        }
    }
}

/// Link poses and joint axes in the end-effector base frame.
#[derive(Debug, Clone)]
pub struct Kinematics<T: Real> {
    pub link_poses: Vec<Pose<T>>,
    /// Joint axis in the base frame, one per `q` component.
    pub joint_axes: [Vector3<T>; NUM_JOINTS],
    /// A point on each joint axis, base frame.
    pub joint_pivots: [Vector3<T>; NUM_JOINTS],
}

fn kinematics<T: Real>(model: &ToolModel<T>, q: &JointVector<T>) -> Kinematics<T> {
    let mut link_poses: Vec<Pose<T>> = Vec::with_capacity(model.links.len());
    let mut joint_axes = [Vector3::zeros(); NUM_JOINTS];
    let mut joint_pivots = [Vector3::zeros(); NUM_JOINTS];
    for link in &model.links {
        let parent = link.parent.map(|p| link_poses[p]).unwrap_or_else(Pose::identity);
        let joint_frame = parent.compose(&link.offset);
        let pose = match link.kind {
            JointKind::Fixed => joint_frame,
            JointKind::Revolute { index } => {
                joint_axes[index] = joint_frame.rotation.rotate(&link.axis);
                joint_pivots[index] = joint_frame.translation;
                joint_frame.compose(&Pose::from_rotation(Rotation::from_axis_angle(
                    &link.axis,
                    q.0[index],
                )))
            }
        };
        link_poses.push(pose);
    }
    Kinematics {
        link_poses,
        joint_axes,
        joint_pivots,
    }
}

/// Link frames in the end-effector base frame for configuration `q`.
pub fn forward_kinematics<T: Real>(model: &ToolModel<T>, q: &JointVector<T>) -> Result<Vec<Pose<T>>> {
    model.limits.check(q)?;
    Ok(kinematics(model, q).link_poses)
}

/// Full kinematic state including joint axes, for Jacobian computation.
pub fn forward_kinematics_full<T: Real>(model: &ToolModel<T>, q: &JointVector<T>) -> Result<Kinematics<T>> {
    model.limits.check(q)?;
    Ok(kinematics(model, q))
}

/// A Gaussian placed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosedGaussian<T: Real> {
    pub mean_cam: Vector3<T>,
    pub cov_cam: Matrix3<T>,
    pub opacity: T,
    pub color: Vector3<T>,
}

impl<T: Real> PosedGaussian<T> {
    /// Applies a rigid transform to mean and covariance.
    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        let r = pose.rotation.matrix();
        PosedGaussian {
            mean_cam: pose.transform_point(&self.mean_cam),
            cov_cam: r * self.cov_cam * r.transpose(),
            ..*self
        }
    }
}

/// Derivatives of one posed Gaussian with respect to the pose tangent
/// `(omega, delta_t)` and the joint vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianJacobian<T: Real> {
    pub d_mean_d_omega: Matrix3<T>,
    pub d_mean_d_t: Matrix3<T>,
    /// Column `j` is `d mean_cam / d q_j`.
    pub d_mean_d_q: Matrix3<T>,
    pub d_cov_d_omega: [Matrix3<T>; 3],
    pub d_cov_d_q: [Matrix3<T>; NUM_JOINTS],
}

struct BaseFrameGaussian<T: Real> {
    mean: Vector3<T>,
    /// Covariance in the end-effector base frame.
    cov: Matrix3<T>,
}

fn base_frame_gaussian<T: Real>(g: &GaussianPrimitive<T>, link_pose: &Pose<T>) -> BaseFrameGaussian<T> {
    let r = link_pose.rotation.matrix() * g.orient_local.matrix();
    let m = r * Matrix3::from_diagonal(&g.scale);
    BaseFrameGaussian {
        mean: link_pose.transform_point(&g.mean_local),
        cov: m * m.transpose(),
    }
}

fn to_camera<T: Real>(b: &BaseFrameGaussian<T>, g: &GaussianPrimitive<T>, pose: &Pose<T>) -> PosedGaussian<T> {
    let r = pose.rotation.matrix();
    let m = r * b.cov;
    // Written as (R C) R^T; C is symmetric so (R C R^T) is symmetric up to rounding.
    let mut cov = m * r.transpose();
    let sym = (cov + cov.transpose()) * T::lit(0.5);
    cov = sym;
    PosedGaussian {
        mean_cam: pose.transform_point(&b.mean),
        cov_cam: cov,
        opacity: g.opacity,
        color: g.color,
    }
}

/// Places every Gaussian of `model` in the camera frame for tool pose `pose`
/// (end-effector to camera) and joint configuration `q`.
pub fn pose_gaussians<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
) -> Result<Vec<PosedGaussian<T>>> {
    let kin = forward_kinematics_full(model, q)?;
    Ok(model
        .gaussians
        .iter()
        .map(|g| to_camera(&base_frame_gaussian(g, &kin.link_poses[g.link]), g, pose))
        .collect())
}

fn commutator<T: Real>(a: &Vector3<T>, m: &Matrix3<T>) -> Matrix3<T> {
    let k = skew(a);
    k * m - m * k
}

/// Posed Gaussians together with their analytic Jacobians.
pub fn pose_gaussians_with_jacobians<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
) -> Result<(Vec<PosedGaussian<T>>, Vec<GaussianJacobian<T>>)> {
    let kin = forward_kinematics_full(model, q)?;
    let r = pose.rotation.matrix();
    let rt = r.transpose();
    let mut posed = Vec::with_capacity(model.gaussians.len());
    let mut jacs = Vec::with_capacity(model.gaussians.len());
    for g in &model.gaussians {
        let b = base_frame_gaussian(g, &kin.link_poses[g.link]);
        posed.push(to_camera(&b, g, pose));

        let d_mean_d_omega = -(r * skew(&b.mean));
        let mut d_mean_d_q = Matrix3::zeros();
        let mut d_cov_d_q = [Matrix3::zeros(); NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            if model.is_descendant(g.link, model.joint_link[j]) {
                let a = &kin.joint_axes[j];
                d_mean_d_q.set_column(j, &(r * a.cross(&(b.mean - kin.joint_pivots[j]))));
                d_cov_d_q[j] = r * commutator(a, &b.cov) * rt;
            }
        }
        let d_cov_d_omega = [0, 1, 2].map(|k| r * commutator(&Vector3::ith(k, T::one()), &b.cov) * rt);
        jacs.push(GaussianJacobian {
            d_mean_d_omega,
            d_mean_d_t: Matrix3::identity(),
            d_mean_d_q,
            d_cov_d_omega,
            d_cov_d_q,
        });
    }
    Ok((posed, jacs))
}

/// Analytic Jacobians of every posed Gaussian.
pub fn jacobian_gaussians<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
) -> Result<Vec<GaussianJacobian<T>>> {
    pose_gaussians_with_jacobians(model, pose, q).map(|(_, j)| j)
}
