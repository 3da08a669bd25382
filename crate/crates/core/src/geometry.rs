//! Rigid-body math, pinhole projection and tangent-space rotation updates.
//!
//! Conventions: a [`Pose`] maps points expressed in a child frame into its
//! parent frame, `x_parent = R * x_child + t`. The pose optimized by the
//! estimator maps end-effector coordinates into the camera frame. Rotation
//! perturbations act on the right, `R * exp([omega]x)`.

use nalgebra::{Matrix2x3, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Depth below which a point counts as behind the camera.
pub const DEFAULT_Z_MIN: f64 = 1e-4;

/// Tolerance used when validating orthonormality: `1e-9` in double precision,
/// looser in single precision where `1e-9` is below machine epsilon.
pub fn rotation_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(1000.0);
    eps.max(T::lit(1e-9))
}

/// Skew-symmetric matrix `[v]x` with `[v]x * w = v x w`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// A 3x3 rotation matrix (member of SO(3)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T: Real>(Matrix3<T>);

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and a positive determinant.
    pub fn from_matrix(m: Matrix3<T>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let tol = rotation_tolerance::<T>();
        let ortho = (m * m.transpose() - Matrix3::identity()).norm();
        if ortho > tol {
            return Err(Error::InvalidRotation(format!(
                "|R R^T - I|_F = {ortho} exceeds {tol}"
            )));
        }
        let det = m.determinant();
        if (det - T::one()).abs() > tol {
            return Err(Error::InvalidRotation(format!("det(R) = {det}")));
        }
        Ok(Rotation(m))
    }

    /// Nearest rotation in Frobenius norm (orthogonal polar factor).
    pub fn nearest(m: &Matrix3<T>) -> Self {
        let svd = m.svd(true, true);
        let mut u = svd.u.expect("svd computed u");
        let v_t = svd.v_t.expect("svd computed v_t");
        let mut r = u * v_t;
        if r.determinant() < T::zero() {
            let mut last = u.column_mut(2);
            last.neg_mut();
            r = u * v_t;
        }
        Rotation(r)
    }

    /// Rodrigues' formula for `exp([omega]x)`.
    pub fn exp(omega: &Vector3<T>) -> Self {
        let theta2 = omega.norm_squared();
        let k = skew(omega);
        let k2 = k * k;
        let (a, b) = if theta2 < T::lit(1e-12) {
            // Taylor expansions of sin(t)/t and (1 - cos t)/t^2.
            (
                T::one() - theta2 / T::lit(6.0),
                T::lit(0.5) - theta2 / T::lit(24.0),
            )
        } else {
            let theta = theta2.sqrt();
            (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
        };
        Rotation(Matrix3::identity() + k * a + k2 * b)
    }

    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let n = axis.norm();
        if n == T::zero() {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Rotation about the z axis.
    pub fn rz(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let z = T::zero();
        Rotation(Matrix3::new(c, -s, z, s, c, z, z, z, T::one()))
    }

    /// Axis-angle vector of this rotation (inverse of [`Rotation::exp`]).
    pub fn log(&self) -> Vector3<T> {
        let r = &self.0;
        let angle = self.angle();
        let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        if angle < T::lit(1e-7) {
            return w * T::lit(0.5);
        }
        if T::pi() - angle < T::lit(1e-4) {
            // Near pi: recover the axis from the symmetric part.
            let b = (r + Matrix3::identity()) * T::lit(0.5);
            let mut col = 0;
            for i in 1..3 {
                if b[(i, i)] > b[(col, col)] {
                    col = i;
                }
            }
            let mut axis = b.column(col).into_owned();
            axis.normalize_mut();
            if axis.dot(&w) < T::zero() {
                axis = -axis;
            }
            return axis * angle;
        }
        w * (angle / (T::lit(2.0) * angle.sin()))
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> T {
        let c = (self.0.trace() - T::one()) * T::lit(0.5);
        c.clamp(-T::one(), T::one()).acos()
    }

    /// Geodesic distance to `other`, in radians.
    pub fn angle_to(&self, other: &Rotation<T>) -> T {
        Rotation(self.0.transpose() * other.0).angle()
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn mul(&self, other: &Rotation<T>) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0 * v
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        Rotation(self.0.map(|x| U::lit(x.as_f64())))
    }
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Rotation<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Rotation<T>, translation: Vector3<T>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation<T>) -> Self {
        Pose::new(r, Vector3::zeros())
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose<T> {
        let r_inv = self.rotation.inverse();
        Pose {
            translation: -r_inv.rotate(&self.translation),
            rotation: r_inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major `[R | t]`, 12 values.
    pub fn to_row_major(&self) -> [T; 12] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    /// Inverse of [`Pose::to_row_major`]; validates the rotation block.
    pub fn from_row_major(v: &[T; 12]) -> Result<Self> {
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let rotation = Rotation::from_matrix(r)?;
        let translation = Vector3::new(v[3], v[7], v[11]);
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite translation".into()));
        }
        Ok(Pose::new(rotation, translation))
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::new(
            self.rotation.cast(),
            self.translation.map(|x| U::lit(x.as_f64())),
        )
    }
}

pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

pub fn invert<T: Real>(p: &Pose<T>) -> Pose<T> {
    p.inverse()
}

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square image with focal length `focal_ratio * width` and centered principal point.
    pub fn centered(width: usize, height: usize, focal_ratio: f64) -> Result<Self> {
        let f = T::lit(focal_ratio * width as f64);
        Self::new(
            f,
            f,
            T::lit(width as f64 * 0.5),
            T::lit(height as f64 * 0.5),
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Camera-frame point at the given depth that projects to pixel `(u, v)`.
    pub fn back_project(&self, u: T, v: T, depth: T) -> Vector3<T> {
        Vector3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// `[fx, fy, cx, cy, width, height]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.fx.as_f64(),
            self.fy.as_f64(),
            self.cx.as_f64(),
            self.cy.as_f64(),
            self.width as f64,
            self.height as f64,
        ]
    }

    pub fn from_array(a: &[f64; 6]) -> Result<Self> {
        let dim = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidIntrinsics(format!("bad image dimension {x}")))
            }
        };
        Self::new(
            T::lit(a[0]),
            T::lit(a[1]),
            T::lit(a[2]),
            T::lit(a[3]),
            dim(a[4])?,
            dim(a[5])?,
        )
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        Intrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

/// Tangent-space pose increment: rotation in so(3) coordinates and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentUpdate<T: Real> {
    pub omega: Vector3<T>,
    pub delta_t: Vector3<T>,
}

impl<T: Real> TangentUpdate<T> {
    pub fn new(omega: Vector3<T>, delta_t: Vector3<T>) -> Result<Self> {
        if omega.iter().chain(delta_t.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite tangent update".into()));
        }
        Ok(TangentUpdate { omega, delta_t })
    }

    pub fn zero() -> Self {
        TangentUpdate {
            omega: Vector3::zeros(),
            delta_t: Vector3::zeros(),
        }
    }
}

fn check_depth<T: Real>(z: T, z_min: T) -> Result<()> {
    if z > z_min {
        Ok(())
    } else {
        Err(Error::BehindCamera {
            z: z.as_f64(),
            z_min: z_min.as_f64(),
        })
    }
}

/// Pinhole projection `u = fx x/z + cx`, `v = fy y/z + cy`.
pub fn project<T: Real>(p: &Vector3<T>, k: &Intrinsics<T>, z_min: T) -> Result<Vector2<T>> {
    check_depth(p.z, z_min)?;
    let inv_z = T::one() / p.z;
    Ok(Vector2::new(
        k.fx * p.x * inv_z + k.cx,
        k.fy * p.y * inv_z + k.cy,
    ))
}

/// Jacobian of [`project`] with respect to the camera-frame point.
pub fn projection_jacobian<T: Real>(
    p: &Vector3<T>,
    k: &Intrinsics<T>,
    z_min: T,
) -> Result<Matrix2x3<T>> {
    check_depth(p.z, z_min)?;
    let inv_z = T::one() / p.z;
    let inv_z2 = inv_z * inv_z;
    let z = T::zero();
    Ok(Matrix2x3::new(
        k.fx * inv_z,
        z,
        -k.fx * p.x * inv_z2,
        z,
        k.fy * inv_z,
        -k.fy * p.y * inv_z2,
    ))
}

/// `R * (I + alpha [omega]x)` projected back onto SO(3).
///
/// A zero step returns `r` bit-for-bit.
pub fn apply_rotation_update<T: Real>(r: &Rotation<T>, omega: &Vector3<T>, alpha: T) -> Rotation<T> {
    let step = omega * alpha;
    if step.iter().all(|x| *x == T::zero()) {
        return *r;
    }
    let m = r.matrix() * (Matrix3::identity() + skew(&step));
    Rotation::nearest(&m)
}

/// Componentwise clamp into `[lo, hi]`.
pub fn clamp_vector<T: Real>(v: &Vector3<T>, lo: T, hi: T) -> Vector3<T> {
    debug_assert!(lo <= hi);
    v.map(|x| x.clamp(lo, hi))
}
