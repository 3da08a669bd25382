//! Built-in analytic needle-driver stand-in.
//!
//! Frame layout (end-effector base frame, meters): the shaft stub runs along
//! -x ending at the pitch joint at the origin; the pitch link rotates about +y
//! and carries the jaw pivot at x = 9 mm; the two jaws rotate about +z and -z
//! respectively, so equal jaw angles open them symmetrically about the x-z
//! plane.

use nalgebra::Vector3;
use std::f64::consts::{FRAC_PI_2, PI};

use super::{GaussianPrimitive, JointKind, JointLimits, Link, ToolModel};
use crate::geometry::{Pose, Rotation};
use crate::scalar::Real;

pub const DEFAULT_SHAFT_LENGTH: f64 = 0.02;

const MM: f64 = 1e-3;
const JAW_PIVOT_X: f64 = 9.0 * MM;

fn v<T: Real>(x: f64, y: f64, z: f64) -> Vector3<T> {
    Vector3::new(T::lit(x), T::lit(y), T::lit(z))
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Rings of Gaussians on a cylinder along x. The color tint varies with the
/// angle around the axis so that roll about the shaft stays observable.
fn cylinder<T: Real>(
    link: usize,
    x_range: (f64, f64),
    rings: usize,
    radius: f64,
    per_ring: usize,
    base: [f64; 3],
    scale: [f64; 3],
    out: &mut Vec<GaussianPrimitive<T>>,
) {
    for i in 0..rings {
        let x = if rings == 1 {
            0.5 * (x_range.0 + x_range.1)
        } else {
            x_range.0 + (x_range.1 - x_range.0) * i as f64 / (rings - 1) as f64
        };
        let stripe = if i % 2 == 0 { 0.08 } else { -0.08 };
        for k in 0..per_ring {
            let phi = 2.0 * PI * k as f64 / per_ring as f64;
            let (s, c) = phi.sin_cos();
            let color = [
                clamp01(base[0] + 0.22 * c + stripe),
                clamp01(base[1] + 0.22 * s + stripe),
                clamp01(base[2] - 0.22 * c + stripe),
            ];
            out.push(GaussianPrimitive {
                link,
                mean_local: v(x, radius * c, radius * s),
                scale: v(scale[0], scale[1], scale[2]),
                // Local y (the thin axis) points radially outward.
                orient_local: Rotation::from_axis_angle(&v(1.0, 0.0, 0.0), T::lit(phi)),
                opacity: T::lit(0.85),
                color: v(color[0], color[1], color[2]),
            });
        }
    }
}

fn jaw<T: Real>(link: usize, side: f64, base: [f64; 3], out: &mut Vec<GaussianPrimitive<T>>) {
    let n = 5;
    for i in 0..n {
        let x = (1.0 + 2.0 * i as f64) * MM;
        // Jaws taper toward the tip.
        let width = 0.9 - 0.08 * i as f64;
        for (j, z) in [-0.6 * MM, 0.6 * MM].into_iter().enumerate() {
            let shade = if j == 0 { 0.0 } else { -0.15 };
            out.push(GaussianPrimitive {
                link,
                mean_local: v(x, side * 0.7 * MM, z),
                scale: v(1.1 * MM, 0.5 * MM * width, 0.6 * MM),
                orient_local: Rotation::identity(),
                opacity: T::lit(0.9),
                color: v(
                    clamp01(base[0] + shade + 0.04 * i as f64),
                    clamp01(base[1] + shade),
                    clamp01(base[2] + shade - 0.04 * i as f64),
                ),
            });
        }
    }
}

/// Default model with a custom shaft stub length.
pub fn default_tool_model_with_shaft<T: Real>(shaft_length: f64) -> ToolModel<T> {
    let links = vec![
        Link {
            name: "shaft".into(),
            parent: None,
            offset: Pose::identity(),
            axis: v(1.0, 0.0, 0.0),
            kind: JointKind::Fixed,
        },
        Link {
            name: "pitch".into(),
            parent: Some(0),
            offset: Pose::identity(),
            axis: v(0.0, 1.0, 0.0),
            kind: JointKind::Revolute { index: 0 },
        },
        Link {
            name: "jaw1".into(),
            parent: Some(1),
            offset: Pose::from_translation(v(JAW_PIVOT_X, 0.0, 0.0)),
            axis: v(0.0, 0.0, 1.0),
            kind: JointKind::Revolute { index: 1 },
        },
        Link {
            name: "jaw2".into(),
            parent: Some(1),
            offset: Pose::from_translation(v(JAW_PIVOT_X, 0.0, 0.0)),
            axis: v(0.0, 0.0, -1.0),
            kind: JointKind::Revolute { index: 2 },
        },
    ];

    let mut gaussians = Vec::new();
    let shaft_end = -1.0 * MM;
    let shaft_start = -shaft_length.max(2.0 * MM);
    let shaft_rings = (((shaft_end - shaft_start) / (2.0 * MM)).round() as usize + 1).max(1);
    cylinder(
        0,
        (shaft_start, shaft_end),
        shaft_rings,
        1.8 * MM,
        6,
        [0.45, 0.45, 0.5],
        [1.2 * MM, 0.6 * MM, 1.0 * MM],
        &mut gaussians,
    );
    cylinder(
        1,
        (1.0 * MM, 8.0 * MM),
        5,
        1.4 * MM,
        6,
        [0.75, 0.72, 0.62],
        [1.0 * MM, 0.5 * MM, 0.8 * MM],
        &mut gaussians,
    );
    jaw(2, 1.0, [0.85, 0.55, 0.3], &mut gaussians);
    jaw(3, -1.0, [0.3, 0.55, 0.85], &mut gaussians);

    let limits = JointLimits::new(v(-FRAC_PI_2, -0.35, -0.35), v(FRAC_PI_2, 1.4, 1.4))
        .expect("default limits are ordered");
    ToolModel::new(links, gaussians, limits, T::lit(shaft_length)).expect("default model is valid")
}

/// Built-in needle-driver stand-in: shaft stub, pitch link and two jaws.
pub fn default_tool_model<T: Real>() -> ToolModel<T> {
    default_tool_model_with_shaft(DEFAULT_SHAFT_LENGTH)
}
