//! TOML representation of a [`ToolModel`].
//!
//! ```toml
//! shaft_length = 0.02
//!
//! [limits]
//! min = [-1.5708, -0.35, -0.35]
//! max = [1.5708, 1.4, 1.4]
//!
//! [[links]]
//! name = "shaft"
//!
//! [[links]]
//! name = "pitch"
//! parent = "shaft"
//! joint = "revolute"
//! joint_index = 0
//! axis = [0.0, 1.0, 0.0]
//!
//! [[gaussians]]
//! link = "pitch"
//! mean = [0.002, 0.0, 0.0]
//! scale = [0.001, 0.001, 0.001]
//! opacity = 0.9
//! color = [0.8, 0.8, 0.8]
//! ```
//!
//! Offsets and Gaussian orientations are given as translation plus axis-angle.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GaussianPrimitive, JointKind, JointLimits, Link, ToolModel};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Rotation};
use crate::scalar::Real;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    shaft_length: f64,
    limits: LimitsFile,
    links: Vec<LinkFile>,
    #[serde(default)]
    gaussians: Vec<GaussianFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum JointKindFile {
    #[default]
    Fixed,
    Revolute,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default)]
    axis_angle: [f64; 3],
    #[serde(default)]
    joint: JointKindFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianFile {
    link: String,
    mean: [f64; 3],
    scale: [f64; 3],
    #[serde(default)]
    axis_angle: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

fn vec3<T: Real>(a: [f64; 3]) -> Vector3<T> {
    Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]))
}

fn arr<T: Real>(v: &Vector3<T>) -> [f64; 3] {
    [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()]
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a model; errors name the offending entry.
pub fn tool_model_from_toml<T: Real>(text: &str, origin: &Path) -> Result<ToolModel<T>> {
    let file: ModelFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::parse(origin, line, e.message().to_string())
    })?;

    let invalid = |path: String, msg: String| Error::InvalidModel { path, msg };
    let mut links: Vec<Link<T>> = Vec::with_capacity(file.links.len());
    for (i, l) in file.links.iter().enumerate() {
        let path = format!("links[{i}]");
        if links.iter().any(|x| x.name == l.name) {
            return Err(invalid(path + ".name", format!("duplicate link name {:?}", l.name)));
        }
        let parent = match &l.parent {
            None => None,
            Some(name) => Some(
                links
                    .iter()
                    .position(|x| &x.name == name)
                    .ok_or_else(|| invalid(format!("{path}.parent"), format!("unknown or later link {name:?}")))?,
            ),
        };
        let kind = match (l.joint, l.joint_index) {
            (JointKindFile::Fixed, None) => JointKind::Fixed,
            (JointKindFile::Fixed, Some(_)) => {
                return Err(invalid(path + ".joint_index", "fixed link cannot drive a joint".into()))
            }
            (JointKindFile::Revolute, Some(index)) => JointKind::Revolute { index },
            (JointKindFile::Revolute, None) => {
                return Err(invalid(path + ".joint_index", "revolute link needs joint_index".into()))
            }
        };
        let axis = match (kind, l.axis) {
            (JointKind::Revolute { .. }, None) => {
                return Err(invalid(path + ".axis", "revolute link needs an axis".into()))
            }
            (_, Some(a)) => vec3(a),
            (_, None) => Vector3::x(),
        };
        links.push(Link {
            name: l.name.clone(),
            parent,
            offset: Pose::new(Rotation::exp(&vec3(l.axis_angle)), vec3(l.translation)),
            axis,
            kind,
        });
    }

    let mut gaussians = Vec::with_capacity(file.gaussians.len());
    for (i, g) in file.gaussians.iter().enumerate() {
        let link = links.iter().position(|x| x.name == g.link).ok_or_else(|| {
            invalid(format!("gaussians[{i}].link"), format!("unknown link {:?}", g.link))
        })?;
        gaussians.push(GaussianPrimitive {
            link,
            mean_local: vec3(g.mean),
            scale: vec3(g.scale),
            orient_local: Rotation::exp(&vec3(g.axis_angle)),
            opacity: T::lit(g.opacity),
            color: vec3(g.color),
        });
    }
    let limits = JointLimits::new(vec3(file.limits.min), vec3(file.limits.max))?;
    ToolModel::new(links, gaussians, limits, T::lit(file.shaft_length))
}

pub fn tool_model_to_toml<T: Real>(model: &ToolModel<T>) -> String {
    let links = model
        .links()
        .iter()
        .map(|l| {
            let (joint, joint_index, axis) = match l.kind {
                JointKind::Fixed => (JointKindFile::Fixed, None, None),
                JointKind::Revolute { index } => (JointKindFile::Revolute, Some(index), Some(arr(&l.axis))),
            };
            LinkFile {
                name: l.name.clone(),
                parent: l.parent.map(|p| model.links()[p].name.clone()),
                translation: arr(&l.offset.translation),
                axis_angle: arr(&l.offset.rotation.log()),
                joint,
                joint_index,
                axis,
            }
        })
        .collect();
    let gaussians = model
        .gaussians()
        .iter()
        .map(|g| GaussianFile {
            link: model.links()[g.link].name.clone(),
            mean: arr(&g.mean_local),
            scale: arr(&g.scale),
            axis_angle: arr(&g.orient_local.log()),
            opacity: g.opacity.as_f64(),
            color: arr(&g.color),
        })
        .collect();
    let file = ModelFile {
        shaft_length: model.shaft_length().as_f64(),
        limits: LimitsFile {
            min: arr(&model.limits().min),
            max: arr(&model.limits().max),
        },
        links,
        gaussians,
    };
    toml::to_string(&file).expect("model serializes to TOML")
}

pub fn load_tool_model<T: Real>(path: &Path) -> Result<ToolModel<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tool_model_from_toml(&text, path)
}

pub fn save_tool_model<T: Real>(model: &ToolModel<T>, path: &Path) -> Result<()> {
    std::fs::write(path, tool_model_to_toml(model)).map_err(|e| Error::io(path, e))
}
