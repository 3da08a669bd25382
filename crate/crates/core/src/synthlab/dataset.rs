use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{corrupt, noise_bound, uniform};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation};
use crate::renderer::{load_pgm, load_png, render_model, save_pgm, save_png, Frame, Mask, RenderSettings};
use crate::tool_model::{forward_kinematics, jaws_non_crossing, JointLimits, JointVector, ToolModel};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Multi-view dataset layout. Every configuration is seen from
/// `views_per_config` random look-at cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Configurations at the neutral joint vector.
    pub n_canonical: usize,
    /// Configurations with random joint vectors.
    pub n_posed: usize,
    pub views_per_config: usize,
    /// Radians, sampled uniformly.
    pub azimuth: [f64; 2],
    /// Radians, sampled uniformly.
    pub elevation: [f64; 2],
    /// Camera distance to the tool centroid, meters.
    pub distance: [f64; 2],
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Focal length as a multiple of the image width.
    pub focal_ratio: f64,
    /// Pixel noise standard deviation in `[0, 1]` units.
    pub noise_std: f64,
    /// Coverage above which a pixel is written to the mask.
    pub alpha_support: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_canonical: 500,
            n_posed: 10_000,
            views_per_config: 12,
            azimuth: [0.0, std::f64::consts::TAU],
            elevation: [-60f64.to_radians(), 60f64.to_radians()],
            distance: [0.08, 0.14],
            seed: 0,
            width: 128,
            height: 128,
            focal_ratio: 1.5,
            noise_std: 0.0,
            alpha_support: crate::renderer::DEFAULT_ALPHA_SUPPORT,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_canonical == 0 || self.n_posed == 0 || self.views_per_config == 0 {
            return bad("n_canonical, n_posed and views_per_config must be at least 1".into());
        }
        if !(self.distance[0] > 0.0 && self.distance[0] <= self.distance[1] && self.distance[1].is_finite()) {
            return bad(format!("distance range must be positive and ordered, got {:?}", self.distance));
        }
        for (name, r) in [("azimuth", self.azimuth), ("elevation", self.elevation)] {
            if !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()) {
                return bad(format!("{name} range must be finite and ordered, got {r:?}"));
            }
        }
        if self.elevation[0] <= -std::f64::consts::FRAC_PI_2 || self.elevation[1] >= std::f64::consts::FRAC_PI_2 {
            return bad("elevation must stay strictly inside (-pi/2, pi/2)".into());
        }
        if !(0.0..=1.0).contains(&self.noise_std) {
            return bad(format!("noise_std must lie in [0, 1], got {}", self.noise_std));
        }
        Intrinsics::<f64>::centered(self.width, self.height, self.focal_ratio)?;
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        (self.n_canonical + self.n_posed) * self.views_per_config
    }

    pub fn intrinsics(&self) -> Result<Intrinsics<f64>> {
        Intrinsics::centered(self.width, self.height, self.focal_ratio)
    }
}

/// One rendered view with everything needed to re-render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub frame_index: u64,
    pub config: u64,
    pub canonical: bool,
    /// Tool-to-camera transform, row-major `[R | t]`.
    pub pose: [f64; 12],
    pub q: [f64; 3],
    /// `fx, fy, cx, cy, width, height`.
    pub intrinsics: [f64; 6],
    /// Paths relative to the manifest directory.
    pub image: String,
    pub mask: String,
    pub noise_std: f64,
    /// Reserved; depth images are not generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
}

/// A record with its files loaded and its numbers validated.
#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub frame: Frame<f64>,
    pub mask: Mask,
    pub pose: Pose<f64>,
    pub q: JointVector<f64>,
    pub intrinsics: Intrinsics<f64>,
}

impl GroundTruthRecord {
    pub fn pose(&self) -> Result<Pose<f64>> {
        Pose::from_row_major(&self.pose)
    }

    pub fn joints(&self) -> JointVector<f64> {
        JointVector::new(self.q[0], self.q[1], self.q[2])
    }

    pub fn camera(&self) -> Result<Intrinsics<f64>> {
        Intrinsics::from_array(&self.intrinsics)
    }

    /// Largest deviation of the stored image from a clean re-rendering.
    pub fn noise_bound(&self) -> f64 {
        noise_bound(self.noise_std)
    }

    pub fn load(&self, dir: &Path) -> Result<LoadedRecord> {
        let intrinsics = self.camera()?;
        let frame: Frame<f64> = load_png(&dir.join(&self.image))?;
        let mask = load_pgm(&dir.join(&self.mask))?;
        if frame.width != intrinsics.width || frame.height != intrinsics.height {
            return Err(Error::InvalidFrame(format!(
                "{}: image is {}x{}, record says {}x{}",
                self.image, frame.width, frame.height, intrinsics.width, intrinsics.height
            )));
        }
        if mask.width != frame.width || mask.height != frame.height {
            return Err(Error::InvalidFrame(format!("{}: mask size differs from image", self.mask)));
        }
        Ok(LoadedRecord {
            frame,
            mask,
            pose: self.pose()?,
            q: self.joints(),
            intrinsics,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dir: PathBuf,
    pub records: Vec<GroundTruthRecord>,
}

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }
}

/// Camera looking from `eye` at `target` (both in the tool frame) with
/// `up` pointing up in the image. Returns the tool-to-camera transform in
/// the x-right, y-down, z-forward convention.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> Result<Pose<f64>> {
    let z = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidSpec("camera eye coincides with its target".into()))?;
    let x = z
        .cross(up)
        .try_normalize(1e-9)
        .ok_or_else(|| Error::InvalidSpec("viewing direction is parallel to up".into()))?;
    let y = z.cross(&x);
    let r_tool_cam = Rotation::from_matrix(Matrix3::from_columns(&[x, y, z]))?;
    Ok(Pose::new(r_tool_cam, *eye).inverse())
}

/// Uniform joint vector inside `limits` with non-crossing jaws.
pub(crate) fn sample_joints(rng: &mut ChaCha8Rng, limits: &JointLimits<f64>) -> Result<JointVector<f64>> {
    for _ in 0..10_000 {
        let q = JointVector::new(
            uniform(rng, [limits.min[0], limits.max[0]]),
            uniform(rng, [limits.min[1], limits.max[1]]),
            uniform(rng, [limits.min[2], limits.max[2]]),
        );
        if jaws_non_crossing(&q) {
            return Ok(q);
        }
    }
    Err(Error::InvalidSpec("joint limits leave no room for non-crossing jaws".into()))
}

/// Centroid of the Gaussian means in the tool frame.
pub(crate) fn model_centroid(model: &ToolModel<f64>, q: &JointVector<f64>) -> Result<Vector3<f64>> {
    let links = forward_kinematics(model, q)?;
    let g = model.gaussians();
    let sum = g
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + links[p.link].transform_point(&p.mean_local));
    Ok(sum / g.len().max(1) as f64)
}

fn file_names(index: u64) -> (String, String) {
    (format!("images/{index:06}.png"), format!("masks/{index:06}.pgm"))
}

pub(crate) fn create_dirs(out_dir: &Path) -> Result<()> {
    for d in [out_dir.to_path_buf(), out_dir.join("images"), out_dir.join("masks")] {
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    Ok(())
}

/// Renders, corrupts and writes one view; returns its record.
#[allow(clippy::too_many_arguments)]
pub(crate) fn write_view(
    model: &ToolModel<f64>,
    pose: &Pose<f64>,
    q: &JointVector<f64>,
    k: &Intrinsics<f64>,
    settings: &RenderSettings<f64>,
    noise_std: f64,
    alpha_support: f64,
    rng: &mut ChaCha8Rng,
    out_dir: &Path,
    frame_index: u64,
    config: u64,
    canonical: bool,
) -> Result<(GroundTruthRecord, Frame<f64>, Mask)> {
    let out = render_model(model, pose, q, k, settings)?;
    let stored = corrupt(&out.image, noise_std, rng);
    let mask = Mask::from_threshold(&out.alpha, k.width, k.height, alpha_support);
    let (image, mask_path) = file_names(frame_index);
    save_png(&stored, &out_dir.join(&image))?;
    save_pgm(&mask, &out_dir.join(&mask_path))?;
    let record = GroundTruthRecord {
        frame_index,
        config,
        canonical,
        pose: pose.to_row_major(),
        q: [q.q1(), q.q2(), q.q3()],
        intrinsics: k.to_array(),
        image,
        mask: mask_path,
        noise_std,
        depth: None,
    };
    Ok((record, stored, mask))
}

/// Renders every configuration of `spec` into `out_dir` and writes the
/// manifest. Configurations are generated in parallel; each draws from its
/// own RNG stream, so the output does not depend on scheduling.
pub fn generate_dataset(model: &ToolModel<f64>, spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let settings = RenderSettings::default();
    create_dirs(out_dir)?;
    let n_configs = spec.n_canonical + spec.n_posed;
    let views = spec.views_per_config;

    let per_config: Vec<Vec<GroundTruthRecord>> = (0..n_configs)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let canonical = c < spec.n_canonical;
            let q = if canonical {
                model.limits().neutral()
            } else {
                sample_joints(&mut rng, model.limits())?
            };
            let target = model_centroid(model, &q)?;
            (0..views)
                .map(|v| {
                    let az = uniform(&mut rng, spec.azimuth);
                    let el = uniform(&mut rng, spec.elevation);
                    let d = uniform(&mut rng, spec.distance);
                    let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                    let pose = look_at(&(target + dir * d), &target, &Vector3::z())?;
                    let index = (c * views + v) as u64;
                    let (rec, _, _) = write_view(
                        model,
                        &pose,
                        &q,
                        &k,
                        &settings,
                        spec.noise_std,
                        spec.alpha_support,
                        &mut rng,
                        out_dir,
                        index,
                        c as u64,
                        canonical,
                    )?;
                    Ok(rec)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        dir: out_dir.to_path_buf(),
        records: per_config.into_iter().flatten().collect(),
    };
    save_manifest(&manifest.path(), &manifest.records)?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, records: &[GroundTruthRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        writeln!(s, "{line}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a manifest; relative paths in the records resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: GroundTruthRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        Intrinsics::<f64>::from_array(&r.intrinsics).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        Pose::<f64>::from_row_major(&r.pose).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        records.push(r);
    }
    if records.is_empty() {
        return Err(Error::parse(path, 1, "manifest has no records"));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(DatasetManifest { dir, records })
}
