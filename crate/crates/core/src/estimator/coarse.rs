use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{refine, FrameEstimate, RefinerConfig, Scene};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation};
use crate::renderer::{pixel_averaged_loss, render_model, Frame, Mask, DEFAULT_ALPHA_SUPPORT};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseConfig {
    /// Points per side of the square grid.
    pub grid_size: usize,
    /// Grid side length as a fraction of the mask bounding-box diagonal.
    pub grid_extent: f64,
    pub n_rotations: usize,
    /// Nominal working distance, meters.
    pub init_depth: f64,
    pub refine_iters_per_candidate: usize,
    /// Rendered-alpha threshold defining the pixels of a rendering.
    pub alpha_support: f64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            grid_size: 3,
            grid_extent: 0.5,
            n_rotations: 36,
            init_depth: 0.10,
            refine_iters_per_candidate: 50,
            alpha_support: DEFAULT_ALPHA_SUPPORT,
        }
    }
}

impl CoarseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.grid_size == 0 || self.n_rotations == 0 || self.refine_iters_per_candidate == 0 {
            return bad("grid_size, n_rotations and refine_iters_per_candidate must be at least 1");
        }
        if !(self.init_depth > 0.0 && self.init_depth.is_finite()) {
            return bad("init_depth must be positive");
        }
        if !(self.grid_extent >= 0.0 && self.grid_extent.is_finite()) {
            return bad("grid_extent must be non-negative");
        }
        if !(self.alpha_support > 0.0 && self.alpha_support < 1.0) {
            return bad("alpha_support must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn candidate_count(&self) -> usize {
        self.grid_size * self.grid_size * self.n_rotations
    }
}

/// Mean pixel coordinate of the true pixels.
pub fn mask_centroid<T: Real>(mask: &Mask) -> Result<Vector2<T>> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                sx += x as u64;
                sy += y as u64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(Vector2::new(T::lit(sx as f64 / n as f64), T::lit(sy as f64 / n as f64)))
}

/// Grid spacing in meters along camera x and y.
pub(crate) fn grid_spacing<T: Real>(mask: &Mask, k: &Intrinsics<T>, cfg: &CoarseConfig) -> Result<Vector2<T>> {
    let (x0, y0, x1, y1) = mask.bounding_box().ok_or(Error::EmptyMask)?;
    if cfg.grid_size < 2 {
        return Ok(Vector2::zeros());
    }
    let (w, h) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
    let side_px = T::lit(cfg.grid_extent * w.hypot(h));
    let depth = T::lit(cfg.init_depth);
    let gaps = T::from_usize_lossy(cfg.grid_size - 1);
    Ok(Vector2::new(side_px * depth / k.fx / gaps, side_px * depth / k.fy / gaps))
}

/// Grid points parallel to the image plane, centered on the back-projected
/// mask centroid at the nominal depth, each paired with `n_rotations`
/// in-plane rotations. Candidate `g * n_rotations + r` sits at grid point
/// `g` (row-major) with rotation `2 pi r / n_rotations` about camera z.
pub fn generate_candidates<T: Real>(mask: &Mask, k: &Intrinsics<T>, cfg: &CoarseConfig) -> Result<Vec<Pose<T>>> {
    cfg.validate()?;
    let c = mask_centroid::<T>(mask)?;
    let center = k.back_project(c.x, c.y, T::lit(cfg.init_depth));
    let spacing = grid_spacing(mask, k, cfg)?;
    let half = T::lit((cfg.grid_size as f64 - 1.0) / 2.0);
    let rotations: Vec<Rotation<T>> = (0..cfg.n_rotations)
        .map(|r| Rotation::rz(T::two_pi() * T::from_usize_lossy(r) / T::from_usize_lossy(cfg.n_rotations)))
        .collect();
    let mut out = Vec::with_capacity(cfg.candidate_count());
    for iy in 0..cfg.grid_size {
        for ix in 0..cfg.grid_size {
            let offset = Vector3::new(
                (T::from_usize_lossy(ix) - half) * spacing.x,
                (T::from_usize_lossy(iy) - half) * spacing.y,
                T::zero(),
            );
            out.extend(rotations.iter().map(|r| Pose::new(*r, center + offset)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CoarseResult<T: Real> {
    /// Refined estimate of the selected candidate.
    pub estimate: FrameEstimate<T>,
    pub index: usize,
    pub candidates: Vec<Pose<T>>,
    /// Pixel-averaged loss of every refined candidate; `+inf` for diverged
    /// ones.
    pub selection_losses: Vec<T>,
}

/// Refines one candidate from neutral joints and scores it.
pub(crate) fn score_candidate<T: Real>(
    candidate: &Pose<T>,
    frame: &Frame<T>,
    scene: &Scene<T>,
    coarse: &CoarseConfig,
    refiner: &RefinerConfig,
) -> Result<Option<(FrameEstimate<T>, T)>> {
    let q0 = scene.model.limits().neutral();
    let est = match refine(candidate, &q0, frame, scene, refiner, coarse.refine_iters_per_candidate) {
        Ok(e) => e,
        Err(Error::NonFiniteLoss { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let out = render_model(scene.model, &est.pose, &est.q, scene.intrinsics, scene.render)?;
    let l = pixel_averaged_loss(&out, frame, scene.loss, T::lit(coarse.alpha_support))?;
    Ok(Some((est, l)))
}

/// Refines every candidate (in parallel) and keeps the one with the lowest
/// pixel-averaged loss; ties go to the lower candidate index.
pub fn coarse_estimate<T: Real>(
    frame: &Frame<T>,
    mask: &Mask,
    scene: &Scene<T>,
    coarse: &CoarseConfig,
    refiner: &RefinerConfig,
) -> Result<CoarseResult<T>> {
    let candidates = generate_candidates(mask, scene.intrinsics, coarse)?;
    let scored: Vec<Option<(FrameEstimate<T>, T)>> = candidates
        .par_iter()
        .map(|c| score_candidate(c, frame, scene, coarse, refiner))
        .collect::<Result<_>>()?;
    let inf = T::lit(f64::INFINITY);
    let selection_losses: Vec<T> = scored.iter().map(|s| s.as_ref().map_or(inf, |s| s.1)).collect();
    let mut index = None;
    for (i, l) in selection_losses.iter().enumerate() {
        if l.is_finite() && index.is_none_or(|j: usize| *l < selection_losses[j]) {
            index = Some(i);
        }
    }
    let index = index.ok_or(Error::AllCandidatesDiverged)?;
    let estimate = scored.into_iter().nth(index).flatten().expect("selected candidate scored").0;
    log::debug!("coarse: candidate {index} selected, pixel-averaged loss {}", selection_losses[index]);
    Ok(CoarseResult {
        estimate,
        index,
        candidates,
        selection_losses,
    })
}
