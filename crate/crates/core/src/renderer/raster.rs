//! Forward splatting and its analytic adjoint.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::frame::Frame;
use crate::error::{Error, Result};
use crate::geometry::{project, projection_jacobian, Intrinsics, DEFAULT_Z_MIN};
use crate::scalar::Real;
use crate::tool_model::{GaussianJacobian, PosedGaussian, NUM_JOINTS};

/// Rasterizer knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings<T: Real> {
    pub background: Vector3<T>,
    /// Per-splat opacities below this are dropped.
    pub alpha_cutoff: T,
    /// Width of the fade-in above the cutoff, in multiples of the cutoff.
    /// Opacities in `[c, c * (1 + band)]` are scaled by a C2 smootherstep so
    /// the image stays smooth in the Gaussian parameters.
    pub taper_band: T,
    pub z_min: T,
    /// Isotropic term added to every projected covariance, pixels squared.
    pub dilation: T,
    pub tile_size: usize,
}

impl<T: Real> Default for RenderSettings<T> {
    fn default() -> Self {
        RenderSettings {
            background: Vector3::zeros(),
            alpha_cutoff: T::lit(1.0 / 255.0),
            taper_band: T::lit(7.0),
            z_min: T::lit(DEFAULT_Z_MIN),
            dilation: T::zero(),
            tile_size: 16,
        }
    }
}

impl<T: Real> RenderSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_cutoff > T::zero() && self.alpha_cutoff < T::lit(0.5)) {
            return Err(Error::InvalidConfig(format!(
                "alpha_cutoff must lie in (0, 0.5), got {}",
                self.alpha_cutoff
            )));
        }
        if !(self.taper_band > T::zero() && self.taper_band.is_finite()) {
            return Err(Error::InvalidConfig("taper_band must be positive".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile_size must be positive".into()));
        }
        if !(self.dilation >= T::zero()) || !(self.z_min > T::zero()) {
            return Err(Error::InvalidConfig("dilation must be >= 0 and z_min > 0".into()));
        }
        if self.background.iter().any(|c| !(*c >= T::zero() && *c <= T::one())) {
            return Err(Error::InvalidConfig("background must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Smooth cutoff applied to a raw splat opacity; returns the effective
/// opacity and its derivative with respect to the raw value.
#[inline]
fn taper<T: Real>(alpha: T, cutoff: T, band: T) -> (T, T) {
    if alpha < cutoff {
        return (T::zero(), T::zero());
    }
    let width = cutoff * band;
    let u = (alpha - cutoff) / width;
    if u >= T::one() {
        return (alpha, T::one());
    }
    let u2 = u * u;
    let s = u2 * u * (T::lit(10.0) + u * (T::lit(6.0) * u - T::lit(15.0)));
    let ds = T::lit(30.0) * u2 * (u - T::one()) * (u - T::one());
    (alpha * s, s + alpha * ds / width)
}

/// One Gaussian after projection to the image plane.
#[derive(Debug, Clone)]
pub(crate) struct Splat<T: Real> {
    pub index: usize,
    pub depth: T,
    pub mean2: Vector2<T>,
    pub conic: Matrix2<T>,
    pub jac: Matrix2x3<T>,
    pub opacity: T,
    pub color: Vector3<T>,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    bbox: (usize, usize, usize, usize),
}

/// A single splat's contribution at one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Record<T: Real> {
    pub splat: u32,
    pub alpha_raw: T,
    pub alpha: T,
    pub transmittance: T,
}

/// Per-pixel compositing state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SplatCache<T: Real> {
    pub(crate) intrinsics: Intrinsics<T>,
    pub(crate) settings: RenderSettings<T>,
    pub(crate) n_gaussians: usize,
    /// Front-to-back order.
    pub(crate) splats: Vec<Splat<T>>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) records: Vec<Record<T>>,
}

impl<T: Real> SplatCache<T> {
    pub fn gaussian_count(&self) -> usize {
        self.n_gaussians
    }

    pub fn visible_count(&self) -> usize {
        self.splats.len()
    }

    /// Camera-frame indices of the visible Gaussians, front to back.
    pub fn depth_order(&self) -> Vec<usize> {
        self.splats.iter().map(|s| s.index).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput<T: Real> {
    pub image: Frame<T>,
    /// Accumulated coverage `1 - prod(1 - alpha_i)` per pixel.
    pub alpha: Vec<T>,
    pub cache: SplatCache<T>,
}

fn project_splat<T: Real>(
    index: usize,
    g: &PosedGaussian<T>,
    k: &Intrinsics<T>,
    s: &RenderSettings<T>,
) -> Option<Splat<T>> {
    let mean2 = project(&g.mean_cam, k, s.z_min).ok()?;
    let jac = projection_jacobian(&g.mean_cam, k, s.z_min).ok()?;
    if g.opacity <= s.alpha_cutoff {
        return None;
    }
    let cov2 = jac * g.cov_cam * jac.transpose() + Matrix2::identity() * s.dilation;
    let det = cov2[(0, 0)] * cov2[(1, 1)] - cov2[(0, 1)] * cov2[(1, 0)];
    if !(det > T::zero()) {
        return None;
    }
    let conic = Matrix2::new(cov2[(1, 1)], -cov2[(0, 1)], -cov2[(1, 0)], cov2[(0, 0)]) / det;
    // Beyond Mahalanobis radius r the raw opacity is below the cutoff.
    let r2 = T::lit(2.0) * (g.opacity / s.alpha_cutoff).ln();
    let ext_x = (r2 * cov2[(0, 0)]).sqrt();
    let ext_y = (r2 * cov2[(1, 1)]).sqrt();
    let w = T::from_usize_lossy(k.width - 1);
    let h = T::from_usize_lossy(k.height - 1);
    let x0 = (mean2.x - ext_x).ceil().max(T::zero());
    let x1 = (mean2.x + ext_x).floor().min(w);
    let y0 = (mean2.y - ext_y).ceil().max(T::zero());
    let y1 = (mean2.y + ext_y).floor().min(h);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    let to_usize = |v: T| v.to_usize().unwrap_or(0);
    Some(Splat {
        index,
        depth: g.mean_cam.z,
        mean2,
        conic,
        jac,
        opacity: g.opacity,
        color: g.color,
        bbox: (to_usize(x0), to_usize(y0), to_usize(x1), to_usize(y1)),
    })
}

/// Splats camera-frame Gaussians into an image.
///
/// Pixel `(x, y)` is sampled at its integer coordinates. Gaussians are
/// composited front to back by camera depth (ties by index) over the
/// background color; Gaussians at or behind `z_min` are culled.
pub fn render<T: Real>(
    gaussians: &[PosedGaussian<T>],
    k: &Intrinsics<T>,
    settings: &RenderSettings<T>,
) -> RenderOutput<T> {
    let (w, h) = (k.width, k.height);
    let mut splats: Vec<Splat<T>> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_splat(i, g, k, settings))
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });

    let ts = settings.tile_size;
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, s) in splats.iter().enumerate() {
        let (x0, y0, x1, y1) = s.bbox;
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                tiles[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }

    let bg = settings.background;
    let mut pixels = vec![T::zero(); 3 * w * h];
    let mut alpha = vec![T::zero(); w * h];
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut records = Vec::new();
    offsets.push(0);
    for y in 0..h {
        for x in 0..w {
            let tile = &tiles[(y / ts) * tiles_x + x / ts];
            let p = Vector2::new(T::from_usize_lossy(x), T::from_usize_lossy(y));
            let mut t = T::one();
            let mut c = Vector3::zeros();
            for &slot in tile {
                let s = &splats[slot as usize];
                let (bx0, by0, bx1, by1) = s.bbox;
                if x < bx0 || x > bx1 || y < by0 || y > by1 {
                    continue;
                }
                let d = p - s.mean2;
                let power = -T::lit(0.5) * (d.transpose() * s.conic * d)[(0, 0)];
                let a_raw = s.opacity * power.exp();
                let (a, _) = taper(a_raw, settings.alpha_cutoff, settings.taper_band);
                if a == T::zero() {
                    continue;
                }
                records.push(Record {
                    splat: slot as u32,
                    alpha_raw: a_raw,
                    alpha: a,
                    transmittance: t,
                });
                c += s.color * (a * t);
                t *= T::one() - a;
            }
            let i = y * w + x;
            let out = c + bg * t;
            for ch in 0..3 {
                pixels[3 * i + ch] = out[ch].clamp(T::zero(), T::one());
            }
            alpha[i] = T::one() - t;
            offsets.push(records.len());
        }
    }

    RenderOutput {
        image: Frame {
            width: w,
            height: h,
            pixels,
            mask: None,
        },
        alpha,
        cache: SplatCache {
            intrinsics: *k,
            settings: *settings,
            n_gaussians: gaussians.len(),
            splats,
            offsets,
            records,
        },
    }
}

/// Loss gradient with respect to one camera-frame Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGrad<T: Real> {
    pub mean_cam: Vector3<T>,
    /// Gradient with respect to each entry of the (symmetric) covariance.
    pub cov_cam: Matrix3<T>,
    pub opacity: T,
    pub color: Vector3<T>,
}

impl<T: Real> GaussianGrad<T> {
    fn zero() -> Self {
        GaussianGrad {
            mean_cam: Vector3::zeros(),
            cov_cam: Matrix3::zeros(),
            opacity: T::zero(),
            color: Vector3::zeros(),
        }
    }
}

/// Loss gradient with respect to the pose tangent and joint angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient<T: Real> {
    pub omega: Vector3<T>,
    pub t: Vector3<T>,
    pub q: Vector3<T>,
}

impl<T: Real> PoseGradient<T> {
    pub fn zero() -> Self {
        PoseGradient {
            omega: Vector3::zeros(),
            t: Vector3::zeros(),
            q: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.t.iter()).chain(self.q.iter()).all(|v| v.is_finite())
    }
}

/// Back-propagates `dl_dimage` (interleaved RGB, same layout as the image)
/// to every Gaussian's camera-frame mean, covariance, opacity and color.
pub fn render_backward_gaussians<T: Real>(
    out: &RenderOutput<T>,
    dl_dimage: &[T],
    gaussians: &[PosedGaussian<T>],
) -> Result<Vec<GaussianGrad<T>>> {
    let cache = &out.cache;
    if gaussians.len() != cache.n_gaussians {
        return Err(Error::StaleCache {
            cached: cache.n_gaussians,
            given: gaussians.len(),
        });
    }
    let (w, h) = (cache.intrinsics.width, cache.intrinsics.height);
    if dl_dimage.len() != 3 * w * h {
        return Err(Error::DimensionMismatch(format!(
            "image gradient has {} values for {w}x{h}x3",
            dl_dimage.len()
        )));
    }
    let half = T::lit(0.5);
    let cutoff = cache.settings.alpha_cutoff;
    let n = cache.splats.len();
    let mut d_mean2 = vec![Vector2::<T>::zeros(); n];
    let mut d_conic = vec![Matrix2::<T>::zeros(); n];
    let mut d_opacity = vec![T::zero(); n];
    let mut d_color = vec![Vector3::<T>::zeros(); n];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let g = Vector3::new(dl_dimage[3 * i], dl_dimage[3 * i + 1], dl_dimage[3 * i + 2]);
            if g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let p = Vector2::new(T::from_usize_lossy(x), T::from_usize_lossy(y));
            // Color composited behind the current record.
            let mut behind = cache.settings.background;
            for r in cache.records[cache.offsets[i]..cache.offsets[i + 1]].iter().rev() {
                let slot = r.splat as usize;
                let s = &cache.splats[slot];
                let d_alpha = r.transmittance * g.dot(&(s.color - behind));
                d_color[slot] += g * (r.alpha * r.transmittance);
                behind = s.color * r.alpha + behind * (T::one() - r.alpha);

                let (_, da_draw) = taper(r.alpha_raw, cutoff, cache.settings.taper_band);
                let d_raw = d_alpha * da_draw;
                d_opacity[slot] += d_raw * r.alpha_raw / s.opacity;
                let d_power = d_raw * r.alpha_raw;
                let d = p - s.mean2;
                d_mean2[slot] += s.conic * d * d_power;
                d_conic[slot] -= d * d.transpose() * (half * d_power);
            }
        }
    }

    let k = &cache.intrinsics;
    let mut grads = vec![GaussianGrad::zero(); gaussians.len()];
    for (slot, s) in cache.splats.iter().enumerate() {
        let gauss = &gaussians[s.index];
        let a = &s.conic;
        let g_cov2 = -(a * d_conic[slot] * a);
        let j = &s.jac;
        let g_cov3 = j.transpose() * g_cov2 * j;
        let g_jac = (g_cov2 * j * gauss.cov_cam) * T::lit(2.0);

        let m = &gauss.mean_cam;
        let inv_z = T::one() / m.z;
        let inv_z2 = inv_z * inv_z;
        let inv_z3 = inv_z2 * inv_z;
        let two = T::lit(2.0);
        let mut d_mean = j.transpose() * d_mean2[slot];
        d_mean.x -= g_jac[(0, 2)] * k.fx * inv_z2;
        d_mean.y -= g_jac[(1, 2)] * k.fy * inv_z2;
        d_mean.z += -g_jac[(0, 0)] * k.fx * inv_z2 + g_jac[(0, 2)] * two * k.fx * m.x * inv_z3
            - g_jac[(1, 1)] * k.fy * inv_z2
            + g_jac[(1, 2)] * two * k.fy * m.y * inv_z3;

        grads[s.index] = GaussianGrad {
            mean_cam: d_mean,
            cov_cam: g_cov3,
            opacity: d_opacity[slot],
            color: d_color[slot],
        };
    }
    Ok(grads)
}

/// Chains per-Gaussian gradients through the pose/joint Jacobians.
pub fn chain_pose_gradient<T: Real>(grads: &[GaussianGrad<T>], jacobians: &[GaussianJacobian<T>]) -> Result<PoseGradient<T>> {
    if grads.len() != jacobians.len() {
        return Err(Error::StaleCache {
            cached: grads.len(),
            given: jacobians.len(),
        });
    }
    let mut out = PoseGradient::zero();
    for (g, j) in grads.iter().zip(jacobians) {
        out.omega += j.d_mean_d_omega.transpose() * g.mean_cam;
        out.t += j.d_mean_d_t.transpose() * g.mean_cam;
        out.q += j.d_mean_d_q.transpose() * g.mean_cam;
        for c in 0..3 {
            out.omega[c] += g.cov_cam.dot(&j.d_cov_d_omega[c]);
        }
        for c in 0..NUM_JOINTS {
            out.q[c] += g.cov_cam.dot(&j.d_cov_d_q[c]);
        }
    }
    Ok(out)
}

/// Gradient of a loss with image gradient `dl_dimage` with respect to the
/// pose tangent `(omega, delta_t)` and joint angles.
pub fn render_backward<T: Real>(
    out: &RenderOutput<T>,
    dl_dimage: &[T],
    gaussians: &[PosedGaussian<T>],
    jacobians: &[GaussianJacobian<T>],
) -> Result<PoseGradient<T>> {
    let grads = render_backward_gaussians(out, dl_dimage, gaussians)?;
    chain_pose_gradient(&grads, jacobians)
}
