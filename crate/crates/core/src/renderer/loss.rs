//! Blended SSIM / MSE image loss.

use super::frame::Frame;
use super::raster::RenderOutput;
use super::ssim::{ssim_maps, ssim_weighted_grad};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default coverage above which a pixel counts as part of a rendering.
pub const DEFAULT_ALPHA_SUPPORT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T: Real> {
    /// Weight of the SSIM term; `1 - alpha_blend` weighs the MSE term.
    pub alpha_blend: T,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub c1: T,
    pub c2: T,
}

impl<T: Real> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            alpha_blend: T::lit(0.8),
            ssim_window: 11,
            ssim_sigma: 1.5,
            c1: T::lit(0.01 * 0.01),
            c2: T::lit(0.03 * 0.03),
        }
    }
}

impl<T: Real> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_blend >= T::zero() && self.alpha_blend <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "alpha_blend must lie in [0, 1], got {}",
                self.alpha_blend
            )));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "ssim_window must be odd and >= 3, got {}",
                self.ssim_window
            )));
        }
        if !(self.ssim_sigma > 0.0 && self.c1 > T::zero() && self.c2 > T::zero()) {
            return Err(Error::InvalidConfig("ssim sigma and stabilizers must be positive".into()));
        }
        Ok(())
    }
}

/// Loss value together with its gradient with respect to the rendered image.
#[derive(Debug, Clone)]
pub struct LossWithGrad<T: Real> {
    pub value: T,
    pub ssim: T,
    pub mse: T,
    pub grad: Vec<T>,
}

/// Blended loss restricted to `support` (all pixels when `None`), averaged
/// over the pixels it covers. SSIM positions count when their center pixel
/// is supported.
fn loss_over<T: Real>(
    ren: &Frame<T>,
    obs: &Frame<T>,
    cfg: &LossConfig<T>,
    support: Option<&[bool]>,
    want_grad: bool,
) -> Result<Option<LossWithGrad<T>>> {
    ren.same_size(obs)?;
    let (w, h) = (ren.width, ren.height);
    let in_support = |i: usize| support.is_none_or(|s| s[i]);
    let n_pix = (0..w * h).filter(|i| in_support(*i)).count();
    if n_pix == 0 {
        return Ok(None);
    }

    let maps = ssim_maps(ren, obs, cfg)?;
    let half = cfg.ssim_window / 2;
    let mut map_support = Vec::with_capacity(maps.width * maps.height);
    for my in 0..maps.height {
        for mx in 0..maps.width {
            map_support.push(in_support((my + half) * w + mx + half));
        }
    }
    let n_map = map_support.iter().filter(|b| **b).count();
    let ssim_val = if n_map == 0 {
        // No full window inside the support: treat structure as uninformative.
        T::zero()
    } else {
        let mut total = T::zero();
        for map in &maps.maps {
            for (v, s) in map.iter().zip(&map_support) {
                if *s {
                    total += *v;
                }
            }
        }
        total / T::from_usize_lossy(3 * n_map)
    };

    let mut sq = T::zero();
    for i in 0..w * h {
        if in_support(i) {
            for c in 0..3 {
                let d = ren.pixels[3 * i + c] - obs.pixels[3 * i + c];
                sq += d * d;
            }
        }
    }
    let denom = T::from_usize_lossy(3 * n_pix);
    let mse = sq / denom;
    let alpha = cfg.alpha_blend;
    let value = alpha * (T::one() - ssim_val) + (T::one() - alpha) * mse;

    let grad = if want_grad {
        let mut grad = vec![T::zero(); 3 * w * h];
        if n_map > 0 && alpha != T::zero() {
            let wt = -alpha / T::from_usize_lossy(3 * n_map);
            let weights: Vec<T> = map_support.iter().map(|s| if *s { wt } else { T::zero() }).collect();
            grad = ssim_weighted_grad(&maps, cfg, &weights);
        }
        let k = T::lit(2.0) * (T::one() - alpha) / denom;
        for i in 0..w * h {
            if in_support(i) {
                for c in 0..3 {
                    let j = 3 * i + c;
                    grad[j] += k * (ren.pixels[j] - obs.pixels[j]);
                }
            }
        }
        grad
    } else {
        Vec::new()
    };
    Ok(Some(LossWithGrad {
        value,
        ssim: ssim_val,
        mse,
        grad,
    }))
}

/// `alpha (1 - SSIM) + (1 - alpha) MSE`, MSE being the per-value mean.
pub fn combined_loss<T: Real>(ren: &Frame<T>, obs: &Frame<T>, cfg: &LossConfig<T>) -> Result<T> {
    Ok(loss_over(ren, obs, cfg, None, false)?
        .expect("full support is never empty")
        .value)
}

/// [`combined_loss`] plus its gradient with respect to `ren`.
pub fn combined_loss_with_grad<T: Real>(
    ren: &Frame<T>,
    obs: &Frame<T>,
    cfg: &LossConfig<T>,
) -> Result<LossWithGrad<T>> {
    Ok(loss_over(ren, obs, cfg, None, true)?.expect("full support is never empty"))
}

/// Combined loss averaged over the rendered support only (pixels with
/// coverage above `alpha_support`), so that candidates close to the camera
/// are not penalized for covering more pixels. Returns `+inf` when nothing
/// is rendered.
pub fn pixel_averaged_loss<T: Real>(
    ren: &RenderOutput<T>,
    obs: &Frame<T>,
    cfg: &LossConfig<T>,
    alpha_support: T,
) -> Result<T> {
    let support: Vec<bool> = ren.alpha.iter().map(|a| *a > alpha_support).collect();
    Ok(loss_over(&ren.image, obs, cfg, Some(&support), false)?
        .map(|l| l.value)
        .unwrap_or_else(|| T::lit(f64::INFINITY)))
}
