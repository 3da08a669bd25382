//! Gaussian-window SSIM over "valid" window positions, with its gradient.
//!
//! The map has one entry per window placement fully inside the image, so a
//! `W x H` image with window `n` yields a `(W - n + 1) x (H - n + 1)` map
//! whose entry `(i, j)` is centered on pixel `(i + n/2, j + n/2)`.

use super::frame::Frame;
use super::loss::LossConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn gaussian_window<T: Real>(size: usize, sigma: f64) -> Vec<T> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| T::lit(v / sum)).collect()
}

/// Separable valid correlation of a `w x h` plane.
fn filter_valid<T: Real>(src: &[T], w: usize, h: usize, win: &[T]) -> Vec<T> {
    let n = win.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![T::zero(); ow * h];
    for (row, out) in src.chunks_exact(w).zip(tmp.chunks_exact_mut(ow)) {
        for (k, wk) in win.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&row[k..k + ow]) {
                *o += *wk * *v;
            }
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for (y, dst) in out.chunks_exact_mut(ow).enumerate() {
        for (k, wk) in win.iter().enumerate() {
            for (o, v) in dst.iter_mut().zip(&tmp[(y + k) * ow..(y + k + 1) * ow]) {
                *o += *wk * *v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a map-sized plane back to image size.
fn filter_valid_adjoint<T: Real>(grad: &[T], w: usize, h: usize, win: &[T]) -> Vec<T> {
    let n = win.len();
    let ow = w + 1 - n;
    let mut tmp = vec![T::zero(); ow * h];
    for (y, src) in grad.chunks_exact(ow).enumerate() {
        for (k, wk) in win.iter().enumerate() {
            for (o, g) in tmp[(y + k) * ow..(y + k + 1) * ow].iter_mut().zip(src) {
                *o += *wk * *g;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    for (row, dst) in tmp.chunks_exact(ow).zip(out.chunks_exact_mut(w)) {
        for (k, wk) in win.iter().enumerate() {
            for (o, g) in dst[k..k + ow].iter_mut().zip(row) {
                *o += *wk * *g;
            }
        }
    }
    out
}

fn channel<T: Real>(f: &Frame<T>, c: usize) -> Vec<T> {
    f.pixels.iter().skip(c).step_by(3).copied().collect()
}

/// Local statistics of one channel pair.
pub(crate) struct Stats<T: Real> {
    x: Vec<T>,
    y: Vec<T>,
    mu_x: Vec<T>,
    mu_y: Vec<T>,
    var_x: Vec<T>,
    var_y: Vec<T>,
    cov_xy: Vec<T>,
}

fn stats<T: Real>(x: Vec<T>, y: Vec<T>, w: usize, h: usize, win: &[T]) -> Stats<T> {
    let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
    let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
    let xy: Vec<T> = x.iter().zip(&y).map(|(a, b)| *a * *b).collect();
    let mu_x = filter_valid(&x, w, h, win);
    let mu_y = filter_valid(&y, w, h, win);
    let e_xx = filter_valid(&xx, w, h, win);
    let e_yy = filter_valid(&yy, w, h, win);
    let e_xy = filter_valid(&xy, w, h, win);
    let var_x = e_xx.iter().zip(&mu_x).map(|(e, m)| *e - *m * *m).collect();
    let var_y = e_yy.iter().zip(&mu_y).map(|(e, m)| *e - *m * *m).collect();
    let cov_xy = e_xy
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (a, b))| *e - *a * *b)
        .collect();
    Stats {
        x,
        y,
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov_xy,
    }
}

/// Per-channel SSIM maps together with the statistics needed to
/// differentiate them.
pub(crate) struct SsimMaps<T: Real> {
    pub maps: [Vec<T>; 3],
    pub width: usize,
    pub height: usize,
    image_width: usize,
    image_height: usize,
    stats: [Stats<T>; 3],
}

pub(crate) fn check_window<T: Real>(a: &Frame<T>, cfg: &LossConfig<T>) -> Result<()> {
    if a.width < cfg.ssim_window || a.height < cfg.ssim_window {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} image is smaller than the {}-pixel SSIM window",
            a.width, a.height, cfg.ssim_window
        )));
    }
    Ok(())
}

pub(crate) fn ssim_maps<T: Real>(a: &Frame<T>, b: &Frame<T>, cfg: &LossConfig<T>) -> Result<SsimMaps<T>> {
    a.same_size(b)?;
    check_window(a, cfg)?;
    let (w, h) = (a.width, a.height);
    let win = gaussian_window::<T>(cfg.ssim_window, cfg.ssim_sigma);
    let two = T::lit(2.0);
    let stats = [0, 1, 2].map(|c| stats(channel(a, c), channel(b, c), w, h, &win));
    let maps = [0, 1, 2].map(|c| {
        let s = &stats[c];
        (0..s.mu_x.len())
            .map(|i| {
                let (mx, my) = (s.mu_x[i], s.mu_y[i]);
                let num = (two * mx * my + cfg.c1) * (two * s.cov_xy[i] + cfg.c2);
                let den = (mx * mx + my * my + cfg.c1) * (s.var_x[i] + s.var_y[i] + cfg.c2);
                num / den
            })
            .collect()
    });
    Ok(SsimMaps {
        maps,
        width: w + 1 - cfg.ssim_window,
        height: h + 1 - cfg.ssim_window,
        image_width: w,
        image_height: h,
        stats,
    })
}

/// Gradient of `sum_c sum_p weights[p] * ssim_c(p)` with respect to the
/// first image passed to [`ssim_maps`].
pub(crate) fn ssim_weighted_grad<T: Real>(m: &SsimMaps<T>, cfg: &LossConfig<T>, weights: &[T]) -> Vec<T> {
    let (w, h) = (m.image_width, m.image_height);
    let win = gaussian_window::<T>(cfg.ssim_window, cfg.ssim_sigma);
    let two = T::lit(2.0);
    let mut grad = vec![T::zero(); 3 * w * h];
    for (c, s) in m.stats.iter().enumerate() {
        let n = s.mu_x.len();
        let mut p_mu = vec![T::zero(); n];
        let mut p_var = vec![T::zero(); n];
        let mut p_cov = vec![T::zero(); n];
        for i in 0..n {
            let wt = weights[i];
            if wt == T::zero() {
                continue;
            }
            let (mx, my) = (s.mu_x[i], s.mu_y[i]);
            let a1 = two * mx * my + cfg.c1;
            let a2 = two * s.cov_xy[i] + cfg.c2;
            let b1 = mx * mx + my * my + cfg.c1;
            let b2 = s.var_x[i] + s.var_y[i] + cfg.c2;
            let val = a1 * a2 / (b1 * b2);
            let d_mu = two * my * a2 / (b1 * b2) - val * two * mx / b1;
            let d_var = -val / b2;
            let d_cov = two * a1 / (b1 * b2);
            // var_x = E[x^2] - mu_x^2 and cov = E[xy] - mu_x mu_y.
            p_mu[i] = wt * (d_mu - two * mx * d_var - my * d_cov);
            p_var[i] = wt * d_var;
            p_cov[i] = wt * d_cov;
        }
        let g_mu = filter_valid_adjoint(&p_mu, w, h, &win);
        let g_var = filter_valid_adjoint(&p_var, w, h, &win);
        let g_cov = filter_valid_adjoint(&p_cov, w, h, &win);
        for i in 0..w * h {
            grad[3 * i + c] = g_mu[i] + two * s.x[i] * g_var[i] + s.y[i] * g_cov[i];
        }
    }
    grad
}

/// Mean SSIM over all valid window positions, averaged over channels.
pub fn ssim<T: Real>(a: &Frame<T>, b: &Frame<T>, cfg: &LossConfig<T>) -> Result<T> {
    let m = ssim_maps(a, b, cfg)?;
    let n = m.maps[0].len();
    let mut total = T::zero();
    for map in &m.maps {
        total += map.iter().fold(T::zero(), |acc, v| acc + *v);
    }
    Ok(total / T::from_usize_lossy(3 * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Frame<f64> {
        Frame::new(w, h, (0..3 * w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn window_is_normalized() {
        let w = gaussian_window::<f64>(11, 1.5);
        assert_eq!(w.len(), 11);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w[5] > w[4] && (w[4] - w[6]).abs() < 1e-18);
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_frame(&mut rng, 24, 19);
        assert_eq!(ssim(&a, &a, &LossConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_frame(&mut rng, 20, 20);
        let b = random_frame(&mut rng, 20, 20);
        let cfg = LossConfig::default();
        assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_patches_reduce_to_luminance_term() {
        let cfg = LossConfig::<f64>::default();
        for (va, vb) in [(0.2, 0.7), (0.5, 1.0), (0.0, 0.5)] {
            let a = Frame::filled(16, 16, nalgebra::Vector3::repeat(va));
            let b = Frame::filled(16, 16, nalgebra::Vector3::repeat(vb));
            let expected = (2.0 * va * vb + cfg.c1) / (va * va + vb * vb + cfg.c1);
            let got = ssim(&a, &b, &cfg).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn rejects_mismatched_or_tiny_frames() {
        let cfg = LossConfig::<f64>::default();
        let a = Frame::filled(16, 16, nalgebra::Vector3::repeat(0.1));
        let b = Frame::filled(16, 15, nalgebra::Vector3::repeat(0.1));
        assert!(matches!(ssim(&a, &b, &cfg), Err(Error::DimensionMismatch(_))));
        let c = Frame::filled(8, 8, nalgebra::Vector3::repeat(0.1));
        assert!(ssim(&c, &c, &cfg).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LossConfig::default();
        let (w, h) = (15, 13);
        let a = random_frame(&mut rng, w, h);
        let b = random_frame(&mut rng, w, h);
        let maps = ssim_maps(&a, &b, &cfg).unwrap();
        let n = maps.maps[0].len();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let objective = |f: &Frame<f64>| -> f64 {
            let m = ssim_maps(f, &b, &cfg).unwrap();
            m.maps.iter().map(|map| map.iter().zip(&weights).map(|(s, w)| s * w).sum::<f64>()).sum()
        };
        let grad = ssim_weighted_grad(&maps, &cfg, &weights);
        let step = 1e-6;
        for i in (0..a.pixels.len()).step_by(7) {
            let mut p = a.clone();
            p.pixels[i] += step;
            let mut m = a.clone();
            m.pixels[i] -= step;
            let fd = (objective(&p) - objective(&m)) / (2.0 * step);
            assert!((fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "{i}: {fd} vs {}", grad[i]);
        }
    }
}
