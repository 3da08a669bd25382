use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{CoarseConfig, RefinerConfig};
use crate::renderer::{LossConfig, RenderSettings};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub background: [f64; 3],
    pub alpha_cutoff: f64,
    pub taper_band: f64,
    pub dilation: f64,
    pub tile_size: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self::from_settings(&RenderSettings::<f64>::default())
    }
}

impl RenderSection {
    pub fn from_settings(s: &RenderSettings<f64>) -> Self {
        Self {
            background: [s.background.x, s.background.y, s.background.z],
            alpha_cutoff: s.alpha_cutoff,
            taper_band: s.taper_band,
            dilation: s.dilation,
            tile_size: s.tile_size,
        }
    }

    pub fn settings<T: Real>(&self) -> Result<RenderSettings<T>> {
        let s = RenderSettings {
            background: Vector3::from_iterator(self.background.iter().map(|c| T::lit(*c))),
            alpha_cutoff: T::lit(self.alpha_cutoff),
            taper_band: T::lit(self.taper_band),
            dilation: T::lit(self.dilation),
            tile_size: self.tile_size,
            ..RenderSettings::default()
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub alpha_blend: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::<f64>::default();
        Self {
            alpha_blend: d.alpha_blend,
            ssim_window: d.ssim_window,
            ssim_sigma: d.ssim_sigma,
            c1: d.c1,
            c2: d.c2,
        }
    }
}

impl LossSection {
    pub fn config<T: Real>(&self) -> Result<LossConfig<T>> {
        let c = LossConfig {
            alpha_blend: T::lit(self.alpha_blend),
            ssim_window: self.ssim_window,
            ssim_sigma: self.ssim_sigma,
            c1: T::lit(self.c1),
            c2: T::lit(self.c2),
        };
        c.validate()?;
        Ok(c)
    }
}

/// Every tunable of the tracking pipeline, as stored in a TOML file.
/// Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub refiner: RefinerConfig,
    pub coarse: CoarseConfig,
    pub render: RenderSection,
    pub loss: LossSection,
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        self.refiner.validate()?;
        self.coarse.validate()?;
        self.render.settings::<f64>()?;
        self.loss.config::<f64>()?;
        Ok(())
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::parse(path, line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
