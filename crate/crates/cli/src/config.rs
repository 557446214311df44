//! Run configuration: one JSON document, every field optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ghostlab::speckle::{NoiseEstimator, SpeckleConfig, DEFAULT_MODE_SCALE};
use ghostlab::Regime;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads, 0 = one per core.
    pub threads: usize,
    pub out: PathBuf,
    pub analytic: AnalyticConfig,
    pub mc: McConfig,
    pub image: ImageConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            analytic: AnalyticConfig::default(),
            mc: McConfig::default(),
            image: ImageConfig::default(),
        }
    }
}

/// A swept axis: explicit values or a base-10 log grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Logspace {
        log10_start: f64,
        log10_stop: f64,
        points: usize,
    },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Logspace {
                log10_start,
                log10_stop,
                points,
            } => match points {
                0 => Vec::new(),
                1 => vec![10f64.powf(*log10_start)],
                _ => (0..*points)
                    .map(|k| {
                        let t = k as f64 / (*points - 1) as f64;
                        10f64.powf(log10_start + t * (log10_stop - log10_start))
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    pub orders: Vec<u32>,
    pub modes: Vec<u32>,
    /// Mean intensity per mode; also used as the SPDC mean photon number.
    pub intensities: Axis,
    /// Mode counts for which the SPDC SNR maximum is located.
    pub spdc_peak_modes: Vec<u32>,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            orders: vec![2, 3, 4],
            modes: vec![1, 10],
            intensities: Axis::Logspace {
                log10_start: -2.0,
                log10_stop: 3.0,
                points: 51,
            },
            spdc_peak_modes: vec![1, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub orders: Vec<u32>,
    pub modes: Vec<u32>,
    pub intensities: Axis,
    pub trials: u64,
    pub regime: String,
    /// Largest tolerated |estimate - closed form| in standard errors.
    pub threshold_sigma: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            orders: vec![2, 3, 4],
            modes: vec![1, 2, 5, 10],
            intensities: Axis::Values(vec![0.1, 1.0, 10.0]),
            trials: 1_000_000,
            regime: Regime::PhotocountFactorial.name().to_string(),
            threshold_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
    pub speckle_fwhm: f64,
    pub mean_intensity: f64,
    pub frames: usize,
    /// Standard deviation of additive Gaussian noise on each arm.
    pub detector_noise: f64,
    pub slit_row: usize,
    /// Slit widths in pixels; when empty they follow from `slit_modes`.
    pub slit_widths: Vec<usize>,
    /// Slit widths in modes, converted with `mode_scale`.
    pub slit_modes: Vec<f64>,
    pub mode_scale: f64,
    pub orders: Vec<u32>,
    /// Noise estimator for the SNR-vs-M summary.
    pub noise_estimator: String,
    pub save_frames: bool,
    pub save_images: bool,
    /// Reuse a stored frame stack instead of synthesizing frames.
    pub input_frames: Option<PathBuf>,
}

impl Default for ImageConfig {
    fn default() -> Self {
        let base = SpeckleConfig::default();
        Self {
            width: base.width,
            height: base.height,
            speckle_fwhm: base.speckle_fwhm,
            mean_intensity: base.mean_intensity,
            frames: base.frames,
            detector_noise: base.detector_noise,
            slit_row: 20,
            slit_widths: Vec::new(),
            slit_modes: vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            mode_scale: DEFAULT_MODE_SCALE,
            orders: vec![2, 3, 4],
            noise_estimator: NoiseEstimator::SlitProfile.name().to_string(),
            save_frames: false,
            save_images: true,
            input_frames: None,
        }
    }
}

impl ImageConfig {
    pub fn speckle(&self, seed: u64) -> SpeckleConfig {
        SpeckleConfig {
            width: self.width,
            height: self.height,
            speckle_fwhm: self.speckle_fwhm,
            mean_intensity: self.mean_intensity,
            frames: self.frames,
            seed,
            detector_noise: self.detector_noise,
        }
    }

    pub fn resolved_slit_widths(&self) -> Vec<usize> {
        if !self.slit_widths.is_empty() {
            return self.slit_widths.clone();
        }
        self.slit_modes
            .iter()
            .map(|m| ((m * self.speckle_fwhm * self.mode_scale).round() as usize).max(1))
            .collect()
    }

    pub fn estimator(&self) -> anyhow::Result<NoiseEstimator> {
        Ok(self.noise_estimator.parse()?)
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config file {}", path.display()))
    }

    /// Parses a config; errors carry the line, column and offending field.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow::anyhow!("line {}, column {}: {e}", e.line(), e.column()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let a = &self.analytic;
        check_axis("analytic.orders", &a.orders)?;
        check_axis("analytic.modes", &a.modes)?;
        check_axis("analytic.intensities", &a.intensities.values())?;
        let m = &self.mc;
        check_axis("mc.orders", &m.orders)?;
        check_axis("mc.modes", &m.modes)?;
        check_axis("mc.intensities", &m.intensities.values())?;
        if m.trials < 2 {
            bail!("mc.trials: need at least 2 trials for a variance, got {}", m.trials);
        }
        m.regime.parse::<Regime>().context("mc.regime")?;
        if !(m.threshold_sigma > 0.0) {
            bail!("mc.threshold_sigma must be positive");
        }
        let i = &self.image;
        check_axis("image.orders", &i.orders)?;
        if i.resolved_slit_widths().is_empty() {
            bail!("image: no slit widths (set slit_widths or slit_modes)");
        }
        if !(i.mode_scale > 0.0) {
            bail!("image.mode_scale must be positive");
        }
        i.estimator().context("image.noise_estimator")?;
        i.speckle(self.seed).validate().context("image")?;
        Ok(())
    }

    /// Pretty JSON of the resolved config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The config as embedded in outputs: everything that affects results.
    /// `threads` and `out` are left out so that artifacts do not depend on
    /// where or how wide a run was.
    pub fn to_json_for_outputs(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("threads");
            map.remove("out");
        }
        serde_json::to_string_pretty(&value).expect("config serializes")
    }
}

fn check_axis<T>(name: &str, values: &[T]) -> anyhow::Result<()> {
    if values.is_empty() {
        bail!("{name}: sweep axis is empty");
    }
    Ok(())
}
