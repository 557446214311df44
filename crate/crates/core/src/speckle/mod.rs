//! Pseudothermal speckle synthesis and ghost-image reconstruction.
//!
//! Frames are fully developed speckle: the intensity of a circular complex
//! Gaussian field with a Gaussian spatial spectrum. The signal and reference
//! arms see the same frame; a 1-pixel-high slit on one row acts as the mask
//! and its summed intensity is the bucket signal.

mod calibration;
mod experiment;
mod generate;
mod ghost;
pub mod io;

pub use calibration::{
    calibrate_autocorrelation, effective_modes, estimate_effective_modes, fit_visibility_scale,
    measure_autocorrelation_fwhm, model_visibility, MomentCalibrator, VisibilityFit,
    VisibilityPoint, DEFAULT_MODE_SCALE,
};
pub use experiment::{run_experiment, ExperimentOutcome, ExperimentPlan, FrameSource};
pub use generate::{generate_frames, SpeckleGenerator};
pub use ghost::{
    bucket_signal, measure_metrics, reconstruct, GhostAccumulator, GhostImage, ImageMetrics,
    NoiseEstimator, SignalSeries,
};

use crate::error::{GhostError, Result};

/// Everything needed to synthesize a reproducible stack of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleConfig {
    pub width: usize,
    pub height: usize,
    /// FWHM of the intensity autocorrelation peak, in pixels.
    pub speckle_fwhm: f64,
    pub mean_intensity: f64,
    pub frames: usize,
    pub seed: u64,
    /// Standard deviation of additive Gaussian detector noise, applied
    /// independently to each arm. Zero disables it.
    pub detector_noise: f64,
}

impl Default for SpeckleConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            speckle_fwhm: 30.0,
            mean_intensity: 1.0,
            frames: 5000,
            seed: 0,
            detector_noise: 0.0,
        }
    }
}

impl SpeckleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speckle_fwhm >= 2.0 && self.speckle_fwhm.is_finite()) {
            return Err(GhostError::invalid(
                "speckle_fwhm",
                format!("must be at least 2 px, got {}", self.speckle_fwhm),
            ));
        }
        if self.frames < 2 {
            return Err(GhostError::InsufficientFrames {
                needed: 2,
                got: self.frames,
            });
        }
        if !(self.mean_intensity > 0.0 && self.mean_intensity.is_finite()) {
            return Err(GhostError::invalid("mean_intensity", "must be positive and finite"));
        }
        if !(self.detector_noise >= 0.0 && self.detector_noise.is_finite()) {
            return Err(GhostError::invalid("detector_noise", "must be nonnegative"));
        }
        let min = 4.0 * self.speckle_fwhm;
        if (self.width as f64) < min || (self.height as f64) < min {
            return Err(GhostError::GridTooSmall {
                width: self.width,
                height: self.height,
                fwhm: self.speckle_fwhm,
            });
        }
        Ok(())
    }
}

/// One captured pulse: a row-major grid of nonnegative intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl SpeckleFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(GhostError::invalid(
                "pixels",
                format!("expected {} values, got {}", width * height, pixels.len()),
            ));
        }
        if pixels.iter().any(|p| !(*p >= 0.0)) {
            return Err(GhostError::invalid("pixels", "intensities must be nonnegative"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.pixels.iter().map(|p| p * factor).collect(),
        )
    }
}

/// Half-open pixel rectangle `[row0, row1) x [col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.row1.saturating_sub(self.row0) * self.col1.saturating_sub(self.col0)
    }

    pub fn contains_row(&self, row: usize) -> bool {
        (self.row0..self.row1).contains(&row)
    }
}

/// A 1-pixel-high slit plus the background region used for noise and
/// baseline estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskGeometry {
    pub slit_row: usize,
    pub slit_start: usize,
    pub slit_width: usize,
    pub background: Rect,
}

impl MaskGeometry {
    pub fn new(
        width: usize,
        height: usize,
        slit_row: usize,
        slit_start: usize,
        slit_width: usize,
        background: Rect,
    ) -> Result<Self> {
        if slit_width == 0 {
            return Err(GhostError::EmptyRegion("slit"));
        }
        if slit_row >= height || slit_start + slit_width > width {
            return Err(GhostError::invalid("slit", "slit extends beyond the grid"));
        }
        if background.area() == 0 {
            return Err(GhostError::EmptyRegion("background"));
        }
        if background.row1 > height || background.col1 > width {
            return Err(GhostError::invalid("background", "region extends beyond the grid"));
        }
        let columns_overlap =
            background.col0 < slit_start + slit_width && slit_start < background.col1;
        if background.contains_row(slit_row) && columns_overlap {
            return Err(GhostError::invalid("background", "region overlaps the slit"));
        }
        Ok(Self {
            slit_row,
            slit_start,
            slit_width,
            background,
        })
    }

    /// Slit of `slit_width` pixels centred on `slit_row`, with the background
    /// taken as every full row at least three speckle widths away from the
    /// slit row (cyclically, since frames are periodic).
    pub fn centered_slit(config: &SpeckleConfig, slit_row: usize, slit_width: usize) -> Result<Self> {
        if slit_width > config.width {
            return Err(GhostError::invalid("slit_width", "wider than the grid"));
        }
        let start = (config.width - slit_width) / 2;
        let gap = (3.0 * config.speckle_fwhm).ceil() as usize;
        let h = config.height;
        if 2 * gap >= h {
            return Err(GhostError::EmptyRegion("background"));
        }
        // rows r with cyclic distance >= gap form the cyclic interval
        // [slit_row + gap, slit_row + h - gap]; keep its longest unwrapped piece
        let first = slit_row + gap;
        let last = slit_row + h - gap;
        let (row0, row1) = if first >= h {
            (first - h, last - h + 1)
        } else if last < h {
            (first, last + 1)
        } else if h - first > last - h {
            (first, h)
        } else {
            (0, last - h + 1)
        };
        Self::new(
            config.width,
            h,
            slit_row,
            start,
            slit_width,
            Rect {
                row0,
                row1,
                col0: 0,
                col1: config.width,
            },
        )
    }

    pub fn slit_columns(&self) -> std::ops::Range<usize> {
        self.slit_start..self.slit_start + self.slit_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SpeckleConfig {
        SpeckleConfig {
            width: 128,
            height: 128,
            speckle_fwhm: 8.0,
            frames: 4,
            ..SpeckleConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let small = SpeckleConfig {
            width: 31,
            ..config()
        };
        assert!(matches!(small.validate(), Err(GhostError::GridTooSmall { .. })));
        let fine = SpeckleConfig {
            speckle_fwhm: 1.5,
            ..config()
        };
        assert!(fine.validate().is_err());
        let one = SpeckleConfig {
            frames: 1,
            ..config()
        };
        assert!(matches!(one.validate(), Err(GhostError::InsufficientFrames { .. })));
    }

    #[test]
    fn default_background_is_far_from_slit() {
        let c = config();
        for row in [0usize, 10, 64, 100, 127] {
            let m = MaskGeometry::centered_slit(&c, row, 20).unwrap();
            assert!(m.background.area() > 0);
            for r in m.background.row0..m.background.row1 {
                let d = (r as i64 - row as i64).unsigned_abs() as usize;
                let cyclic = d.min(c.height - d);
                assert!(cyclic >= 24, "row {row}: background row {r}");
            }
        }
        let m = MaskGeometry::centered_slit(&c, 10, 20).unwrap();
        assert_eq!(m.slit_columns(), 54..74);
    }

    #[test]
    fn mask_rejects_overlap_and_empty() {
        let bg = Rect {
            row0: 0,
            row1: 10,
            col0: 0,
            col1: 50,
        };
        assert!(MaskGeometry::new(64, 64, 5, 10, 4, bg).is_err());
        assert!(MaskGeometry::new(64, 64, 20, 10, 4, bg).is_ok());
        assert!(matches!(
            MaskGeometry::new(64, 64, 20, 10, 0, bg),
            Err(GhostError::EmptyRegion("slit"))
        ));
        let empty = Rect { row1: 0, ..bg };
        assert!(matches!(
            MaskGeometry::new(64, 64, 20, 10, 4, empty),
            Err(GhostError::EmptyRegion("background"))
        ));
        assert!(MaskGeometry::new(64, 64, 20, 62, 4, bg).is_err());
    }

    #[test]
    fn frames_must_be_nonnegative() {
        assert!(SpeckleFrame::new(2, 1, vec![0.0, -1.0]).is_err());
        assert!(SpeckleFrame::new(2, 2, vec![0.0; 3]).is_err());
        let f = SpeckleFrame::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.get(1, 1), 4.0);
        assert_eq!(f.row(1), &[3.0, 4.0]);
    }
}
