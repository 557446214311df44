use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{SpeckleConfig, SpeckleFrame};
use crate::error::Result;
use crate::rng::RngStream;

/// Spectral components whose power is below this fraction of the peak are
/// dropped; their contribution is far below f64 resolution.
const SPECTRUM_CUTOFF: f64 = 1e-24;

/// Synthesizes independent speckle frames by Gaussian spectral filtering.
///
/// The field spectrum is white circular Gaussian noise times a Gaussian
/// amplitude filter. Since the DFT of white circular noise is again white
/// circular noise, the spectral coefficients are drawn directly and one
/// inverse transform yields the field. For a field correlation
/// `exp(-d^2 / (2 s^2))` the intensity autocovariance is `exp(-d^2 / s^2)`,
/// whose FWHM is `2 s sqrt(ln 2)`.
#[derive(Clone)]
pub struct SpeckleGenerator {
    config: SpeckleConfig,
    /// (row, column, amplitude) of the retained spectral components.
    spectrum: Vec<(usize, usize, f64)>,
    active_rows: Vec<usize>,
    row_fft: Arc<dyn Fft<f64>>,
    col_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpeckleGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpeckleGenerator")
            .field("config", &self.config)
            .field("components", &self.spectrum.len())
            .finish()
    }
}

fn frequency(index: usize, len: usize) -> f64 {
    let signed = if index <= len / 2 {
        index as f64
    } else {
        index as f64 - len as f64
    };
    signed / len as f64
}

impl SpeckleGenerator {
    pub fn new(config: &SpeckleConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = (config.width, config.height);
        let field_sigma = config.speckle_fwhm / (2.0 * std::f64::consts::LN_2.sqrt());
        let freq_sigma = 1.0 / (2.0 * std::f64::consts::PI * field_sigma);
        // |H|^2 = exp(-k^2 / (2 sf^2))
        let power = |ky: f64, kx: f64| (-(kx * kx + ky * ky) / (2.0 * freq_sigma * freq_sigma)).exp();

        let mut spectrum = Vec::new();
        for row in 0..h {
            let ky = frequency(row, h);
            for col in 0..w {
                let p = power(ky, frequency(col, w));
                if p >= SPECTRUM_CUTOFF {
                    spectrum.push((row, col, p));
                }
            }
        }
        let total: f64 = spectrum.iter().map(|(_, _, p)| p).sum();
        let scale = config.mean_intensity / total;
        for entry in spectrum.iter_mut() {
            entry.2 = (entry.2 * scale).sqrt();
        }
        let mut active_rows: Vec<usize> = spectrum.iter().map(|(r, _, _)| *r).collect();
        active_rows.dedup();

        let mut planner = FftPlanner::new();
        Ok(Self {
            config: config.clone(),
            spectrum,
            active_rows,
            row_fft: planner.plan_fft_inverse(w),
            col_fft: planner.plan_fft_inverse(h),
        })
    }

    pub fn config(&self) -> &SpeckleConfig {
        &self.config
    }

    /// Frame `index` of the stack; depends only on `(seed, index)`.
    pub fn frame(&self, index: u64) -> SpeckleFrame {
        let (w, h) = (self.config.width, self.config.height);
        let mut rng = RngStream::new(self.config.seed, index);
        let norm = std::f64::consts::FRAC_1_SQRT_2;
        let mut spec = vec![Complex::new(0.0, 0.0); w * h];
        for &(row, col, amp) in &self.spectrum {
            let re = rng.standard_normal() * norm;
            let im = rng.standard_normal() * norm;
            spec[row * w + col] = Complex::new(re * amp, im * amp);
        }
        // rows with no spectral content stay zero under the row transform
        let mut scratch = vec![Complex::new(0.0, 0.0); self.row_fft.get_inplace_scratch_len()];
        for &row in &self.active_rows {
            self.row_fft
                .process_with_scratch(&mut spec[row * w..(row + 1) * w], &mut scratch);
        }
        let mut columns = vec![Complex::new(0.0, 0.0); w * h];
        for row in 0..h {
            for col in 0..w {
                columns[col * h + row] = spec[row * w + col];
            }
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); self.col_fft.get_inplace_scratch_len()];
        self.col_fft.process_with_scratch(&mut columns, &mut scratch);
        let mut pixels = vec![0.0; w * h];
        for col in 0..w {
            for row in 0..h {
                pixels[row * w + col] = columns[col * h + row].norm_sqr();
            }
        }
        SpeckleFrame::from_raw(w, h, pixels)
    }

    /// Frames `start..start + count`, generated in parallel.
    pub fn frames(&self, start: u64, count: usize) -> Vec<SpeckleFrame> {
        (start..start + count as u64)
            .into_par_iter()
            .map(|i| self.frame(i))
            .collect()
    }
}

/// The full frame stack described by `config`.
pub fn generate_frames(config: &SpeckleConfig) -> Result<Vec<SpeckleFrame>> {
    let generator = SpeckleGenerator::new(config)?;
    Ok(generator.frames(0, config.frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SpeckleConfig {
        SpeckleConfig {
            width: 64,
            height: 48,
            speckle_fwhm: 6.0,
            mean_intensity: 2.5,
            frames: 3,
            seed: 9,
            detector_noise: 0.0,
        }
    }

    #[test]
    fn frames_are_reproducible_and_distinct() {
        let g = SpeckleGenerator::new(&config()).unwrap();
        let a = g.frame(1);
        assert_eq!(a, g.frame(1));
        assert_ne!(a, g.frame(2));
        assert_eq!(a.width(), 64);
        assert_eq!(a.height(), 48);
        assert!(a.pixels().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn batch_generation_matches_single_frames() {
        let g = SpeckleGenerator::new(&config()).unwrap();
        let stack = g.frames(5, 3);
        for (k, f) in stack.iter().enumerate() {
            assert_eq!(*f, g.frame(5 + k as u64));
        }
    }

    #[test]
    fn mean_intensity_is_calibrated() {
        let g = SpeckleGenerator::new(&config()).unwrap();
        let total: f64 = (0..200).map(|i| g.frame(i).pixels().iter().sum::<f64>()).sum();
        let mean = total / (200.0 * 64.0 * 48.0);
        // ~ 200 * (64*48)/(6^2) independent cells
        assert!((mean / 2.5 - 1.0).abs() < 0.03, "{mean}");
    }
}
