use super::{MaskGeometry, SpeckleConfig, SpeckleFrame};
use crate::analytics::golden_section_min;
use crate::error::{GhostError, Result};
use crate::scalar::{factorial, CompensatedSum};

/// Slit width per mode, in units of the speckle FWHM.
pub const DEFAULT_MODE_SCALE: f64 = 1.19;

/// Number of modes behind a slit, `width / (fwhm * scale)`, never below 1.
pub fn effective_modes(slit_width: f64, speckle_fwhm: f64, scale: f64) -> f64 {
    (slit_width / (speckle_fwhm * scale)).max(1.0)
}

pub fn estimate_effective_modes(mask: &MaskGeometry, config: &SpeckleConfig) -> f64 {
    effective_modes(mask.slit_width as f64, config.speckle_fwhm, DEFAULT_MODE_SCALE)
}

/// Pooled raw intensity moments `<I^k>`, `k = 1..=max_order`, over every
/// pixel of every frame pushed.
#[derive(Debug, Clone)]
pub struct MomentCalibrator {
    sums: Vec<CompensatedSum>,
    count: u64,
}

impl MomentCalibrator {
    pub fn new(max_order: u32) -> Self {
        Self {
            sums: vec![CompensatedSum::new(); max_order as usize],
            count: 0,
        }
    }

    pub fn push(&mut self, pixels: &[f64]) {
        let mut frame_sums = vec![0.0; self.sums.len()];
        for &p in pixels {
            let mut power = 1.0;
            for s in frame_sums.iter_mut() {
                power *= p;
                *s += power;
            }
        }
        for (acc, s) in self.sums.iter_mut().zip(frame_sums) {
            acc.add(s);
        }
        self.count += pixels.len() as u64;
    }

    pub fn raw_moment(&self, order: u32) -> f64 {
        self.sums[order as usize - 1].value() / self.count as f64
    }

    /// `F_n = <I^n> / (n! <I>^n)`.
    pub fn factor(&self, order: u32) -> Result<f64> {
        if order == 0 || order as usize > self.sums.len() {
            return Err(GhostError::invalid("order", format!("not tracked: {order}")));
        }
        if self.count == 0 {
            return Err(GhostError::InsufficientFrames { needed: 1, got: 0 });
        }
        let mean = self.raw_moment(1);
        Ok(self.raw_moment(order) / (factorial::<f64>(order)? * mean.powi(order as i32)))
    }
}

/// `F_n = <I^n> / (n! <I>^n)` pooled over all pixels and frames; 1 for
/// ideal thermal statistics.
pub fn calibrate_autocorrelation(frames: &[SpeckleFrame], order: u32) -> Result<f64> {
    if frames.is_empty() {
        return Err(GhostError::InsufficientFrames { needed: 1, got: 0 });
    }
    let mut cal = MomentCalibrator::new(order.max(1));
    for f in frames {
        cal.push(f.pixels());
    }
    cal.factor(order)
}

/// FWHM of the normalized intensity autocovariance along rows, located by
/// linear interpolation of the half-maximum crossing.
pub fn measure_autocorrelation_fwhm(frames: &[SpeckleFrame], max_lag: usize) -> Result<f64> {
    let first = frames.first().ok_or(GhostError::InsufficientFrames { needed: 1, got: 0 })?;
    let w = first.width();
    let max_lag = max_lag.min(w / 2);
    let mut products = vec![CompensatedSum::new(); max_lag + 1];
    let mut total = CompensatedSum::new();
    let mut count = 0u64;
    for frame in frames {
        for y in 0..frame.height() {
            let row = frame.row(y);
            for x in 0..w {
                total.add(row[x]);
                for (lag, acc) in products.iter_mut().enumerate() {
                    acc.add(row[x] * row[(x + lag) % w]);
                }
            }
            count += w as u64;
        }
    }
    let mean = total.value() / count as f64;
    let cov: Vec<f64> = products
        .iter()
        .map(|p| p.value() / count as f64 - mean * mean)
        .collect();
    let half = cov[0] / 2.0;
    for lag in 1..cov.len() {
        if cov[lag] <= half {
            let (a, b) = (cov[lag - 1], cov[lag]);
            let frac = (a - half) / (a - b);
            return Ok(2.0 * ((lag - 1) as f64 + frac));
        }
    }
    Err(GhostError::Domain {
        what: "measure_autocorrelation_fwhm",
        detail: format!("no half-maximum crossing within {max_lag} px"),
    })
}

/// Visibility of the discrete-mode model with measured autocorrelation
/// factors: with `g(n) = F_n n!`, the peak is `F_n n! + (M-1) F_{n-1} (n-1)!`
/// and the background `M F_{n-1} (n-1)!` (in units of `I^n`).
///
/// `factors[k]` is `F_k`; missing entries count as 1. With all factors 1
/// this reduces to `(n-1) / (2M + n - 1)`.
pub fn model_visibility(order: u32, modes: f64, factors: &[f64]) -> f64 {
    let f = |k: u32| if k <= 1 { 1.0 } else { factors.get(k as usize).copied().unwrap_or(1.0) };
    let n = order as f64;
    let peak_excess = n * f(order) - f(order - 1);
    peak_excess / (peak_excess + 2.0 * modes * f(order - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPoint {
    pub order: u32,
    pub slit_width: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityFit {
    pub mode_scale: f64,
    /// `measured / model - 1` per point, in input order.
    pub residuals: Vec<f64>,
    pub max_relative_residual: f64,
}

/// Fits the slit-width-per-mode scale so that the largest relative
/// residual between measured and modelled visibility is minimal.
pub fn fit_visibility_scale(points: &[VisibilityPoint], speckle_fwhm: f64, factors: &[f64]) -> Result<VisibilityFit> {
    if points.is_empty() {
        return Err(GhostError::invalid("points", "nothing to fit"));
    }
    let residuals = |scale: f64| -> Vec<f64> {
        points
            .iter()
            .map(|p| {
                let modes = effective_modes(p.slit_width, speckle_fwhm, scale);
                p.visibility / model_visibility(p.order, modes, factors) - 1.0
            })
            .collect()
    };
    let worst = |log_scale: f64| {
        residuals(log_scale.exp())
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    };
    let log_scale = golden_section_min(worst, 0.1f64.ln(), 10f64.ln(), 120);
    let mode_scale = log_scale.exp();
    let residuals = residuals(mode_scale);
    let max_relative_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(VisibilityFit {
        mode_scale,
        residuals,
        max_relative_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_mode_examples() {
        let config = SpeckleConfig::default();
        assert!((effective_modes(30.0 * 1.19, 30.0, DEFAULT_MODE_SCALE) - 1.0).abs() < 1e-12);
        assert!((effective_modes(10.0 * 30.0 * 1.19, 30.0, DEFAULT_MODE_SCALE) - 10.0).abs() < 1e-12);
        assert_eq!(effective_modes(12.0, 30.0, DEFAULT_MODE_SCALE), 1.0);
        let mask = MaskGeometry::centered_slit(&config, 0, 357).unwrap();
        assert!((estimate_effective_modes(&mask, &config) - 357.0 / 35.7).abs() < 1e-12);
    }

    #[test]
    fn constant_frames_calibrate_to_inverse_factorial() {
        let frames = vec![SpeckleFrame::uniform(8, 8, 3.0).unwrap(); 3];
        assert!((calibrate_autocorrelation(&frames, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((calibrate_autocorrelation(&frames, 3).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(calibrate_autocorrelation(&[], 2).is_err());
    }

    #[test]
    fn model_reduces_to_closed_form() {
        for order in 2..=5 {
            for modes in [1.0, 2.0, 7.0] {
                let expect = (order as f64 - 1.0) / (2.0 * modes + order as f64 - 1.0);
                assert!((model_visibility(order, modes, &[]) - expect).abs() < 1e-15);
            }
        }
        // a weaker n-th order factor lowers the visibility
        assert!(model_visibility(3, 2.0, &[1.0, 1.0, 1.0, 0.9]) < model_visibility(3, 2.0, &[]));
    }

    #[test]
    fn fit_recovers_known_scale() {
        let fwhm = 30.0;
        let points: Vec<VisibilityPoint> = [40.0, 90.0, 200.0, 400.0]
            .iter()
            .flat_map(|&w| {
                (2..=4).map(move |order| VisibilityPoint {
                    order,
                    slit_width: w,
                    visibility: model_visibility(order, effective_modes(w, fwhm, 1.07), &[]),
                })
            })
            .collect();
        let fit = fit_visibility_scale(&points, fwhm, &[]).unwrap();
        assert!((fit.mode_scale - 1.07).abs() < 1e-6, "{}", fit.mode_scale);
        assert!(fit.max_relative_residual < 1e-6);
    }
}
