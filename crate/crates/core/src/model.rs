//! Discrete-mode model of thermal light.
//!
//! Each spatial mode carries an instantaneous intensity that is exponentially
//! distributed and independent of every other mode. Photocounts are drawn
//! from the intensities as a Poisson mixture, which makes each count
//! Bose-Einstein distributed.

use crate::error::{GhostError, Result};
use crate::rng::RngStream;
use crate::scalar::{factorial, ln_factorial, Real, MAX_MOMENT_ORDER};

/// Below this mean Poisson variates are drawn by sequential inversion.
const POISSON_INVERSION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEnsembleSpec {
    mode_count_in_mask: u32,
    has_background_mode: bool,
    mean_intensity: f64,
}

impl ModeEnsembleSpec {
    pub fn new(mode_count_in_mask: u32, has_background_mode: bool, mean_intensity: f64) -> Result<Self> {
        if mode_count_in_mask == 0 {
            return Err(GhostError::invalid("mode_count_in_mask", "must be at least 1"));
        }
        if !(mean_intensity > 0.0 && mean_intensity.is_finite()) {
            return Err(GhostError::invalid(
                "mean_intensity",
                format!("must be positive and finite, got {mean_intensity}"),
            ));
        }
        Ok(Self {
            mode_count_in_mask,
            has_background_mode,
            mean_intensity,
        })
    }

    pub fn mode_count_in_mask(&self) -> u32 {
        self.mode_count_in_mask
    }

    pub fn has_background_mode(&self) -> bool {
        self.has_background_mode
    }

    pub fn mean_intensity(&self) -> f64 {
        self.mean_intensity
    }

    /// Total number of modes in a sample (mask modes plus optional background).
    pub fn total_modes(&self) -> usize {
        self.mode_count_in_mask as usize + usize::from(self.has_background_mode)
    }
}

/// One realization of the mode intensities.
///
/// With a background mode, index 0 holds it and indices `1..=M` the mask
/// modes; without one, the mask modes start at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSample {
    intensities: Vec<f64>,
    counts: Option<Vec<u64>>,
    has_background_mode: bool,
}

impl ModeSample {
    pub fn from_intensities(intensities: Vec<f64>, has_background_mode: bool) -> Result<Self> {
        if intensities.iter().any(|x| !(*x >= 0.0)) {
            return Err(GhostError::invalid("intensities", "must all be nonnegative"));
        }
        if has_background_mode && intensities.len() < 2 || intensities.is_empty() {
            return Err(GhostError::invalid("intensities", "too few modes"));
        }
        Ok(Self {
            intensities,
            counts: None,
            has_background_mode,
        })
    }

    fn zeroed(spec: &ModeEnsembleSpec) -> Self {
        Self {
            intensities: vec![0.0; spec.total_modes()],
            counts: None,
            has_background_mode: spec.has_background_mode,
        }
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn has_background_mode(&self) -> bool {
        self.has_background_mode
    }

    fn mask_start(&self) -> usize {
        usize::from(self.has_background_mode)
    }

    pub fn mask_intensities(&self) -> &[f64] {
        &self.intensities[self.mask_start()..]
    }

    pub fn background_intensity(&self) -> Option<f64> {
        self.has_background_mode.then(|| self.intensities[0])
    }

    pub fn mask_counts(&self) -> Option<&[u64]> {
        let start = self.mask_start();
        self.counts.as_deref().map(|c| &c[start..])
    }

    pub fn background_count(&self) -> Option<u64> {
        match (&self.counts, self.has_background_mode) {
            (Some(c), true) => Some(c[0]),
            _ => None,
        }
    }
}

/// Draws one thermal realization: every mode i.i.d. exponential with mean I.
pub fn sample_thermal(spec: &ModeEnsembleSpec, rng: &mut RngStream) -> ModeSample {
    let mut sample = ModeSample::zeroed(spec);
    sample_thermal_into(spec, rng, &mut sample);
    sample
}

/// In-place variant of [`sample_thermal`] for hot loops; drops any counts.
pub fn sample_thermal_into(spec: &ModeEnsembleSpec, rng: &mut RngStream, sample: &mut ModeSample) {
    sample.intensities.resize(spec.total_modes(), 0.0);
    sample.has_background_mode = spec.has_background_mode;
    sample.counts = None;
    for x in sample.intensities.iter_mut() {
        *x = sample_exponential(spec.mean_intensity, rng);
    }
}

/// Attaches photocounts `K_k ~ Poisson(I_k)` to a sample.
pub fn sample_photocounts(sample: ModeSample, rng: &mut RngStream) -> ModeSample {
    let mut sample = sample;
    sample_photocounts_in_place(&mut sample, rng);
    sample
}

pub fn sample_photocounts_in_place(sample: &mut ModeSample, rng: &mut RngStream) {
    let mut counts = sample.counts.take().unwrap_or_default();
    counts.clear();
    counts.extend(sample.intensities.iter().map(|&x| sample_poisson(x, rng)));
    sample.counts = Some(counts);
}

/// Exponential variate by inversion: `-mean * ln(u)` with `u` in `(0, 1]`.
#[inline]
pub fn sample_exponential(mean: f64, rng: &mut RngStream) -> f64 {
    -mean * rng.uniform_open0().ln()
}

/// Poisson variate: sequential inversion for small means, PTRS above.
pub fn sample_poisson(mean: f64, rng: &mut RngStream) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean < POISSON_INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion(mean: f64, rng: &mut RngStream) -> u64 {
    let u = rng.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        if next == cdf {
            // tail underflow; remaining mass is below f64 resolution
            break;
        }
        cdf = next;
    }
    k
}

// Hörmann's transformed rejection with squeeze.
fn poisson_ptrs(mean: f64, rng: &mut RngStream) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Exact thermal moment `<I_k^l I_k'^m>`.
///
/// Same-mode moments are `(l+m)! I^(l+m)`; distinct modes factorize into
/// `l! m! I^(l+m)`.
pub fn thermal_moment<T: Real>(l: u32, m: u32, same_mode: bool, mean_intensity: T) -> Result<T> {
    let order = l + m;
    if order > MAX_MOMENT_ORDER {
        return Err(GhostError::OrderOverflow {
            order,
            max: MAX_MOMENT_ORDER,
        });
    }
    let coefficient: T = if same_mode {
        factorial(order)?
    } else {
        factorial::<T>(l)? * factorial::<T>(m)?
    };
    let value = coefficient * mean_intensity.powi(order as i32);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GhostError::Overflow { what: "thermal_moment" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_moment_examples() {
        assert_eq!(thermal_moment(1, 1, true, 1.0f64).unwrap(), 2.0);
        assert_eq!(thermal_moment(1, 1, false, 3.0f64).unwrap(), 9.0);
        assert_eq!(thermal_moment(0, 0, true, 0.37f64).unwrap(), 1.0);
        assert_eq!(thermal_moment(0, 0, false, 12.0f32).unwrap(), 1.0);
        assert_eq!(thermal_moment(2, 1, true, 2.0f64).unwrap(), 48.0);
    }

    #[test]
    fn thermal_moment_guards_order() {
        assert!(thermal_moment(20, 20, true, 1.0f64).is_ok());
        assert!(matches!(
            thermal_moment(21, 20, true, 1.0f64),
            Err(GhostError::OrderOverflow { order: 41, .. })
        ));
        assert!(matches!(
            thermal_moment(20, 20, true, 1e10f64),
            Err(GhostError::Overflow { .. })
        ));
    }

    #[test]
    fn spec_rejects_bad_values() {
        assert!(ModeEnsembleSpec::new(0, true, 1.0).is_err());
        assert!(ModeEnsembleSpec::new(1, true, 0.0).is_err());
        assert!(ModeEnsembleSpec::new(1, true, f64::NAN).is_err());
        assert_eq!(ModeEnsembleSpec::new(3, true, 1.0).unwrap().total_modes(), 4);
        assert_eq!(ModeEnsembleSpec::new(3, false, 1.0).unwrap().total_modes(), 3);
    }

    #[test]
    fn zero_intensity_gives_zero_counts() {
        let sample = ModeSample::from_intensities(vec![0.0; 5], true).unwrap();
        let mut rng = RngStream::new(1, 0);
        let counted = sample_photocounts(sample, &mut rng);
        assert_eq!(counted.counts().unwrap(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn sample_layout_follows_background_flag() {
        let spec = ModeEnsembleSpec::new(3, true, 2.0).unwrap();
        let mut rng = RngStream::new(11, 2);
        let s = sample_photocounts(sample_thermal(&spec, &mut rng), &mut rng);
        assert_eq!(s.intensities().len(), 4);
        assert_eq!(s.mask_intensities().len(), 3);
        assert_eq!(s.background_intensity(), Some(s.intensities()[0]));
        assert_eq!(s.counts().unwrap().len(), 4);
        assert_eq!(s.background_count(), Some(s.counts().unwrap()[0]));
        assert!(s.intensities().iter().all(|x| *x >= 0.0));

        let spec = ModeEnsembleSpec::new(3, false, 2.0).unwrap();
        let s = sample_thermal(&spec, &mut rng);
        assert_eq!(s.intensities().len(), 3);
        assert_eq!(s.background_intensity(), None);
        assert!(s.counts().is_none());
    }

    #[test]
    fn negative_intensities_rejected() {
        assert!(ModeSample::from_intensities(vec![1.0, -0.5], true).is_err());
        assert!(ModeSample::from_intensities(vec![1.0], true).is_err());
    }

    fn poisson_mean_var(mean: f64, draws: usize) -> (f64, f64) {
        let mut rng = RngStream::new(99, mean.to_bits());
        let xs: Vec<f64> = (0..draws).map(|_| sample_poisson(mean, &mut rng) as f64).collect();
        let mu = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (draws - 1) as f64;
        (mu, var)
    }

    #[test]
    fn poisson_moments_on_both_branches() {
        let draws = 200_000;
        for mean in [0.05, 1.0, 9.5, 10.0, 37.0, 1e4] {
            let (mu, var) = poisson_mean_var(mean, draws);
            let se_mean = (mean / draws as f64).sqrt();
            // Var of the sample variance for Poisson: (mean + 2 mean^2 (n/(n-1))) / n ~ (mean + 2 mean^2)/n
            let se_var = ((mean + 2.0 * mean * mean) / draws as f64).sqrt();
            assert!((mu - mean).abs() < 4.0 * se_mean, "mean {mean}: {mu}");
            assert!((var - mean).abs() < 4.0 * se_var, "mean {mean}: var {var}");
        }
    }

    #[test]
    fn poisson_ptrs_pmf_matches_at_moderate_mean() {
        let mean = 15.0;
        let draws = 400_000;
        let mut rng = RngStream::new(5, 5);
        let mut hist = vec![0u64; 60];
        for _ in 0..draws {
            let k = sample_poisson(mean, &mut rng) as usize;
            if k < hist.len() {
                hist[k] += 1;
            }
        }
        for (k, &count) in hist.iter().enumerate().take(24).skip(8) {
            let p = (-mean + k as f64 * mean.ln() - ln_factorial(k as u64)).exp();
            let expect = p * draws as f64;
            let obs = count as f64;
            assert!((obs - expect).abs() < 5.0 * expect.sqrt(), "k={k}: {obs} vs {expect}");
        }
    }
}
