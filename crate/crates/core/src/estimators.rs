//! Monte-Carlo estimation of ghost-image correlations from mode samples.
//!
//! Each trial draws one [`ModeSample`] and evaluates two statistics on it:
//! the peak statistic (reference detector on a mask mode) and the background
//! statistic (reference detector on the background mode). Both are computed
//! from the same sample so that their covariance enters the noise.
//!
//! Trials are split into fixed batches, one RNG stream per batch. Batches
//! run in parallel and are merged in index order, so results do not depend
//! on the thread count. Batch means also supply the standard errors.

use rayon::prelude::*;

use crate::analytics::GiParameters;
use crate::error::{GhostError, Result};
use crate::model::{
    sample_photocounts_in_place, sample_thermal_into, ModeEnsembleSpec, ModeSample,
};
use crate::rng::RngStream;
use crate::scalar::{falling_factorial, CompensatedSum};

/// Number of batch-means groups used for standard errors.
pub const BATCH_COUNT: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Classical intensities, no shot noise.
    ClassicalIntensity,
    /// Photocounts with plain powers `K^(n-1)`.
    PhotocountPlain,
    /// Photocounts with falling factorials: unbiased for the normally ordered moments.
    PhotocountFactorial,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::ClassicalIntensity => "classical_intensity",
            Regime::PhotocountPlain => "photocount_plain",
            Regime::PhotocountFactorial => "photocount_factorial",
        }
    }

    fn needs_counts(&self) -> bool {
        !matches!(self, Regime::ClassicalIntensity)
    }
}

impl std::str::FromStr for Regime {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical_intensity" | "classical" => Ok(Regime::ClassicalIntensity),
            "photocount_plain" | "plain" => Ok(Regime::PhotocountPlain),
            "photocount_factorial" | "factorial" => Ok(Regime::PhotocountFactorial),
            other => Err(GhostError::invalid("regime", format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialBatch {
    params: GiParameters<f64>,
    trials: u64,
    regime: Regime,
    seed: u64,
}

impl TrialBatch {
    pub fn new(params: GiParameters<f64>, trials: u64, regime: Regime, seed: u64) -> Result<Self> {
        if trials < 2 {
            return Err(GhostError::invalid(
                "trials",
                format!("need at least 2 trials for a variance, got {trials}"),
            ));
        }
        Ok(Self {
            params,
            trials,
            regime,
            seed,
        })
    }

    pub fn params(&self) -> &GiParameters<f64> {
        &self.params
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn batch_count(&self) -> u64 {
        BATCH_COUNT.min(self.trials / 2).max(1)
    }

    fn batch_len(&self, batch: u64) -> u64 {
        let count = self.batch_count();
        self.trials / count + u64::from(batch < self.trials % count)
    }

    fn spec(&self) -> ModeEnsembleSpec {
        ModeEnsembleSpec::new(self.params.modes(), true, self.params.mean_intensity())
            .expect("validated GiParameters form a valid ensemble")
    }
}

/// Streaming first and second moments of a pair `(x, y)`, mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl PairMoments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        let dx2 = x - self.mean_x;
        self.m2_x += dx * dx2;
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dy * dx2;
    }

    pub fn merge(&mut self, other: &PairMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.m2_x += other.m2_x + dx * dx * na * nb / n;
        self.m2_y += other.m2_y + dy * dy * na * nb / n;
        self.c_xy += other.c_xy + dx * dy * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    /// Bessel-corrected variances and covariance.
    pub fn var_x(&self) -> f64 {
        self.m2_x / (self.count as f64 - 1.0)
    }

    pub fn var_y(&self) -> f64 {
        self.m2_y / (self.count as f64 - 1.0)
    }

    pub fn cov(&self) -> f64 {
        self.c_xy / (self.count as f64 - 1.0)
    }
}

/// Value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Distance from `target` in units of the standard error.
    pub fn sigma_distance(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StdErrors {
    pub g_max: f64,
    pub g_back: f64,
    pub var_max: f64,
    pub var_back: f64,
    pub cov: f64,
    pub signal: f64,
    pub noise: f64,
    pub snr: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStats {
    pub trials: u64,
    pub g_max_hat: f64,
    pub g_back_hat: f64,
    pub var_max_hat: f64,
    pub var_back_hat: f64,
    pub cov_hat: f64,
    pub signal: f64,
    pub noise: f64,
    pub snr_hat: f64,
    pub visibility_hat: f64,
    pub std_errors: StdErrors,
}

impl CorrelationStats {
    /// Point estimates from pooled moments; standard errors left at zero.
    fn point(moments: &PairMoments) -> Self {
        let var_max = moments.var_x();
        let var_back = moments.var_y();
        let cov = moments.cov();
        let signal = moments.mean_x() - moments.mean_y();
        let noise = (var_max + var_back - 2.0 * cov).max(0.0).sqrt();
        Self {
            trials: moments.count(),
            g_max_hat: moments.mean_x(),
            g_back_hat: moments.mean_y(),
            var_max_hat: var_max,
            var_back_hat: var_back,
            cov_hat: cov,
            signal,
            noise,
            snr_hat: signal / noise,
            visibility_hat: signal / (moments.mean_x() + moments.mean_y()),
            std_errors: StdErrors::default(),
        }
    }

    /// Pools batch moments and attaches batch-means standard errors.
    pub fn from_batches(batches: &[PairMoments]) -> Result<Self> {
        let mut pooled = PairMoments::new();
        for b in batches {
            pooled.merge(b);
        }
        if pooled.count() < 2 {
            return Err(GhostError::DegenerateBatch("fewer than two trials".into()));
        }
        let mut stats = Self::point(&pooled);
        if stats.noise == 0.0 {
            return Err(GhostError::DegenerateBatch(
                "peak and background statistics have zero spread".into(),
            ));
        }

        let per_batch: Vec<Self> = batches
            .iter()
            .filter(|b| b.count() >= 2)
            .map(Self::point)
            .collect();
        let se = |f: fn(&Self) -> f64| batch_standard_error(per_batch.iter().map(f));
        stats.std_errors = StdErrors {
            g_max: se(|s| s.g_max_hat),
            g_back: se(|s| s.g_back_hat),
            var_max: se(|s| s.var_max_hat),
            var_back: se(|s| s.var_back_hat),
            cov: se(|s| s.cov_hat),
            signal: se(|s| s.signal),
            noise: se(|s| s.noise),
            snr: se(|s| s.snr_hat),
            visibility: se(|s| s.visibility_hat),
        };
        Ok(stats)
    }
}

fn batch_standard_error(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.filter(|v| v.is_finite()).collect();
    let k = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Peak and background statistics of one sample.
///
/// The factorial regime evaluates the normally ordered peak operator, whose
/// same-mode term is `K_1^(n)` (falling) rather than `K_1^(n-1) K_1`.
pub fn trial_statistics(sample: &ModeSample, order: u32, regime: Regime) -> Result<(f64, f64)> {
    if !sample.has_background_mode() {
        return Err(GhostError::invalid("sample", "a background mode is required"));
    }
    let power = order - 1;
    match regime {
        Regime::ClassicalIntensity => {
            let mask = sample.mask_intensities();
            let bucket: CompensatedSum = mask.iter().copied().collect();
            let bucket = bucket.value();
            let reference_peak = mask[0].powi(power as i32);
            let reference_back = sample.intensities()[0].powi(power as i32);
            Ok((reference_peak * bucket, reference_back * bucket))
        }
        Regime::PhotocountPlain | Regime::PhotocountFactorial => {
            let counts = sample
                .counts()
                .ok_or_else(|| GhostError::invalid("sample", "photocount regime needs counts"))?;
            let (back, mask) = (counts[0], &counts[1..]);
            let others: u64 = mask[1..].iter().sum();
            if regime == Regime::PhotocountPlain {
                let bucket = (mask[0] + others) as f64;
                Ok((
                    (mask[0] as f64).powi(power as i32) * bucket,
                    (back as f64).powi(power as i32) * bucket,
                ))
            } else {
                let bucket = (mask[0] + others) as f64;
                let peak = falling_factorial(mask[0], order)
                    + falling_factorial(mask[0], power) * others as f64;
                Ok((peak, falling_factorial(back, power) * bucket))
            }
        }
    }
}

fn run_batch(batch: &TrialBatch, index: u64) -> PairMoments {
    let spec = batch.spec();
    let mut rng = RngStream::new(batch.seed, index);
    let mut sample = ModeSample::from_intensities(vec![0.0; spec.total_modes()], true)
        .expect("zero intensities are valid");
    let mut moments = PairMoments::new();
    let order = batch.params.order();
    for _ in 0..batch.batch_len(index) {
        sample_thermal_into(&spec, &mut rng, &mut sample);
        if batch.regime.needs_counts() {
            sample_photocounts_in_place(&mut sample, &mut rng);
        }
        let (peak, back) =
            trial_statistics(&sample, order, batch.regime).expect("sample layout matches regime");
        moments.push(peak, back);
    }
    moments
}

fn run_batches(batch: &TrialBatch) -> Vec<PairMoments> {
    (0..batch.batch_count())
        .into_par_iter()
        .map(|i| run_batch(batch, i))
        .collect()
}

/// Monte-Carlo estimate of the peak/background correlations and derived
/// signal, noise, SNR and visibility.
pub fn estimate_cf(batch: &TrialBatch) -> Result<CorrelationStats> {
    CorrelationStats::from_batches(&run_batches(batch))
}

pub fn estimate_visibility(batch: &TrialBatch) -> Result<Estimate> {
    let stats = estimate_cf(batch)?;
    Ok(Estimate {
        value: stats.visibility_hat,
        std_error: stats.std_errors.visibility,
    })
}

pub fn estimate_snr(batch: &TrialBatch) -> Result<Estimate> {
    let stats = estimate_cf(batch)?;
    Ok(Estimate {
        value: stats.snr_hat,
        std_error: stats.std_errors.snr,
    })
}

/// Relative excess of the plain-power correlation over the normally ordered
/// one, `<K_0^(n-1) B> / <K_0^(n-1, falling) B> - 1`, both evaluated on the
/// same photocount samples with the reference on the background mode.
///
/// The standard error comes from the delta method on the pooled moments.
pub fn ordering_dominance(params: &GiParameters<f64>, trials: u64, seed: u64) -> Result<Estimate> {
    let batch = TrialBatch::new(*params, trials, Regime::PhotocountPlain, seed)?;
    let order = params.order();
    let spec = batch.spec();
    let parts: Vec<PairMoments> = (0..batch.batch_count())
        .into_par_iter()
        .map(|index| {
            let mut rng = RngStream::new(seed, index);
            let mut sample = ModeSample::from_intensities(vec![0.0; spec.total_modes()], true)
                .expect("zero intensities are valid");
            let mut moments = PairMoments::new();
            for _ in 0..batch.batch_len(index) {
                sample_thermal_into(&spec, &mut rng, &mut sample);
                sample_photocounts_in_place(&mut sample, &mut rng);
                let counts = sample.counts().expect("counts were just drawn");
                let bucket = counts[1..].iter().sum::<u64>() as f64;
                let reference = counts[0];
                moments.push(
                    (reference as f64).powi(order as i32 - 1) * bucket,
                    falling_factorial(reference, order - 1) * bucket,
                );
            }
            moments
        })
        .collect();
    let mut pooled = PairMoments::new();
    for p in &parts {
        pooled.merge(p);
    }
    if pooled.mean_y() == 0.0 {
        return Err(GhostError::DegenerateBatch(
            "no trial produced a nonzero normally ordered statistic".into(),
        ));
    }
    let ratio = pooled.mean_x() / pooled.mean_y();
    let linearized = pooled.var_x() - 2.0 * ratio * pooled.cov() + ratio * ratio * pooled.var_y();
    Ok(Estimate {
        value: ratio - 1.0,
        std_error: (linearized.max(0.0) / pooled.count() as f64).sqrt() / pooled.mean_y(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, m: u32, i: f64) -> GiParameters<f64> {
        GiParameters::new(n, m, i).unwrap()
    }

    #[test]
    fn batch_requires_two_trials() {
        assert!(TrialBatch::new(params(2, 1, 1.0), 1, Regime::ClassicalIntensity, 0).is_err());
        assert!(TrialBatch::new(params(2, 1, 1.0), 2, Regime::ClassicalIntensity, 0).is_ok());
    }

    #[test]
    fn batch_lengths_cover_all_trials() {
        for trials in [2u64, 3, 199, 200, 201, 1_000_003] {
            let b = TrialBatch::new(params(2, 1, 1.0), trials, Regime::ClassicalIntensity, 0).unwrap();
            let total: u64 = (0..b.batch_count()).map(|i| b.batch_len(i)).sum();
            assert_eq!(total, trials);
        }
    }

    #[test]
    fn pair_moments_merge_matches_sequential() {
        let xs: Vec<(f64, f64)> = (0..1000)
            .map(|i| {
                let t = i as f64;
                ((t * 0.37).sin() * 5.0 + t * 1e-3, (t * 0.11).cos() + 2.0)
            })
            .collect();
        let mut whole = PairMoments::new();
        xs.iter().for_each(|&(x, y)| whole.push(x, y));
        let mut left = PairMoments::new();
        let mut right = PairMoments::new();
        xs[..317].iter().for_each(|&(x, y)| left.push(x, y));
        xs[317..].iter().for_each(|&(x, y)| right.push(x, y));
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        for (a, b) in [
            (left.mean_x(), whole.mean_x()),
            (left.var_x(), whole.var_x()),
            (left.var_y(), whole.var_y()),
            (left.cov(), whole.cov()),
        ] {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn noise_identity_holds() {
        let b = TrialBatch::new(params(3, 2, 0.7), 20_000, Regime::PhotocountFactorial, 4).unwrap();
        let s = estimate_cf(&b).unwrap();
        let lhs = s.noise * s.noise;
        let rhs = s.var_max_hat + s.var_back_hat - 2.0 * s.cov_hat;
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        assert_eq!(s.snr_hat, s.signal / s.noise);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let sample = ModeSample::from_intensities(vec![1.0; 3], true).unwrap();
        let (peak, back) = trial_statistics(&sample, 2, Regime::ClassicalIntensity).unwrap();
        let mut m = PairMoments::new();
        for _ in 0..10 {
            m.push(peak, back);
        }
        assert!(matches!(
            CorrelationStats::from_batches(&[m]),
            Err(GhostError::DegenerateBatch(_))
        ));
    }

    #[test]
    fn trial_statistics_by_regime() {
        let mut sample = ModeSample::from_intensities(vec![2.0, 3.0, 1.0], true).unwrap();
        // classical: n=3, peak 3^2 * 4, back 2^2 * 4
        assert_eq!(trial_statistics(&sample, 3, Regime::ClassicalIntensity).unwrap(), (36.0, 16.0));
        assert!(trial_statistics(&sample, 3, Regime::PhotocountPlain).is_err());

        let mut rng = RngStream::new(0, 0);
        sample_photocounts_in_place(&mut sample, &mut rng);
        let counts = sample.counts().unwrap().to_vec();
        let (k0, k1, k2) = (counts[0], counts[1], counts[2]);
        let bucket = (k1 + k2) as f64;
        assert_eq!(
            trial_statistics(&sample, 3, Regime::PhotocountPlain).unwrap(),
            ((k1 as f64).powi(2) * bucket, (k0 as f64).powi(2) * bucket)
        );
        let expected_peak = falling_factorial(k1, 3) + falling_factorial(k1, 2) * k2 as f64;
        assert_eq!(
            trial_statistics(&sample, 3, Regime::PhotocountFactorial).unwrap(),
            (expected_peak, falling_factorial(k0, 2) * bucket)
        );
    }

    #[test]
    fn factorial_peak_is_normally_ordered_product() {
        // K^(n-1 falling) * (K - (n-1)) == K^(n falling) for every K
        for k in 0..12u64 {
            for n in 2..6u32 {
                let lhs = falling_factorial(k, n - 1) * (k as f64 - (n - 1) as f64);
                assert_eq!(lhs, falling_factorial(k, n));
            }
        }
    }

    #[test]
    fn results_independent_of_thread_count() {
        let b = TrialBatch::new(params(2, 3, 1.5), 50_000, Regime::PhotocountFactorial, 77).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_cf(&b).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn ordering_gap_vanishes_for_second_order() {
        let e = ordering_dominance(&params(2, 1, 0.5), 10_000, 3).unwrap();
        assert_eq!(e.value, 0.0);
    }
}
