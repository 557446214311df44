//! Monte-Carlo estimators against the closed forms.

use ghostlab::analytics::{g_back, g_max, ordering_gap, snr_high_intensity, snr_low_intensity, snr_thermal};
use ghostlab::estimators::{estimate_cf, PairMoments, estimate_snr, estimate_visibility, ordering_dominance};
use ghostlab::{CorrelationStats, GhostError, GiParams, Regime, TrialBatch};

fn batch(n: u32, m: u32, i: f64, trials: u64, regime: Regime, seed: u64) -> TrialBatch {
    TrialBatch::new(GiParams::new(n, m, i).unwrap(), trials, regime, seed).unwrap()
}

#[test]
fn correlation_means_over_grid() {
    let mut seed = 100;
    for n in 2..=4 {
        for m in [1, 2, 5, 10] {
            for i in [0.1, 1.0, 10.0] {
                seed += 1;
                let p = GiParams::new(n, m, i).unwrap();
                let stats = estimate_cf(&batch(n, m, i, 200_000, Regime::PhotocountFactorial, seed)).unwrap();
                let zmax = (stats.g_max_hat - g_max(&p).unwrap()) / stats.std_errors.g_max;
                let zback = (stats.g_back_hat - g_back(&p).unwrap()) / stats.std_errors.g_back;
                assert!(zmax.abs() < 3.0 && zback.abs() < 3.0, "({n},{m},{i}): {zmax:.2} {zback:.2}");
            }
        }
    }
}

#[test]
fn classical_levels_and_background_variance() {
    let stats = estimate_cf(&batch(2, 1, 1.0, 1_000_000, Regime::ClassicalIntensity, 1)).unwrap();
    assert!((stats.g_max_hat - 2.0).abs() < 3.0 * stats.std_errors.g_max);
    assert!((stats.g_back_hat - 1.0).abs() < 3.0 * stats.std_errors.g_back);
    // <I0^2><I1^2> - I^4 with exponential moments
    assert!((stats.var_back_hat - 3.0).abs() < 3.0 * stats.std_errors.var_back);

    let stats = estimate_cf(&batch(2, 1, 1.0, 1_000_000, Regime::PhotocountFactorial, 2)).unwrap();
    assert!((stats.var_back_hat - 8.0).abs() < 3.0 * stats.std_errors.var_back, "{}", stats.var_back_hat);
}

#[test]
fn visibility_examples() {
    for (n, m, expected, seed) in [(2, 1, 1.0 / 3.0, 3), (4, 1, 0.6, 4), (2, 5, 1.0 / 11.0, 5)] {
        let v = estimate_visibility(&batch(n, m, 1.0, 1_000_000, Regime::ClassicalIntensity, seed)).unwrap();
        assert!((v.value - expected).abs() < 0.01, "({n},{m}): {}", v.value);
    }
}

#[test]
fn snr_agrees_with_closed_form_above_unit_intensity() {
    let mut seed = 500;
    for n in 2..=4 {
        for m in [1, 2, 5, 10] {
            for i in [1.0, 10.0] {
                seed += 1;
                let analytic = snr_thermal(&GiParams::new(n, m, i).unwrap()).unwrap();
                // relative standard error ~ 1 / (snr sqrt(N)); keep 5% at >= 4 se.
                // Fourth order needs more: its noise estimate converges slowly.
                let floor = if n == 4 { 16_000_000 } else { 1_000_000 };
                let trials = ((4.0 / (0.05 * analytic)).powi(2) as u64).max(floor);
                let est = estimate_snr(&batch(n, m, i, trials, Regime::PhotocountFactorial, seed)).unwrap();
                let rel = (est.value / analytic - 1.0).abs();
                assert!(rel < 0.05, "({n},{m},{i}): {} vs {analytic}", est.value);
            }
        }
    }
}

#[test]
fn snr_limits() {
    let est = estimate_snr(&batch(2, 1, 1e6, 1_000_000, Regime::PhotocountFactorial, 7)).unwrap();
    assert!((est.value * 15f64.sqrt() - 1.0).abs() < 0.05, "{}", est.value);

    let low = snr_low_intensity(2, 1, 0.01).unwrap();
    let est = estimate_snr(&batch(2, 1, 0.01, 40_000_000, Regime::PhotocountFactorial, 8)).unwrap();
    assert!((est.value / low - 1.0).abs() < 0.1, "{} vs {low}", est.value);
}

#[test]
fn classical_regime_reaches_shot_noise_free_limit() {
    for (n, m) in [(2, 1), (3, 2), (2, 5)] {
        let est = estimate_snr(&batch(n, m, 1.0, 2_000_000, Regime::ClassicalIntensity, 11)).unwrap();
        let limit: f64 = snr_high_intensity(n, m).unwrap();
        assert!(est.sigma_distance(limit).abs() < 3.0, "({n},{m}): {} vs {limit}", est.value);
    }
}

#[test]
fn standard_errors_are_calibrated() {
    let covered = (0..100)
        .filter(|&seed| {
            let stats = estimate_cf(&batch(2, 1, 1.0, 20_000, Regime::PhotocountFactorial, 10_000 + seed)).unwrap();
            (stats.g_max_hat - 2.0).abs() <= 2.0 * stats.std_errors.g_max
        })
        .count();
    assert!(covered >= 90, "{covered}/100");
}

#[test]
fn ordering_dominance_examples() {
    let p = GiParams::new(2, 1, 0.7).unwrap();
    assert_eq!(ordering_dominance(&p, 10_000, 1).unwrap().value, 0.0);

    let high = ordering_dominance(&GiParams::new(3, 1, 1e3).unwrap(), 1_000_000, 2).unwrap();
    assert!(high.value.abs() < 0.01, "{}", high.value);

    let low = ordering_dominance(&GiParams::new(3, 1, 0.1).unwrap(), 1_000_000, 3).unwrap();
    let predicted: f64 = ordering_gap(3, 0.1).unwrap();
    assert!(low.sigma_distance(predicted).abs() < 3.0, "{} ± {} vs {predicted}", low.value, low.std_error);
}

#[test]
fn degenerate_inputs() {
    assert!(matches!(
        TrialBatch::new(GiParams::new(2, 1, 1.0).unwrap(), 1, Regime::ClassicalIntensity, 0),
        Err(GhostError::InvalidParameter { .. })
    ));
    assert!(GiParams::new(2, 1, 0.0).is_err());

    // constant intensities: peak and background never fluctuate
    let mut constant = PairMoments::new();
    for _ in 0..1000 {
        constant.push(2.0, 1.0);
    }
    assert!(matches!(
        CorrelationStats::from_batches(&[constant; 4]),
        Err(GhostError::DegenerateBatch(_))
    ));
}
