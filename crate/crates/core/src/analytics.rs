//! Closed forms for n-th order thermal ghost imaging and the SPDC baseline.
//!
//! All functions are generic over the scalar type. Integer coefficients are
//! formed exactly (see [`crate::scalar`]) before conversion.

use num_traits::{FromPrimitive, Num};

use crate::error::{GhostError, Result};
use crate::scalar::{cast, cast_u128, factorial, multinomial3, stirling2_row, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiParameters<T> {
    order: u32,
    modes: u32,
    mean_intensity: T,
}

impl<T: Real> GiParameters<T> {
    pub fn new(order: u32, modes: u32, mean_intensity: T) -> Result<Self> {
        check_order_modes(order, modes)?;
        if !(mean_intensity > T::zero() && mean_intensity.is_finite()) {
            return Err(GhostError::invalid(
                "mean_intensity",
                format!("must be positive and finite, got {mean_intensity:?}"),
            ));
        }
        Ok(Self {
            order,
            modes,
            mean_intensity,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn modes(&self) -> u32 {
        self.modes
    }

    pub fn mean_intensity(&self) -> T {
        self.mean_intensity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdcParameters<T> {
    mean_photons: T,
    modes: u32,
}

impl<T: Real> SpdcParameters<T> {
    pub fn new(mean_photons: T, modes: u32) -> Result<Self> {
        if !(mean_photons >= T::zero() && mean_photons.is_finite()) {
            return Err(GhostError::invalid(
                "mean_photons",
                format!("must be nonnegative and finite, got {mean_photons:?}"),
            ));
        }
        if modes == 0 {
            return Err(GhostError::invalid("modes", "must be at least 1"));
        }
        Ok(Self { mean_photons, modes })
    }

    pub fn mean_photons(&self) -> T {
        self.mean_photons
    }

    pub fn modes(&self) -> u32 {
        self.modes
    }
}

fn check_order_modes(order: u32, modes: u32) -> Result<()> {
    if order < 2 {
        return Err(GhostError::invalid("order", format!("must be at least 2, got {order}")));
    }
    if modes == 0 {
        return Err(GhostError::invalid("modes", "must be at least 1"));
    }
    Ok(())
}

fn finite<T: Real>(value: T, what: &'static str) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GhostError::Overflow { what })
    }
}

/// Peak of the ghost image, `(n-1)! (M+n-1) I^n`.
pub fn g_max<T: Real>(params: &GiParameters<T>) -> Result<T> {
    let n = params.order;
    let value = factorial::<T>(n - 1)?
        * cast::<T>((params.modes + n - 1) as f64)
        * params.mean_intensity.powi(n as i32);
    finite(value, "g_max")
}

/// Background level of the ghost image, `(n-1)! M I^n`.
pub fn g_back<T: Real>(params: &GiParameters<T>) -> Result<T> {
    let n = params.order;
    let value = factorial::<T>(n - 1)?
        * cast::<T>(params.modes as f64)
        * params.mean_intensity.powi(n as i32);
    finite(value, "g_back")
}

/// Visibility `(2M/(n-1) + 1)^-1`, evaluated as `(n-1)/(2M+n-1)` so that
/// rational scalars are exact and floats are correctly rounded.
pub fn visibility<T>(order: u32, modes: u32) -> Result<T>
where
    T: Num + FromPrimitive,
{
    check_order_modes(order, modes)?;
    let numerator = T::from_u32(order - 1).expect("small integers are representable");
    let denominator = T::from_u32(2 * modes + order - 1).expect("small integers are representable");
    Ok(numerator / denominator)
}

/// Visibility computed from a peak and a background level.
pub fn visibility_from_levels<T: Real>(g_max: T, g_back: T) -> T {
    (g_max - g_back) / (g_max + g_back)
}

/// `(2n-i-2)! / ([(n-i-1)!]^2 i!)` for `i = 0..n`, exact.
fn noise_weights(order: u32) -> Result<Vec<u128>> {
    (0..order)
        .map(|i| {
            let k = order - i - 1;
            multinomial3(k, k, i).ok_or(GhostError::OrderOverflow {
                order: 2 * order - 2,
                max: crate::scalar::MAX_MOMENT_ORDER,
            })
        })
        .collect()
}

/// Variance of the background correlation in the photocount (quantum) picture.
pub fn var_g_back<T: Real>(params: &GiParameters<T>) -> Result<T> {
    let n = params.order;
    let m: T = cast(params.modes as f64);
    let i_mean = params.mean_intensity;
    let inv = i_mean.recip();
    let weights = noise_weights(n)?;
    let mut series = T::zero();
    let mut inv_pow = T::one();
    for w in &weights {
        series = series + cast_u128::<T>(*w) * inv_pow;
        inv_pow = inv_pow * inv;
    }
    let bracket = series * m * (m + T::one() + inv) - m * m;
    let prefactor = factorial::<T>(n - 1)?.powi(2) * i_mean.powi(2 * n as i32);
    finite(prefactor * bracket, "var_g_back")
}

/// The bracket inside the thermal SNR expression; SNR = (n-1) / sqrt(bracket).
pub fn snr_thermal_bracket<T: Real>(params: &GiParameters<T>) -> Result<T> {
    let n = params.order;
    let nf: T = cast(n as f64);
    let m: T = cast(params.modes as f64);
    let one = T::one();
    let two: T = cast(2.0);
    let inv = params.mean_intensity.recip();
    let weights = noise_weights(n)?;

    let mut series = T::zero();
    let mut inv_pow = T::one();
    for (i, w) in weights.iter().enumerate() {
        let i: T = cast(i as f64);
        let two_n_i = two * nf - i;
        let n_minus_i = nf - i;
        let brace = nf * nf * two_n_i * (two_n_i - one) / (n_minus_i * n_minus_i)
            + two * (m - one) * nf * (two_n_i - one) / n_minus_i
            + two * m * m
            + (two * m - one) * inv;
        series = series + cast_u128::<T>(*w) * inv_pow * brace;
        inv_pow = inv_pow * inv;
    }
    let tail = nf * nf * inv.powi(n as i32) + two * (one - m - nf * nf) * inv
        - (m - one) * (m + cast::<T>(4.0) * nf - one)
        - m * m
        - cast::<T>(3.0) * nf * nf;
    finite(series + tail, "snr_thermal")
}

/// Signal-to-noise ratio of the n-th order thermal ghost image.
///
/// Errors with [`GhostError::Domain`] when the bracket is not positive.
pub fn snr_thermal<T: Real>(params: &GiParameters<T>) -> Result<T> {
    let bracket = snr_thermal_bracket(params)?;
    if !(bracket > T::zero()) {
        return Err(GhostError::Domain {
            what: "snr_thermal",
            detail: format!("noise bracket is {bracket:?}"),
        });
    }
    Ok(cast::<T>((params.order - 1) as f64) / bracket.sqrt())
}

/// Leading low-intensity behaviour of [`snr_thermal`]:
/// `(n-1) I^(n/2) / sqrt(2M - 1 + n^2)`.
///
/// Accepts `I = 0` (returns 0).
pub fn snr_low_intensity<T: Real>(order: u32, modes: u32, mean_intensity: T) -> Result<T> {
    Ok(snr_low_intensity_unrooted(order, modes, mean_intensity)?
        * (low_intensity_denominator::<T>(order, modes)).sqrt())
}

/// The low-intensity expression without the square root on its denominator,
/// `(n-1) I^(n/2) / (2M - 1 + n^2)`.
///
/// This is the form commonly quoted for the limit. It does not agree with
/// [`snr_thermal`] as `I -> 0` (the ratio tends to `sqrt(2M - 1 + n^2)`);
/// kept for comparison only.
pub fn snr_low_intensity_unrooted<T: Real>(order: u32, modes: u32, mean_intensity: T) -> Result<T> {
    check_order_modes(order, modes)?;
    if !(mean_intensity >= T::zero() && mean_intensity.is_finite()) {
        return Err(GhostError::invalid(
            "mean_intensity",
            format!("must be nonnegative and finite, got {mean_intensity:?}"),
        ));
    }
    let half_n: T = cast(order as f64 / 2.0);
    Ok(mean_intensity.powf(half_n) * cast::<T>((order - 1) as f64)
        / low_intensity_denominator::<T>(order, modes))
}

fn low_intensity_denominator<T: Real>(order: u32, modes: u32) -> T {
    cast((2 * modes as u64 - 1 + (order as u64).pow(2)) as f64)
}

/// High-intensity saturation value of [`snr_thermal`].
pub fn snr_high_intensity<T: Real>(order: u32, modes: u32) -> Result<T> {
    check_order_modes(order, modes)?;
    let n: T = cast(order as f64);
    let m: T = cast(modes as f64);
    let one = T::one();
    let two: T = cast(2.0);
    let central = cast_u128::<T>(noise_weights(order)?[0]);
    let bracket = two * central * ((two * n - one) * (n + m - one) + m * m)
        - two * (m - one) * (m + two * n)
        - cast::<T>(3.0) * n * n
        - one;
    if !(bracket > T::zero()) {
        return Err(GhostError::Domain {
            what: "snr_high_intensity",
            detail: format!("noise bracket is {bracket:?}"),
        });
    }
    finite((n - one) / bracket.sqrt(), "snr_high_intensity")
}

/// SNR of second-order ghost imaging with SPDC biphotons.
pub fn snr_spdc<T: Real>(params: &SpdcParameters<T>) -> T {
    let m = params.mean_photons;
    let modes: T = cast(params.modes as f64);
    let one = T::one();
    let two: T = cast(2.0);
    let seven: T = cast(7.0);
    let denominator = one
        + seven * m
        + seven * m * m
        + two * modes * m * (cast::<T>(3.0) * m + two)
        + two * modes * modes * m * m;
    (m * (m + one)).sqrt() / denominator.sqrt()
}

/// Large-`m` limit of [`snr_spdc`], `1/sqrt(7 + 6M + 2M^2)`.
pub fn snr_spdc_limit<T: Real>(modes: u32) -> Result<T> {
    if modes == 0 {
        return Err(GhostError::invalid("modes", "must be at least 1"));
    }
    let m: T = cast(modes as f64);
    Ok((cast::<T>(7.0) + cast::<T>(6.0) * m + cast::<T>(2.0) * m * m)
        .sqrt()
        .recip())
}

/// Location and height of the interior maximum of [`snr_spdc`] over `m`.
///
/// Golden-section search in `ln m` over `[1e-6, 1e4]`.
pub fn snr_spdc_peak<T: Real>(modes: u32) -> Result<(T, T)> {
    if modes == 0 {
        return Err(GhostError::invalid("modes", "must be at least 1"));
    }
    let objective = |log_m: T| {
        let params = SpdcParameters {
            mean_photons: log_m.exp(),
            modes,
        };
        -snr_spdc(&params)
    };
    let log_m = golden_section_min(objective, cast::<T>(1e-6).ln(), cast::<T>(1e4).ln(), 200);
    let m = log_m.exp();
    Ok((m, snr_spdc(&SpdcParameters { mean_photons: m, modes })))
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, iterations: usize) -> T {
    let ratio: T = cast((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    (a + b) / cast(2.0)
}

/// Integer expansion coefficients `C_2..=C_n` of the plain reference-arm
/// power `K^(n-1)` into falling factorials: `C_{j+1} = S(n-1, j)`.
pub fn ordering_coefficients_exact(order: u32) -> Result<Vec<u128>> {
    if order < 2 {
        return Err(GhostError::invalid("order", format!("must be at least 2, got {order}")));
    }
    let row = stirling2_row(order - 1).ok_or(GhostError::OrderOverflow {
        order,
        max: crate::scalar::MAX_MOMENT_ORDER,
    })?;
    Ok(row[1..].to_vec())
}

pub fn ordering_coefficients<T: Real>(order: u32) -> Result<Vec<T>> {
    Ok(ordering_coefficients_exact(order)?
        .into_iter()
        .map(cast_u128)
        .collect())
}

/// Plain moment `E[K^p]` of a Bose-Einstein count with mean `I`,
/// `sum_j S(p, j) j! I^j`.
pub fn bose_einstein_plain_moment<T: Real>(power: u32, mean_intensity: T) -> Result<T> {
    let row = stirling2_row(power).ok_or(GhostError::OrderOverflow {
        order: power,
        max: crate::scalar::MAX_MOMENT_ORDER,
    })?;
    let mut total = T::zero();
    for (j, s) in row.iter().enumerate() {
        if *s != 0 {
            total = total + cast_u128::<T>(*s) * factorial::<T>(j as u32)? * mean_intensity.powi(j as i32);
        }
    }
    finite(total, "bose_einstein_plain_moment")
}

/// Predicted relative excess of the plain-moment correlation over the
/// normally ordered one for reference and bucket on distinct modes:
/// `E[K^(n-1)] / ((n-1)! I^(n-1)) - 1`.
pub fn ordering_gap<T: Real>(order: u32, mean_intensity: T) -> Result<T> {
    if order < 2 {
        return Err(GhostError::invalid("order", format!("must be at least 2, got {order}")));
    }
    let plain = bose_einstein_plain_moment(order - 1, mean_intensity)?;
    let normal = factorial::<T>(order - 1)? * mean_intensity.powi(order as i32 - 1);
    finite(plain / normal - T::one(), "ordering_gap")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticReport<T> {
    pub g_max: T,
    pub g_back: T,
    pub visibility: T,
    pub var_back: T,
    pub snr: T,
}

impl<T: Real> AnalyticReport<T> {
    pub fn evaluate(params: &GiParameters<T>) -> Result<Self> {
        Ok(Self {
            g_max: g_max(params)?,
            g_back: g_back(params)?,
            visibility: visibility(params.order, params.modes)?,
            var_back: var_g_back(params)?,
            snr: snr_thermal(params)?,
        })
    }
}
