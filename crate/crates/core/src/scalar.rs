//! Scalar abstraction and exact combinatorics shared by the closed forms.
//!
//! Every closed-form routine is generic over [`Real`], which is satisfied by
//! `f32` and `f64`. Integer-valued coefficients (factorials, Stirling numbers,
//! multinomials) are computed exactly in `u128` and converted to the scalar
//! type only once, so the cancellations in the SNR bracket start from exact
//! inputs.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

use crate::error::{GhostError, Result};

/// Floating-point scalar usable by the analytic formulas.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

/// Largest `l + m` accepted by moment and factorial routines.
pub const MAX_MOMENT_ORDER: u32 = 40;

/// Largest `n` with `n!` representable in a `u128`.
const MAX_EXACT_FACTORIAL: u32 = 34;

pub(crate) fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in every Real")
}

pub(crate) fn cast_u128<T: Real>(x: u128) -> T {
    T::from_u128(x).expect("u128 is representable in every Real")
}

/// `n!` as an exact integer, `None` once it no longer fits in `u128`.
pub fn factorial_exact(n: u32) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// `n!` converted to `T`, guarded at [`MAX_MOMENT_ORDER`].
pub fn factorial<T: Real>(n: u32) -> Result<T> {
    if n > MAX_MOMENT_ORDER {
        return Err(GhostError::OrderOverflow {
            order: n,
            max: MAX_MOMENT_ORDER,
        });
    }
    let exact_part = n.min(MAX_EXACT_FACTORIAL);
    let mut value: T = cast_u128(factorial_exact(exact_part).expect("34! fits in u128"));
    for k in exact_part + 1..=n {
        value = value * cast::<T>(k as f64);
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GhostError::Overflow { what: "factorial" })
    }
}

/// Falling factorial `x (x-1) ... (x-j+1)` of a nonnegative integer.
///
/// Returns 0 whenever `j > x`.
pub fn falling_factorial(x: u64, j: u32) -> f64 {
    let mut acc = 1.0;
    for t in 0..j as u64 {
        if t >= x {
            return 0.0;
        }
        acc *= (x - t) as f64;
    }
    acc
}

/// Stirling numbers of the second kind `S(n, k)` for `k = 0..=n`.
///
/// `None` if an entry overflows `u128` (not before n = 60 or so).
pub fn stirling2_row(n: u32) -> Option<Vec<u128>> {
    let n = n as usize;
    let mut row = vec![0u128; n + 1];
    row[0] = 1;
    for i in 1..=n {
        // S(i, k) = k S(i-1, k) + S(i-1, k-1), updated right to left
        for k in (1..=i).rev() {
            let prev = if k < i { row[k] } else { 0 };
            row[k] = (k as u128).checked_mul(prev)?.checked_add(row[k - 1])?;
        }
        row[0] = 0;
    }
    Some(row)
}

/// Multinomial coefficient `(a + b + c)! / (a! b! c!)`, exactly.
pub fn multinomial3(a: u32, b: u32, c: u32) -> Option<u128> {
    let binom = |n: u32, k: u32| -> Option<u128> {
        let k = k.min(n - k);
        let mut acc = 1u128;
        for i in 0..k {
            acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
        }
        Some(acc)
    };
    binom(a + b + c, a)?.checked_mul(binom(b + c, b)?)
}

/// `ln(k!)`, exact summation for small `k` and a Stirling series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
