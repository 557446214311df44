//! Multiphoton ghost imaging with thermal light.
//!
//! * [`analytics`]: closed forms for the correlation peak, background,
//!   visibility and SNR of n-th order ghost imaging, plus the SPDC
//!   comparison curve. Generic over [`Real`]; visibility also works on
//!   exact rationals.
//! * [`model`] and [`estimators`]: a discrete-mode thermal source with
//!   Poisson photodetection, and Monte-Carlo estimators of the same
//!   quantities with batch-means standard errors.
//! * [`speckle`]: synthetic speckle frames, streaming ghost-image
//!   reconstruction through a slit mask, and calibration/fit utilities.
//!
//! Monte-Carlo and image code is `f64` throughout. All randomness comes
//! from [`RngStream`], keyed by `(seed, stream)`, so results do not depend
//! on the number of worker threads.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod estimators;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod speckle;

pub use analytics::{AnalyticReport, GiParameters, SpdcParameters};
pub use error::{GhostError, Result};
pub use estimators::{CorrelationStats, Estimate, Regime, TrialBatch};
pub use model::{ModeEnsembleSpec, ModeSample};
pub use rng::{derive_seed, RngStream};
pub use scalar::Real;
pub use speckle::{GhostImage, ImageMetrics, MaskGeometry, SpeckleConfig, SpeckleFrame};

pub type GiParams = GiParameters<f64>;
pub type GiParamsF32 = GiParameters<f32>;
pub type SpdcParams = SpdcParameters<f64>;
pub type SpdcParamsF32 = SpdcParameters<f32>;
pub type Report = AnalyticReport<f64>;
/// Exact rational used for visibility checks.
pub type Rational = num_rational::Ratio<i64>;

/// Crate version, stamped into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
