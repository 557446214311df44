use super::{MaskGeometry, SpeckleFrame};
use crate::error::{GhostError, Result};
use crate::scalar::CompensatedSum;

/// Sum of the frame's intensities over the slit.
pub fn bucket_signal(frame: &SpeckleFrame, mask: &MaskGeometry) -> f64 {
    frame.row(mask.slit_row)[mask.slit_columns()]
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .value()
}

/// Running mean and variance of a scalar series (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SignalSeries {
    count: u64,
    mean: f64,
    m2: f64,
}

impl SignalSeries {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Bessel-corrected standard deviation.
    pub fn std_dev(&self) -> f64 {
        (self.m2 / (self.count as f64 - 1.0)).sqrt()
    }
}

/// Per-pixel estimate of `<I_ref(x)^(n-1) B>` over the frames used.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub order: u32,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub frames_used: usize,
    /// Per-frame slit-minus-background signal, present when the image was
    /// accumulated from frames rather than loaded from disk.
    pub frame_series: Option<SignalSeries>,
}

impl GhostImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    fn slit_values<'a>(&'a self, mask: &MaskGeometry) -> impl Iterator<Item = f64> + 'a {
        let row = mask.slit_row * self.width;
        self.values[row + mask.slit_start..row + mask.slit_start + mask.slit_width]
            .iter()
            .copied()
    }

    fn background_values<'a>(&'a self, mask: &MaskGeometry) -> impl Iterator<Item = f64> + 'a {
        let bg = mask.background;
        (bg.row0..bg.row1)
            .flat_map(move |r| self.values[r * self.width + bg.col0..r * self.width + bg.col1].iter())
            .copied()
    }
}

/// Streaming reconstruction of one ghost image.
#[derive(Debug, Clone)]
pub struct GhostAccumulator {
    order: u32,
    mask: MaskGeometry,
    width: usize,
    height: usize,
    sums: Vec<CompensatedSum>,
    series: SignalSeries,
    frames: usize,
}

impl GhostAccumulator {
    pub fn new(order: u32, mask: MaskGeometry, width: usize, height: usize) -> Result<Self> {
        if order < 2 {
            return Err(GhostError::invalid("order", format!("must be at least 2, got {order}")));
        }
        Ok(Self {
            order,
            mask,
            width,
            height,
            sums: vec![CompensatedSum::new(); width * height],
            series: SignalSeries::default(),
            frames: 0,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn mask(&self) -> &MaskGeometry {
        &self.mask
    }

    /// Adds one frame: `reference` is the spatially resolved arm and
    /// `bucket` the signal arm's integrated intensity behind the slit.
    pub fn add_frame(&mut self, reference: &[f64], bucket: f64) {
        debug_assert_eq!(reference.len(), self.sums.len());
        let power = self.order as i32 - 1;
        for (acc, &p) in self.sums.iter_mut().zip(reference) {
            acc.add(p.powi(power) * bucket);
        }

        let w = self.width;
        let row = &reference[self.mask.slit_row * w..(self.mask.slit_row + 1) * w];
        let slit: CompensatedSum = row[self.mask.slit_columns()].iter().map(|p| p.powi(power)).collect();
        let bg = self.mask.background;
        let back: CompensatedSum = (bg.row0..bg.row1)
            .flat_map(|r| reference[r * w + bg.col0..r * w + bg.col1].iter())
            .map(|p| p.powi(power))
            .collect();
        let slit_mean = slit.value() / self.mask.slit_width as f64;
        let back_mean = back.value() / bg.area() as f64;
        self.series.push(bucket * (slit_mean - back_mean));
        self.frames += 1;
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn finish(&self) -> Result<GhostImage> {
        if self.frames < 2 {
            return Err(GhostError::InsufficientFrames {
                needed: 2,
                got: self.frames,
            });
        }
        let n = self.frames as f64;
        Ok(GhostImage {
            order: self.order,
            width: self.width,
            height: self.height,
            values: self.sums.iter().map(|s| s.value() / n).collect(),
            frames_used: self.frames,
            frame_series: Some(self.series),
        })
    }
}

/// Ghost image of `order` from frames in memory; both arms see each frame.
pub fn reconstruct(frames: &[SpeckleFrame], mask: &MaskGeometry, order: u32) -> Result<GhostImage> {
    let first = frames.first().ok_or(GhostError::InsufficientFrames { needed: 2, got: 0 })?;
    let mut acc = GhostAccumulator::new(order, *mask, first.width(), first.height())?;
    for frame in frames {
        if frame.width() != first.width() || frame.height() != first.height() {
            return Err(GhostError::invalid("frames", "frame dimensions differ"));
        }
        acc.add_frame(frame.pixels(), bucket_signal(frame, mask));
    }
    acc.finish()
}

/// How the noise of the slit-minus-background signal is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseEstimator {
    /// Standard deviation along the slit row of background-subtracted values.
    SlitProfile,
    /// Standard deviation of the image over the background region.
    Background,
    /// Standard deviation across frames of the per-frame signal, divided by
    /// `sqrt(N)`.
    FrameSeries,
}

impl NoiseEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseEstimator::SlitProfile => "slit_profile",
            NoiseEstimator::Background => "background",
            NoiseEstimator::FrameSeries => "frame_series",
        }
    }
}

impl std::str::FromStr for NoiseEstimator {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slit_profile" => Ok(NoiseEstimator::SlitProfile),
            "background" => Ok(NoiseEstimator::Background),
            "frame_series" => Ok(NoiseEstimator::FrameSeries),
            other => Err(GhostError::invalid("noise_estimator", format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub order: u32,
    pub estimator: NoiseEstimator,
    pub slit_mean: f64,
    pub background_mean: f64,
    pub signal: f64,
    pub noise: f64,
    pub visibility: f64,
    /// Sample SNR of the N-frame image, `signal / noise`.
    pub snr: f64,
    /// `snr / sqrt(N)`; clamped at zero when no signal is detected.
    pub snr_normalized: f64,
    /// Set when the noise estimate is zero or undefined.
    pub noise_degenerate: bool,
    pub effective_modes: Option<f64>,
    pub g_n_calibration: Vec<f64>,
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    (ss / (n - 1.0)).sqrt()
}

/// Visibility, signal, noise and normalized SNR of a ghost image.
pub fn measure_metrics(image: &GhostImage, mask: &MaskGeometry, estimator: NoiseEstimator) -> Result<ImageMetrics> {
    if mask.slit_width == 0 {
        return Err(GhostError::EmptyRegion("slit"));
    }
    if mask.background.area() == 0 {
        return Err(GhostError::EmptyRegion("background"));
    }
    if mask.slit_row >= image.height
        || mask.slit_start + mask.slit_width > image.width
        || mask.background.row1 > image.height
        || mask.background.col1 > image.width
    {
        return Err(GhostError::invalid("mask", "does not fit the image"));
    }
    let slit: Vec<f64> = image.slit_values(mask).collect();
    let slit_mean = slit.iter().copied().collect::<CompensatedSum>().value() / slit.len() as f64;
    let background_mean = image.background_values(mask).collect::<CompensatedSum>().value()
        / mask.background.area() as f64;
    let signal = slit_mean - background_mean;
    let frames = image.frames_used as f64;

    let noise = match estimator {
        NoiseEstimator::SlitProfile => {
            let profile: Vec<f64> = slit.iter().map(|v| v - background_mean).collect();
            sample_std(&profile)
        }
        NoiseEstimator::Background => {
            let back: Vec<f64> = image.background_values(mask).collect();
            sample_std(&back)
        }
        NoiseEstimator::FrameSeries => {
            let series = image.frame_series.ok_or_else(|| {
                GhostError::invalid("image", "frame-series noise needs an accumulated image")
            })?;
            series.std_dev() / frames.sqrt()
        }
    };

    let total = slit_mean + background_mean;
    let visibility = if total > 0.0 { signal / total } else { 0.0 };
    let noise_degenerate = !(noise > 0.0);
    let (snr, snr_normalized) = if noise_degenerate {
        (0.0, 0.0)
    } else {
        let snr = signal / noise;
        (snr, snr.max(0.0) / frames.sqrt())
    };
    Ok(ImageMetrics {
        order: image.order,
        estimator,
        slit_mean,
        background_mean,
        signal,
        noise,
        visibility,
        snr,
        snr_normalized,
        noise_degenerate,
        effective_modes: None,
        g_n_calibration: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::Rect;
    use super::*;

    fn mask(width: usize) -> MaskGeometry {
        MaskGeometry::new(
            16,
            16,
            2,
            4,
            width,
            Rect {
                row0: 8,
                row1: 16,
                col0: 0,
                col1: 16,
            },
        )
        .unwrap()
    }

    #[test]
    fn bucket_examples() {
        let zero = SpeckleFrame::uniform(16, 16, 0.0).unwrap();
        assert_eq!(bucket_signal(&zero, &mask(5)), 0.0);
        let c = SpeckleFrame::uniform(16, 16, 1.5).unwrap();
        assert_eq!(bucket_signal(&c, &mask(5)), 7.5);
        let mut pixels = vec![0.0; 256];
        pixels[2 * 16 + 4] = 3.25;
        let single = SpeckleFrame::new(16, 16, pixels).unwrap();
        assert_eq!(bucket_signal(&single, &mask(1)), 3.25);
    }

    #[test]
    fn constant_frames_give_flat_image() {
        let frames = vec![SpeckleFrame::uniform(16, 16, 2.0).unwrap(); 5];
        let m = mask(4);
        let img = reconstruct(&frames, &m, 3).unwrap();
        assert!(img.values.iter().all(|v| *v == 4.0 * 8.0));
        for est in [NoiseEstimator::SlitProfile, NoiseEstimator::Background, NoiseEstimator::FrameSeries] {
            let metrics = measure_metrics(&img, &m, est).unwrap();
            assert_eq!(metrics.visibility, 0.0);
            assert!(metrics.noise_degenerate);
            assert_eq!(metrics.snr_normalized, 0.0);
        }
    }

    #[test]
    fn insufficient_frames() {
        let frames = vec![SpeckleFrame::uniform(16, 16, 2.0).unwrap()];
        assert!(matches!(
            reconstruct(&frames, &mask(4), 2),
            Err(GhostError::InsufficientFrames { .. })
        ));
        assert!(reconstruct(&[], &mask(4), 2).is_err());
        let two = vec![SpeckleFrame::uniform(16, 16, 2.0).unwrap(); 2];
        assert!(reconstruct(&two, &mask(4), 1).is_err());
    }

    #[test]
    fn reconstruction_matches_direct_average() {
        let frames: Vec<SpeckleFrame> = (0..4)
            .map(|f| {
                SpeckleFrame::new(16, 16, (0..256).map(|i| ((i * 7 + f * 13) % 11) as f64 * 0.5).collect())
                    .unwrap()
            })
            .collect();
        let m = mask(3);
        let img = reconstruct(&frames, &m, 3).unwrap();
        for &(x, y) in &[(0usize, 0usize), (5, 2), (15, 15)] {
            let direct: f64 = frames
                .iter()
                .map(|f| f.get(x, y).powi(2) * bucket_signal(f, &m))
                .sum::<f64>()
                / 4.0;
            assert!((img.get(x, y) - direct).abs() < 1e-12 * direct.max(1.0));
        }
        let series = img.frame_series.unwrap();
        let metrics = measure_metrics(&img, &m, NoiseEstimator::SlitProfile).unwrap();
        assert!((series.mean() - metrics.signal).abs() < 1e-9 * metrics.signal.abs().max(1.0));
    }

    #[test]
    fn loaded_images_have_no_series() {
        let frames = vec![SpeckleFrame::uniform(16, 16, 2.0).unwrap(); 3];
        let mut img = reconstruct(&frames, &mask(4), 2).unwrap();
        img.frame_series = None;
        assert!(measure_metrics(&img, &mask(4), NoiseEstimator::FrameSeries).is_err());
        assert!(measure_metrics(&img, &mask(4), NoiseEstimator::Background).is_ok());
    }
}
