use rayon::prelude::*;

use super::calibration::MomentCalibrator;
use super::generate::SpeckleGenerator;
use super::ghost::{GhostAccumulator, GhostImage};
use super::io::FrameReader;
use super::{MaskGeometry, SpeckleConfig, SpeckleFrame};
use crate::error::{GhostError, Result};
use crate::rng::RngStream;
use crate::scalar::CompensatedSum;

const FRAME_CHUNK: usize = 16;
/// Stream key for detector noise, kept apart from the speckle streams.
const DETECTOR_NOISE_KEY: u64 = 0x6465_7465_6374_6f72;

/// A sweep of slit widths on one row, reconstructed at several orders from
/// one shared stack of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub config: SpeckleConfig,
    pub slit_row: usize,
    pub slit_widths: Vec<usize>,
    pub orders: Vec<u32>,
}

impl ExperimentPlan {
    pub fn masks(&self) -> Result<Vec<MaskGeometry>> {
        self.slit_widths
            .iter()
            .map(|&w| MaskGeometry::centered_slit(&self.config, self.slit_row, w))
            .collect()
    }
}

pub enum FrameSource {
    Synthetic(SpeckleGenerator),
    Stack(FrameReader),
}

impl FrameSource {
    pub fn synthetic(config: &SpeckleConfig) -> Result<Self> {
        Ok(FrameSource::Synthetic(SpeckleGenerator::new(config)?))
    }

    fn next_chunk(&mut self, start: u64, count: usize) -> Result<Vec<SpeckleFrame>> {
        match self {
            FrameSource::Synthetic(g) => Ok(g.frames(start, count)),
            FrameSource::Stack(reader) => (0..count)
                .map(|_| {
                    reader
                        .next_frame()?
                        .ok_or_else(|| GhostError::Format("frame stack ended early".into()))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub masks: Vec<MaskGeometry>,
    /// `images[slit][k]` is the image of order `plan.orders[k]`.
    pub images: Vec<Vec<GhostImage>>,
    pub calibration: MomentCalibrator,
    pub frames: usize,
}

/// Runs the slit sweep, streaming frames through every accumulator.
///
/// `on_frame` sees each frame in index order (e.g. to persist the stack).
/// Each frame depends only on its index and every pixel sum is taken in
/// frame order, so the outcome is identical for any thread count.
pub fn run_experiment(
    plan: &ExperimentPlan,
    mut source: FrameSource,
    mut on_frame: impl FnMut(u64, &SpeckleFrame) -> Result<()>,
) -> Result<ExperimentOutcome> {
    let config = &plan.config;
    config.validate()?;
    if plan.orders.is_empty() || plan.slit_widths.is_empty() {
        return Err(GhostError::invalid("plan", "needs at least one order and one slit width"));
    }
    let masks = plan.masks()?;
    let (w, h) = (config.width, config.height);
    let mut accumulators = Vec::new();
    for mask in &masks {
        for &order in &plan.orders {
            accumulators.push(GhostAccumulator::new(order, *mask, w, h)?);
        }
    }
    let max_order = plan.orders.iter().copied().max().unwrap_or(2).max(4);
    let mut calibration = MomentCalibrator::new(max_order);

    let mut done = 0usize;
    while done < config.frames {
        let count = FRAME_CHUNK.min(config.frames - done);
        let chunk = source.next_chunk(done as u64, count)?;
        for (offset, frame) in chunk.iter().enumerate() {
            let index = (done + offset) as u64;
            if frame.width() != w || frame.height() != h {
                return Err(GhostError::Format(format!(
                    "frame {index} is {}x{}, expected {w}x{h}",
                    frame.width(),
                    frame.height()
                )));
            }
            on_frame(index, frame)?;
            calibration.push(frame.pixels());

            let (reference, slit_row) = arms(config, frame, index, plan.slit_row);
            let buckets: Vec<f64> = masks
                .iter()
                .map(|m| slit_row[m.slit_columns()].iter().copied().collect::<CompensatedSum>().value())
                .collect();
            let per_mask = plan.orders.len();
            accumulators
                .par_iter_mut()
                .enumerate()
                .for_each(|(k, acc)| acc.add_frame(&reference, buckets[k / per_mask]));
        }
        done += count;
    }

    let per_mask = plan.orders.len();
    let mut images = Vec::with_capacity(masks.len());
    for chunk in accumulators.chunks(per_mask) {
        images.push(chunk.iter().map(GhostAccumulator::finish).collect::<Result<Vec<_>>>()?);
    }
    Ok(ExperimentOutcome {
        masks,
        images,
        calibration,
        frames: done,
    })
}

/// Reference-arm pixels and signal-arm slit row for one frame, with
/// independent detector noise added to each arm when configured.
fn arms<'a>(
    config: &SpeckleConfig,
    frame: &'a SpeckleFrame,
    index: u64,
    slit_row: usize,
) -> (std::borrow::Cow<'a, [f64]>, std::borrow::Cow<'a, [f64]>) {
    use std::borrow::Cow;
    if config.detector_noise == 0.0 {
        return (Cow::Borrowed(frame.pixels()), Cow::Borrowed(frame.row(slit_row)));
    }
    let sigma = config.detector_noise;
    let mut rng = RngStream::new(config.seed ^ DETECTOR_NOISE_KEY, index);
    let reference: Vec<f64> = frame
        .pixels()
        .iter()
        .map(|p| p + sigma * rng.standard_normal())
        .collect();
    let signal: Vec<f64> = frame
        .row(slit_row)
        .iter()
        .map(|p| p + sigma * rng.standard_normal())
        .collect();
    (Cow::Owned(reference), Cow::Owned(signal))
}
