use std::path::Path;

use anyhow::Context;
use ghostlab::speckle::io::{write_ghost_image, write_pgm_file, FrameReader, FrameWriter};
use ghostlab::speckle::{
    effective_modes, fit_visibility_scale, measure_metrics, model_visibility, run_experiment, ExperimentOutcome,
    ExperimentPlan, FrameSource, NoiseEstimator, VisibilityFit, VisibilityPoint,
};
use ghostlab::ImageMetrics;

use crate::config::Config;
use crate::table::{Cell, Table};

pub const ESTIMATORS: [NoiseEstimator; 3] =
    [NoiseEstimator::SlitProfile, NoiseEstimator::Background, NoiseEstimator::FrameSeries];

/// Metrics of one slit width at one order, under every noise estimator.
#[derive(Debug, Clone)]
pub struct SlitOrderMetrics {
    pub slit_width: usize,
    pub order: u32,
    /// Indexed like [`ESTIMATORS`].
    pub metrics: Vec<ImageMetrics>,
}

impl SlitOrderMetrics {
    pub fn with(&self, estimator: NoiseEstimator) -> &ImageMetrics {
        let k = ESTIMATORS.iter().position(|e| *e == estimator).expect("known estimator");
        &self.metrics[k]
    }

    pub fn visibility(&self) -> f64 {
        self.metrics[0].visibility
    }
}

pub struct ImageOutput {
    pub slit_widths: Vec<usize>,
    pub orders: Vec<u32>,
    /// `results[slit][k]` for `orders[k]`.
    pub results: Vec<Vec<SlitOrderMetrics>>,
    /// `factors[n] = F_n` for `n = 0..=4` (entries 0 and 1 are 1).
    pub factors: Vec<f64>,
    pub fit: VisibilityFit,
    pub frames: usize,
    pub metrics: Table,
    pub visibility_vs_m: Table,
    pub snr_vs_m: Table,
    pub calibration: Table,
}

/// Runs the slit sweep and, when `out` is given, writes frames and images.
/// The CSV tables are returned for the caller to write.
pub fn run(config: &Config, out: Option<&Path>) -> anyhow::Result<ImageOutput> {
    let ic = &config.image;
    let speckle = ic.speckle(config.seed);
    let plan = ExperimentPlan {
        config: speckle.clone(),
        slit_row: ic.slit_row,
        slit_widths: ic.resolved_slit_widths(),
        orders: ic.orders.clone(),
    };
    let source = match &ic.input_frames {
        Some(path) => {
            let reader = FrameReader::open(path).with_context(|| format!("opening {}", path.display()))?;
            let h = reader.header();
            if (h.width as usize, h.height as usize) != (speckle.width, speckle.height) {
                anyhow::bail!(
                    "{} holds {}x{} frames but the config asks for {}x{}",
                    path.display(),
                    h.width,
                    h.height,
                    speckle.width,
                    speckle.height
                );
            }
            FrameSource::Stack(reader)
        }
        None => FrameSource::synthetic(&speckle)?,
    };

    let mut writer = match (out, ic.save_frames) {
        (Some(dir), true) => Some(FrameWriter::create(
            dir.join("frames.gifr"),
            speckle.width,
            speckle.height,
            speckle.frames,
        )?),
        _ => None,
    };
    let outcome = run_experiment(&plan, source, |_, frame| match writer.as_mut() {
        Some(w) => w.write_frame(frame.pixels()),
        None => Ok(()),
    })?;
    if let Some(w) = writer {
        w.finish()?;
    }
    if let (Some(dir), true) = (out, ic.save_images) {
        save_images(dir, &plan, &outcome)?;
    }
    summarize(config, &plan, &outcome)
}

fn save_images(dir: &Path, plan: &ExperimentPlan, outcome: &ExperimentOutcome) -> anyhow::Result<()> {
    for (w, images) in plan.slit_widths.iter().zip(&outcome.images) {
        for image in images {
            let stem = format!("ghost_w{w:04}_n{}", image.order);
            write_ghost_image(dir.join(format!("{stem}.gifr")), image)?;
            write_pgm_file(dir.join(format!("{stem}.pgm")), image)?;
        }
    }
    Ok(())
}

fn summarize(config: &Config, plan: &ExperimentPlan, outcome: &ExperimentOutcome) -> anyhow::Result<ImageOutput> {
    let ic = &config.image;
    let fwhm = ic.speckle_fwhm;
    let mut factors = vec![1.0, 1.0];
    let mut calibration = Table::new(&["order", "f_n", "raw_moment"]);
    for n in 1..=4u32 {
        let f = outcome.calibration.factor(n)?;
        if n >= 2 {
            factors.push(f);
        }
        calibration.push(vec![n.into(), f.into(), outcome.calibration.raw_moment(n).into()])?;
    }
    let g_n: Vec<f64> = factors[2..].to_vec();

    let mut results = Vec::with_capacity(plan.slit_widths.len());
    let mut points = Vec::new();
    for ((mask, images), &w) in outcome.masks.iter().zip(&outcome.images).zip(&plan.slit_widths) {
        let modes = effective_modes(w as f64, fwhm, ic.mode_scale);
        let mut per_order = Vec::with_capacity(images.len());
        for image in images {
            let metrics = ESTIMATORS
                .iter()
                .map(|&e| {
                    let mut m = measure_metrics(image, mask, e)?;
                    m.effective_modes = Some(modes);
                    m.g_n_calibration = g_n.clone();
                    Ok(m)
                })
                .collect::<ghostlab::Result<Vec<_>>>()?;
            points.push(VisibilityPoint {
                order: image.order,
                slit_width: w as f64,
                visibility: metrics[0].visibility,
            });
            per_order.push(SlitOrderMetrics {
                slit_width: w,
                order: image.order,
                metrics,
            });
        }
        results.push(per_order);
    }
    let fit = fit_visibility_scale(&points, fwhm, &factors)?;

    let mut metrics_cols: Vec<String> = [
        "slit_width",
        "effective_modes",
        "fitted_modes",
        "order",
        "frames",
        "slit_mean",
        "background_mean",
        "signal",
        "visibility",
        "model_visibility",
        "fit_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for e in ESTIMATORS {
        metrics_cols.push(format!("noise_{}", e.name()));
        metrics_cols.push(format!("snr_normalized_{}", e.name()));
        metrics_cols.push(format!("noise_degenerate_{}", e.name()));
    }
    let mut metrics = Table::new(&metrics_cols);

    let mut vis_cols = vec!["slit_width".to_string(), "effective_modes".into(), "fitted_modes".into()];
    let mut snr_cols = vec!["slit_width".to_string(), "effective_modes".into()];
    for n in &plan.orders {
        vis_cols.push(format!("visibility_n{n}"));
        vis_cols.push(format!("model_n{n}"));
        snr_cols.push(format!("snr_normalized_n{n}"));
    }
    let mut visibility_vs_m = Table::new(&vis_cols);
    let mut snr_vs_m = Table::new(&snr_cols);
    let chosen = ic.estimator()?;

    let mut residuals = fit.residuals.iter();
    for per_order in &results {
        let w = per_order[0].slit_width;
        let modes = effective_modes(w as f64, fwhm, ic.mode_scale);
        let fitted = effective_modes(w as f64, fwhm, fit.mode_scale);
        let mut vis_row: Vec<Cell> = vec![w.into(), modes.into(), fitted.into()];
        let mut snr_row: Vec<Cell> = vec![w.into(), modes.into()];
        for r in per_order {
            let model = model_visibility(r.order, fitted, &factors);
            let base = &r.metrics[0];
            let mut row: Vec<Cell> = vec![
                w.into(),
                modes.into(),
                fitted.into(),
                r.order.into(),
                outcome.frames.into(),
                base.slit_mean.into(),
                base.background_mean.into(),
                base.signal.into(),
                base.visibility.into(),
                model.into(),
                (*residuals.next().expect("one residual per point")).into(),
            ];
            for m in &r.metrics {
                row.extend([m.noise.into(), m.snr_normalized.into(), m.noise_degenerate.into()]);
            }
            metrics.push(row)?;
            vis_row.extend([base.visibility.into(), model.into()]);
            snr_row.push(r.with(chosen).snr_normalized.into());
        }
        visibility_vs_m.push(vis_row)?;
        snr_vs_m.push(snr_row)?;
    }

    Ok(ImageOutput {
        slit_widths: plan.slit_widths.clone(),
        orders: plan.orders.clone(),
        results,
        factors,
        fit,
        frames: outcome.frames,
        metrics,
        visibility_vs_m,
        snr_vs_m,
        calibration,
    })
}
