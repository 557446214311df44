use anyhow::Context;
use ghostlab::analytics::{
    snr_high_intensity, snr_low_intensity, snr_spdc, snr_spdc_limit, snr_spdc_peak, snr_thermal,
};
use ghostlab::{GiParams, Report, SpdcParams};
use rayon::prelude::*;

use crate::config::Config;
use crate::table::{Cell, Table};

pub const COLUMNS: &[&str] = &[
    "order",
    "modes",
    "mean_intensity",
    "g_max",
    "g_back",
    "visibility",
    "var_back",
    "snr_thermal",
    "snr_low",
    "snr_high",
    "snr_spdc",
    "snr_spdc_limit",
];

pub struct AnalyticOutput {
    pub sweep: Table,
    pub spdc_peaks: Table,
}

fn row(order: u32, modes: u32, intensity: f64) -> anyhow::Result<Vec<Cell>> {
    let ctx = || format!("order {order}, modes {modes}, intensity {intensity}");
    let params = GiParams::new(order, modes, intensity).with_context(ctx)?;
    let report = Report::evaluate(&params).with_context(ctx)?;
    let spdc = SpdcParams::new(intensity, modes).with_context(ctx)?;
    Ok(vec![
        order.into(),
        modes.into(),
        intensity.into(),
        report.g_max.into(),
        report.g_back.into(),
        report.visibility.into(),
        report.var_back.into(),
        snr_thermal(&params).with_context(ctx)?.into(),
        snr_low_intensity(order, modes, intensity).with_context(ctx)?.into(),
        snr_high_intensity::<f64>(order, modes).with_context(ctx)?.into(),
        snr_spdc(&spdc).into(),
        snr_spdc_limit::<f64>(modes).with_context(ctx)?.into(),
    ])
}

/// Closed-form sweep over orders x modes x intensities, in that nesting.
pub fn run(config: &Config) -> anyhow::Result<AnalyticOutput> {
    let a = &config.analytic;
    let intensities = a.intensities.values();
    let points: Vec<(u32, u32, f64)> = a
        .orders
        .iter()
        .flat_map(|&n| {
            let intensities = &intensities;
            a.modes
                .iter()
                .flat_map(move |&m| intensities.iter().map(move |&i| (n, m, i)))
        })
        .collect();
    let rows: Vec<anyhow::Result<Vec<Cell>>> = points.par_iter().map(|&(n, m, i)| row(n, m, i)).collect();
    let mut sweep = Table::new(COLUMNS);
    for r in rows {
        sweep.push(r?)?;
    }

    let mut spdc_peaks = Table::new(&["modes", "mean_photons_at_max", "snr_spdc_max", "snr_spdc_limit"]);
    for &m in &a.spdc_peak_modes {
        let (photons, snr) = snr_spdc_peak::<f64>(m)?;
        spdc_peaks.push(vec![m.into(), photons.into(), snr.into(), snr_spdc_limit::<f64>(m)?.into()])?;
    }
    Ok(AnalyticOutput { sweep, spdc_peaks })
}
