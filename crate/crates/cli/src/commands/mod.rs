//! The three sweep commands. Each `write_*` runs the command and writes its
//! CSV files (and, for `image`, binary artifacts) into `dir`.

pub mod analytic;
pub mod image;
pub mod mc;

use std::path::Path;

use anyhow::Context;

use crate::config::Config;
use crate::table::{Preamble, Table};

fn preamble(config: &Config, command: &str) -> Preamble {
    Preamble {
        command: command.to_string(),
        seed: config.seed,
        config_json: config.to_json_for_outputs(),
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_analytic(config: &Config, dir: &Path) -> anyhow::Result<analytic::AnalyticOutput> {
    ensure_dir(dir)?;
    let out = analytic::run(config)?;
    let p = preamble(config, "analytic");
    out.sweep.write(&dir.join("analytic.csv"), &p)?;
    out.spdc_peaks.write(&dir.join("spdc_peaks.csv"), &p)?;
    Ok(out)
}

pub fn write_mc(config: &Config, dir: &Path) -> anyhow::Result<mc::McOutput> {
    ensure_dir(dir)?;
    let out = mc::run(config)?;
    out.table.write(&dir.join("mc.csv"), &preamble(config, "mc"))?;
    Ok(out)
}

pub fn write_image(config: &Config, dir: &Path) -> anyhow::Result<image::ImageOutput> {
    ensure_dir(dir)?;
    let out = image::run(config, Some(dir))?;
    let p = preamble(config, "image");
    out.metrics.write(&dir.join("image_metrics.csv"), &p)?;
    out.visibility_vs_m.write(&dir.join("visibility_vs_m.csv"), &p)?;
    out.snr_vs_m.write(&dir.join("snr_vs_m.csv"), &p)?;
    out.calibration.write(&dir.join("calibration.csv"), &p)?;
    let mut fit = Table::new(&["mode_scale", "max_relative_residual", "points"]);
    fit.push(vec![
        out.fit.mode_scale.into(),
        out.fit.max_relative_residual.into(),
        out.fit.residuals.len().into(),
    ])?;
    fit.write(&dir.join("visibility_fit.csv"), &p)?;
    Ok(out)
}
