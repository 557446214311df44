use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ghostlab_cli::config::{Axis, Config};
use ghostlab_cli::selftest::{self, SelftestOptions};
use ghostlab_cli::table::{Preamble, Table};
use ghostlab_cli::{commands, resolve_threads};

#[derive(Parser)]
#[command(name = "ghostlab", version, about = "Multiphoton thermal ghost imaging: closed forms, Monte-Carlo and speckle experiments")]
struct Cli {
    /// JSON config file; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core). Falls back to GHOSTLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form peak, background, visibility, variance and SNR sweep.
    Analytic(SweepArgs),
    /// Monte-Carlo estimates next to the closed forms, with agreement flags.
    Mc(McArgs),
    /// Synthetic speckle experiment: ghost images and metrics vs slit width.
    Image(ImageArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
    /// Print the resolved configuration as JSON.
    Config,
}

#[derive(Args)]
struct SweepArgs {
    /// Correlation orders n.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<u32>>,
    /// Mode counts M.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<u32>>,
    /// Mean intensities per mode (comma separated).
    #[arg(long, value_delimiter = ',')]
    intensities: Option<Vec<f64>>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<u64>,
    /// classical_intensity, photocount_plain or photocount_factorial.
    #[arg(long)]
    regime: Option<String>,
    /// Agreement threshold in standard errors.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ImageArgs {
    /// Number of speckle frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Frame width in pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Frame height in pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Speckle FWHM in pixels.
    #[arg(long)]
    fwhm: Option<f64>,
    /// Row holding the slit.
    #[arg(long)]
    slit_row: Option<usize>,
    /// Slit widths in pixels (overrides --slit-modes).
    #[arg(long, value_delimiter = ',')]
    slit_widths: Option<Vec<usize>>,
    /// Slit lengths in speckle units.
    #[arg(long, value_delimiter = ',')]
    slit_modes: Option<Vec<f64>>,
    /// Correlation orders n.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<u32>>,
    /// slit_profile, background or frame_series.
    #[arg(long)]
    noise_estimator: Option<String>,
    /// Std of additive Gaussian noise on each arm.
    #[arg(long)]
    detector_noise: Option<f64>,
    /// Store the frame stack as frames.gifr.
    #[arg(long)]
    save_frames: bool,
    /// Skip writing ghost images.
    #[arg(long)]
    no_images: bool,
    /// Reuse a stored frame stack.
    #[arg(long)]
    input_frames: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Reduced budgets: a fast smoke run, not a verdict.
    #[arg(long)]
    quick: bool,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
}

fn apply_sweep(args: &SweepArgs, orders: &mut Vec<u32>, modes: &mut Vec<u32>, intensities: &mut Axis) {
    if let Some(v) = &args.orders {
        *orders = v.clone();
    }
    if let Some(v) = &args.modes {
        *modes = v.clone();
    }
    if let Some(v) = &args.intensities {
        *intensities = Axis::Values(v.clone());
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    let env = std::env::var("GHOSTLAB_THREADS").ok();
    config.threads = resolve_threads(cli.threads, env.as_deref(), config.threads)?;
    match &cli.command {
        Command::Analytic(a) => {
            let c = &mut config.analytic;
            apply_sweep(a, &mut c.orders, &mut c.modes, &mut c.intensities);
        }
        Command::Mc(a) => {
            let c = &mut config.mc;
            apply_sweep(&a.sweep, &mut c.orders, &mut c.modes, &mut c.intensities);
            if let Some(t) = a.trials {
                c.trials = t;
            }
            if let Some(r) = &a.regime {
                c.regime = r.clone();
            }
            if let Some(t) = a.threshold {
                c.threshold_sigma = t;
            }
        }
        Command::Image(a) => {
            let c = &mut config.image;
            macro_rules! set {
                ($($field:ident),*) => {$(if let Some(v) = &a.$field { c.$field = v.clone(); })*};
            }
            set!(frames, width, height, slit_row, slit_modes, orders, noise_estimator, detector_noise);
            if let Some(v) = a.fwhm {
                c.speckle_fwhm = v;
            }
            if let Some(v) = &a.slit_widths {
                c.slit_widths = v.clone();
            }
            if a.save_frames {
                c.save_frames = true;
            }
            if a.no_images {
                c.save_images = false;
            }
            if a.input_frames.is_some() {
                c.input_frames = a.input_frames.clone();
            }
        }
        Command::Selftest(_) | Command::Config => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build_global()
        .context("starting worker pool")?;
    let out = config.out.clone();
    match &cli.command {
        Command::Config => {
            println!("{}", config.to_json());
            Ok(true)
        }
        Command::Analytic(_) => {
            let result = commands::write_analytic(&config, &out)?;
            println!("analytic: {} rows -> {}", result.sweep.rows().len(), out.join("analytic.csv").display());
            Ok(true)
        }
        Command::Mc(_) => {
            let result = commands::write_mc(&config, &out)?;
            println!(
                "mc: {} rows, {} outside {} sigma -> {}",
                result.table.rows().len(),
                result.disagreements,
                config.mc.threshold_sigma,
                out.join("mc.csv").display()
            );
            Ok(result.disagreements == 0)
        }
        Command::Image(_) => {
            let result = commands::write_image(&config, &out)?;
            println!(
                "image: {} frames, {} slit widths, fit scale {:.4}, max visibility residual {:.4} -> {}",
                result.frames,
                result.slit_widths.len(),
                result.fit.mode_scale,
                result.fit.max_relative_residual,
                out.display()
            );
            Ok(true)
        }
        Command::Selftest(args) => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let opts = SelftestOptions {
                seed: config.seed,
                quick: args.quick,
                artifact_dir: Some(out.clone()),
            };
            let ids: Vec<u8> = match &args.only {
                Some(ids) => ids.clone(),
                None => selftest::CRITERIA.iter().map(|(id, _)| *id).collect(),
            };
            let mut table = Table::new(&["criterion", "name", "passed", "detail"]);
            let mut all = true;
            for id in ids {
                let start = std::time::Instant::now();
                let outcome = selftest::run_criterion(id, &opts);
                println!("{outcome} ({:.1} s)", start.elapsed().as_secs_f64());
                all &= outcome.passed;
                table.push(vec![
                    (outcome.id as u32).into(),
                    outcome.name.into(),
                    outcome.passed.into(),
                    outcome.detail.as_str().into(),
                ])?;
            }
            let preamble = Preamble {
                command: "selftest".into(),
                seed: config.seed,
                config_json: config.to_json_for_outputs(),
            };
            table.write(&out.join("selftest.csv"), &preamble)?;
            println!("selftest: {}", if all { "all criteria passed" } else { "FAILED" });
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
