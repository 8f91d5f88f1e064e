use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cat_core::{infer, load_for_config, model_flops, report_render, ModelConfig};
use cat_harness::ensemble::self_ensemble;
use cat_harness::image::{load_image, save_image, ImageU8};
use cat_harness::metrics::{psnr, ssim, ChannelMode};
use cat_harness::selftest;
use cat_harness::train::{overfit, OverfitOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cat", version, about = "Cross aggregation transformer for image restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-module parameter and FLOP table for a configuration.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
    },
    /// Run the built-in verification suites.
    Selftest {
        /// Only suites whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// List the suites and exit.
        #[arg(long)]
        list: bool,
    },
    /// Restore one image with trained weights.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Average over the eight flips and rotations.
        #[arg(long)]
        ensemble: bool,
    },
    /// Fit the small x2 network to one synthetic patch.
    Overfit {
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Write the fitted weights here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// PSNR and SSIM of a test image against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Measure luma only.
        #[arg(long)]
        y: bool,
        /// Pixels removed from each border first.
        #[arg(long, default_value_t = 0)]
        crop: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Analyze { config, height, width } => {
            let cfg = ModelConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if height == 0 || width == 0 {
                bail!("input size must be positive");
            }
            print!("{}", report_render(&model_flops(&cfg, height, width)));
            Ok(true)
        }
        Command::Selftest { filter, list } => {
            let suites = selftest::select(filter.as_deref());
            if suites.is_empty() {
                bail!("no suite matches {:?}", filter.unwrap_or_default());
            }
            if list {
                for s in suites {
                    println!("{:<12} {}", s.name, s.about);
                }
                return Ok(true);
            }
            let mut failed = 0;
            for suite in suites {
                for check in suite.run() {
                    failed += usize::from(!check.passed);
                    println!("[{}] {check}", suite.name);
                }
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
            }
            Ok(failed == 0)
        }
        Command::Infer {
            config,
            weights,
            input,
            output,
            ensemble,
        } => {
            let cfg = ModelConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let store = match load_for_config::<f32>(&cfg, &weights) {
                Ok(s) => s,
                Err(single) => load_for_config::<f64>(&cfg, &weights)
                    .map(|s| s.cast::<f32>())
                    .map_err(|_| single)
                    .with_context(|| format!("loading {}", weights.display()))?,
            };
            let img = load_image(&input)?;
            if img.channels != cfg.in_channels {
                bail!(
                    "{} has {} channel(s) but the model expects {}",
                    input.display(),
                    img.channels,
                    cfg.in_channels
                );
            }
            let x = img.to_tensor::<f32>();
            let y = if ensemble {
                self_ensemble(&x, |v| Ok(infer(&store, &cfg, v)?))?
            } else {
                infer(&store, &cfg, &x)?
            };
            let out = ImageU8::from_tensor(&y)?;
            save_image(&out, &output)?;
            eprintln!(
                "{}x{} -> {}x{} written to {}",
                img.width,
                img.height,
                out.width,
                out.height,
                output.display()
            );
            Ok(true)
        }
        Command::Overfit { steps, seed, lr, save } => {
            let opts = OverfitOptions {
                steps,
                seed,
                lr,
                ..OverfitOptions::default()
            };
            let (report, store) = overfit(&opts, |step, loss| println!("{step:>4} {loss:.6}"))?;
            if let Some(path) = save {
                cat_core::save_weights(&store, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            let reached = report.reduction() >= opts.target_reduction;
            eprintln!(
                "loss {:.6} -> {:.6}, {:.1}% reduction in {} steps",
                report.initial,
                report.best,
                100.0 * report.reduction(),
                report.losses.len()
            );
            if !reached {
                eprintln!("target of {:.0}% not reached", 100.0 * opts.target_reduction);
            }
            Ok(reached)
        }
        Command::Metrics { reference, test, y, crop } => {
            let a = load_image(&reference)?;
            let b = load_image(&test)?;
            let mode = if y { ChannelMode::Y } else { ChannelMode::Rgb };
            let p = psnr(&a, &b, mode, crop)?;
            let s = ssim(&a, &b, mode, crop)?;
            println!("PSNR={p:.4} SSIM={s:.4}");
            Ok(true)
        }
    }
}
