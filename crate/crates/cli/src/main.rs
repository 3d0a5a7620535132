use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use metasgld_cli::config::{load_config, out_dir_from_env};
use metasgld_cli::experiment::{compare_splits, format_summary, run_experiment, Trained};
use metasgld_cli::plot::render_plot;
use metasgld_cli::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "metasgld",
    version,
    about = "Meta-SGLD generalization-bound experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Master seed, replacing run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluate the observed gap every N epochs, replacing outputs.eval_cadence.
    #[arg(long, value_name = "N")]
    eval_cadence: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its CSV (and plot).
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render CSV columns as an SVG line chart.
    Plot {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        series: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several alternate-mode presets and tabulate their final epochs.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(s) = o.seed {
        cfg.run.seed = s;
    }
    if let Some(c) = o.eval_cadence {
        anyhow::ensure!(c >= 1, "--eval-cadence must be >= 1");
        cfg.outputs.eval_cadence = c;
    }
    Ok(cfg)
}

fn threads(o: &Overrides) -> Result<()> {
    if let Some(n) = o.threads {
        anyhow::ensure!(n >= 1, "--threads must be >= 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            threads(&overrides)?;
            let cfg = load(&config, &overrides)?;
            let out = run_experiment(&cfg, out_dir_from_env().as_deref())?;
            match &out.trained {
                Trained::Alternate(r) => {
                    if let Some(last) = r.records.last() {
                        println!(
                            "epoch {}: G_inco {:.6} G_norm {:.6} lipschitz {:.4}",
                            last.epoch, last.bound_total, last.gnorm_bound_total, last.lipschitz
                        );
                    }
                }
                Trained::Joint(r) => {
                    if let Some(last) = r.records.last() {
                        println!(
                            "t {}: joint bound {:.6} mi_sum {:.6} l_hat {:.4}",
                            last.t, last.joint_bound, last.mi_sum, last.l_hat
                        );
                    }
                }
            }
            println!("wrote {}", out.csv.display());
            for p in &out.plot_files {
                println!("wrote {}", p.display());
            }
        }
        Command::Plot { csv, series, out } => {
            for p in render_plot(&csv, &series, &out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Compare { configs, overrides } => {
            threads(&overrides)?;
            let cfgs = configs
                .iter()
                .map(|c| load(c, &overrides))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", format_summary(&compare_splits(&cfgs)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
