//! Running configured experiments and comparing split settings.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use metasgld_core::bounds::subgaussian_mean_estimation;
use metasgld_core::eval::observed_gap;
use metasgld_core::joint::run_joint;
use metasgld_core::meta::run_meta_sgld;
use metasgld_core::{
    JointRun, LossModel, MetaRun, MetaRunOptions, Purpose, RngStream, SubgaussianSpec,
};

use crate::config::{resolve_output, ExperimentConfig, Mode};
use crate::plot::write_plot;
use crate::table::{read_table, write_joint_records, write_run_records};

#[derive(Debug, Clone)]
pub enum Trained {
    Alternate(MetaRun),
    Joint(JointRun),
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trained: Trained,
    pub sg: SubgaussianSpec,
    pub csv: PathBuf,
    /// The SVG followed by its data files, when a plot was requested.
    pub plot_files: Vec<PathBuf>,
}

pub fn subgaussian_for(cfg: &ExperimentConfig) -> Result<SubgaussianSpec> {
    let model = LossModel::mean_estimation(cfg.env.dim());
    Ok(match cfg.sigma_sq {
        Some(s) => SubgaussianSpec::user(s)?,
        None => subgaussian_mean_estimation(&model, &cfg.env, cfg.run.schedules.beta0)?,
    })
}

pub fn train(cfg: &ExperimentConfig) -> Result<(Trained, SubgaussianSpec)> {
    let model = LossModel::mean_estimation(cfg.env.dim());
    let sg = subgaussian_for(cfg)?;
    let trained = match cfg.mode {
        Mode::Alternate => {
            let opts = MetaRunOptions {
                sg,
                eval_cadence: Some(cfg.outputs.eval_cadence),
            };
            Trained::Alternate(run_meta_sgld(&model, &cfg.run, &cfg.env, &opts)?)
        }
        Mode::Joint => Trained::Joint(run_joint(&model, &cfg.run, &cfg.env, &cfg.joint, &sg)?),
    };
    Ok((trained, sg))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Trains, writes the CSV (and the plot, if configured) and returns what was
/// produced. Output paths are redirected into `out_dir` when given.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Outcome> {
    let (trained, sg) = train(cfg)?;
    let csv = resolve_output(&cfg.outputs.csv, out_dir);
    let header = cfg.to_toml();
    {
        let w = create(&csv)?;
        match &trained {
            Trained::Alternate(run) => write_run_records(w, &header, &run.records)?,
            Trained::Joint(run) => write_joint_records(w, &header, &run.records)?,
        }
    }
    let mut plot_files = Vec::new();
    if let Some(plot) = &cfg.outputs.plot {
        let out = resolve_output(plot, out_dir);
        let table = read_table(File::open(&csv)?)?;
        let series: Vec<String> = cfg
            .outputs
            .plot_series
            .iter()
            .filter(|s| table.column(s).map(|c| !c.is_empty()).unwrap_or(true))
            .cloned()
            .collect();
        if !series.is_empty() {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            plot_files = write_plot(&table, &series, &out)?;
        }
    }
    Ok(Outcome {
        trained,
        sg,
        csv,
        plot_files,
    })
}

/// Final-epoch metrics of one alternate-training preset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    pub label: String,
    pub m_tr: usize,
    pub m_va: usize,
    pub epoch: usize,
    pub gap: f64,
    pub mean_abs_gap: f64,
    pub lipschitz: f64,
    pub g_norm: f64,
    pub g_inco: f64,
}

impl SplitSummary {
    pub fn ratio(&self) -> f64 {
        self.g_norm / self.g_inco
    }
}

fn label_of(cfg: &ExperimentConfig) -> String {
    cfg.outputs
        .csv
        .file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("{}/{}", cfg.run.m_tr, cfg.run.m_va))
}

pub fn summarize(cfg: &ExperimentConfig, run: &MetaRun) -> Result<SplitSummary> {
    let Some(last) = run.records.last() else {
        bail!("{}: run produced no epochs", label_of(cfg));
    };
    let gap = match last.gap {
        Some(g) => g,
        None => {
            let model = LossModel::mean_estimation(cfg.env.dim());
            let rng = RngStream::for_purpose(cfg.run.seed, Purpose::EvalTest, &[last.epoch as u64]);
            let n = cfg.run.n_test;
            observed_gap(
                &model,
                run.final_u(),
                &cfg.env,
                &cfg.run,
                last.epoch,
                n,
                n,
                &rng,
            )?
            .gap
        }
    };
    let gaps: Vec<f64> = run.records.iter().filter_map(|r| r.gap).collect();
    let mean_abs_gap = if gaps.is_empty() {
        gap.abs()
    } else {
        gaps.iter().map(|g| g.abs()).sum::<f64>() / gaps.len() as f64
    };
    Ok(SplitSummary {
        label: label_of(cfg),
        m_tr: cfg.run.m_tr,
        m_va: cfg.run.m_va,
        epoch: last.epoch,
        gap,
        mean_abs_gap,
        lipschitz: last.lipschitz,
        g_norm: last.gnorm_bound_total,
        g_inco: last.bound_total,
    })
}

/// Runs each preset and summarizes its final epoch. The presets must be
/// alternate-mode runs over the same environment and number of epochs.
pub fn compare_splits(presets: &[ExperimentConfig]) -> Result<Vec<SplitSummary>> {
    if presets.len() < 2 {
        bail!("compare needs at least two presets, got {}", presets.len());
    }
    let first = &presets[0];
    for p in presets {
        if p.mode != Mode::Alternate {
            bail!("{}: compare only supports alternate mode", label_of(p));
        }
        if p.run.outer_steps != first.run.outer_steps {
            bail!(
                "presets disagree on outer_steps: {} has {}, {} has {}",
                label_of(first),
                first.run.outer_steps,
                label_of(p),
                p.run.outer_steps
            );
        }
        if p.env != first.env {
            bail!(
                "{} and {} use different environments",
                label_of(first),
                label_of(p)
            );
        }
    }
    presets
        .iter()
        .map(|p| match train(p)? {
            (Trained::Alternate(run), _) => summarize(p, &run),
            (Trained::Joint(_), _) => unreachable!("checked above"),
        })
        .collect()
}

pub fn format_summary(rows: &[SplitSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>5} {:>5} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10} {:>12}",
        "preset",
        "m_tr",
        "m_va",
        "epoch",
        "gap",
        "lipschitz",
        "G_norm",
        "G_inco",
        "ratio",
        "mean|gap|"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>5} {:>5} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>10.2} {:>12.4}",
            r.label,
            r.m_tr,
            r.m_va,
            r.epoch,
            r.gap,
            r.lipschitz,
            r.g_norm,
            r.g_inco,
            r.ratio(),
            r.mean_abs_gap
        );
    }
    s
}
