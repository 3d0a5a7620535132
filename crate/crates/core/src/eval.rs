//! Observed generalization: meta-test loss on fresh tasks and the
//! train/test gap.

use rayon::prelude::*;

use crate::config::{GapProtocol, RunConfig};
use crate::env::{sample_dataset, sample_task, EnvironmentSpec, Source, TaskDataset};
use crate::error::{arg, Result};
use crate::model::LossModel;
use crate::params::ParamVector;
use crate::rng::RngStream;
use crate::schedule::noise_std;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub n_test_tasks: usize,
}

impl GapReport {
    pub fn new(epoch: usize, train_loss: f64, test_loss: f64, n_test_tasks: usize) -> Self {
        Self {
            epoch,
            train_loss,
            test_loss,
            gap: test_loss - train_loss,
            n_test_tasks,
        }
    }
}

/// Adapts from `u` with `cfg.test_adapt_steps` full-support gradient steps.
/// Noise is added only when `cfg.test_langevin` is set.
pub fn test_adapt(
    model: &LossModel,
    u: &ParamVector,
    ds: &TaskDataset,
    cfg: &RunConfig,
    t: usize,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let support = ds.source_points(Source::Tr);
    let mut w = u.clone();
    if cfg.test_adapt_steps > 0 && support.is_empty() {
        return Err(arg("test-time adaptation needs a non-empty support split"));
    }
    for k in 1..=cfg.test_adapt_steps {
        let beta = cfg.schedules.beta(t.max(1), k)?;
        let g = model.batch_grad(&w, &support)?;
        w.axpy(-beta, &g);
        if cfg.test_langevin {
            let sd = noise_std(beta, cfg.schedules.gamma_inner)?;
            w += &rng.normal_vec(w.len(), sd);
        }
    }
    Ok(w)
}

/// Mean post-adaptation loss over `n_tasks` fresh tasks, scored on `split`.
/// Task `j` uses the stream `rng.path ++ [j]`.
#[allow(clippy::too_many_arguments)]
pub fn probe_loss(
    model: &LossModel,
    u: &ParamVector,
    env: &EnvironmentSpec,
    cfg: &RunConfig,
    t: usize,
    n_tasks: usize,
    rng: &RngStream,
    split: Source,
) -> Result<f64> {
    if n_tasks == 0 {
        return Err(arg("need at least one probe task"));
    }
    let losses = (0..n_tasks)
        .into_par_iter()
        .map(|j| {
            let mut s = rng.child(&[j as u64]);
            let task = sample_task(env, &mut s)?;
            let ds = sample_dataset(&task, env, cfg.m, cfg.m_tr, &mut s)?;
            let w = test_adapt(model, u, &ds, cfg, t, &mut s)?;
            model.batch_risk(&w, &ds.source_points(split))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / n_tasks as f64)
}

/// Expected query loss after test-time adaptation on fresh tasks.
pub fn meta_test_loss(
    model: &LossModel,
    u: &ParamVector,
    env: &EnvironmentSpec,
    cfg: &RunConfig,
    t: usize,
    n_test: usize,
    rng: &RngStream,
) -> Result<f64> {
    probe_loss(model, u, env, cfg, t, n_test, rng, Source::Va)
}

/// Train and test probes on disjoint fresh task streams and their gap.
///
/// The test side always scores the query split. The train side scores the
/// support split under [`GapProtocol::Support`] and the query split under
/// [`GapProtocol::Query`].
#[allow(clippy::too_many_arguments)]
pub fn observed_gap(
    model: &LossModel,
    u: &ParamVector,
    env: &EnvironmentSpec,
    cfg: &RunConfig,
    t: usize,
    n_train_probe: usize,
    n_test: usize,
    rng: &RngStream,
) -> Result<GapReport> {
    let train_split = match cfg.gap_protocol {
        GapProtocol::Support => Source::Tr,
        GapProtocol::Query => Source::Va,
    };
    let train = probe_loss(
        model,
        u,
        env,
        cfg,
        t,
        n_train_probe,
        &rng.child(&[0]),
        train_split,
    )?;
    let test = meta_test_loss(model, u, env, cfg, t, n_test, &rng.child(&[1]))?;
    Ok(GapReport::new(t, train, test, n_test))
}
