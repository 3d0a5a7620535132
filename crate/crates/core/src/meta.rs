//! Alternate training with Meta-SGLD.
//!
//! Each outer step draws a batch of fresh tasks, adapts a task parameter from
//! the current meta parameter `U` with `K` Langevin steps on the support
//! split, and moves `U` along the first-order meta-gradient: the query-loss
//! gradient taken at the adapted parameters. Alongside training the step
//! estimates, by Monte Carlo, the gradient incoherence at both levels (the
//! difference between a gradient on the union of support and query points
//! and the gradient on the support points alone), weighted by
//! `lr * gamma / 2`, and the same-weighted squared gradient norms that serve as
//! the Lipschitz-style baseline.
//!
//! All randomness comes from path-addressed streams (see [`crate::rng`]); tasks
//! and replicas run in parallel and are reduced in index order, so results
//! are bitwise reproducible regardless of thread count.

use rayon::prelude::*;

use crate::bounds::{assemble_alt_bound, SubgaussianSpec};
use crate::config::{RunConfig, TaskReduction};
use crate::env::{
    sample_dataset, sample_minibatch, sample_task, EnvironmentSpec, Source, TaskDataset,
};
use crate::error::{arg, Error, Result};
use crate::eval::observed_gap;
use crate::model::LossModel;
use crate::params::ParamVector;
use crate::record::RunRecord;
use crate::rng::{Purpose, RngStream};
use crate::schedule::noise_std;

/// Running sums behind the alternate-training bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundAccumulators {
    pub eps_u_sum: f64,
    pub eps_w_sum: f64,
    pub gnorm_u_sum: f64,
    pub gnorm_w_sum: f64,
    /// Largest raw gradient norm observed so far.
    pub lipschitz_max: f64,
}

/// One task's adaptation trajectory `W^0 = U, ..., W^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPath {
    pub w_steps: Vec<ParamVector>,
    pub batches_used: Vec<Vec<usize>>,
    pub noise_used: Vec<ParamVector>,
}

impl InnerPath {
    pub fn adapted(&self) -> &ParamVector {
        self.w_steps.last().expect("path holds W^0")
    }
}

/// Task-level bound contributions gathered along one live inner path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerTerms {
    pub eps_w: f64,
    pub gnorm_w: f64,
    pub max_norm: f64,
}

/// Meta-level contributions of one outer step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetaTerms {
    pub eps_u: f64,
    pub gnorm_u: f64,
    pub max_norm: f64,
}

fn stream(cfg: &RunConfig, purpose: Purpose, path: &[u64]) -> RngStream {
    RngStream::for_purpose(cfg.seed, purpose, path)
}

/// Runs the `K` inner Langevin steps for one task starting at `u`.
///
/// `replica = 0` is the live path used for training; Monte-Carlo replicas use
/// their own streams. With `collect`, each step also draws `mc_replicas`
/// batches from the incoherence source, holding `W^{k-1}` fixed, and adds the
/// weighted incoherence and gradient-norm terms.
#[allow(clippy::too_many_arguments)]
pub fn inner_adapt(
    model: &LossModel,
    u: &ParamVector,
    ds: &TaskDataset,
    cfg: &RunConfig,
    t: usize,
    task_slot: usize,
    replica: usize,
    mut collect: Option<&mut InnerTerms>,
) -> Result<InnerPath> {
    if cfg.m_tr == 0 {
        return Err(Error::Config(
            "m_tr = 0 leaves no support data for inner adaptation".into(),
        ));
    }
    if ds.tr.is_empty() {
        return Err(Error::Internal(format!(
            "task {task_slot} at step {t} has an empty support split"
        )));
    }
    let gamma = cfg.schedules.gamma_inner;
    let (t64, slot, rep) = (t as u64, task_slot as u64, replica as u64);
    let mut w = u.clone();
    let mut path = InnerPath {
        w_steps: Vec::with_capacity(cfg.inner_steps + 1),
        batches_used: Vec::with_capacity(cfg.inner_steps),
        noise_used: Vec::with_capacity(cfg.inner_steps),
    };
    path.w_steps.push(w.clone());
    for k in 1..=cfg.inner_steps {
        let beta = cfg.schedules.beta(t, k)?;
        let k64 = k as u64;
        let mut batch_rng = stream(cfg, Purpose::InnerBatch, &[t64, slot, k64, rep]);
        let batch = sample_minibatch(ds, Source::Tr, cfg.inner_batch, &mut batch_rng)?;
        let grad_tr = model.batch_grad(&w, &ds.points(&batch))?;

        if let Some(terms) = collect.as_deref_mut() {
            let mut eps_sq = 0.0;
            let mut norm_sq = 0.0;
            let mut max_norm = grad_tr.norm();
            for r in 0..cfg.mc_replicas {
                let mut rng = stream(cfg, Purpose::UnionBatch, &[t64, slot, k64, r as u64]);
                let union =
                    sample_minibatch(ds, cfg.incoherence_source, cfg.union_batch, &mut rng)?;
                let grad_union = model.batch_grad(&w, &ds.points(&union))?;
                eps_sq += (&grad_union - &grad_tr).sq_norm();
                let n2 = grad_union.sq_norm();
                norm_sq += n2;
                max_norm = max_norm.max(n2.sqrt());
            }
            let reps = cfg.mc_replicas as f64;
            let weight = beta * gamma / 2.0;
            terms.eps_w += weight * eps_sq / reps;
            terms.gnorm_w += weight * norm_sq / reps;
            terms.max_norm = terms.max_norm.max(max_norm);
        }

        w.axpy(-beta, &grad_tr);
        let noise = if cfg.langevin {
            let sd = noise_std(beta, gamma)?;
            let mut rng = stream(cfg, Purpose::InnerNoise, &[t64, slot, k64, rep]);
            let z = rng.normal_vec(w.len(), sd);
            w += &z;
            z
        } else {
            ParamVector::zeros(w.len())
        };
        path.w_steps.push(w.clone());
        path.batches_used.push(batch);
        path.noise_used.push(noise);
    }
    Ok(path)
}

/// First-order meta-gradient: the mean over tasks of the `source`-batch
/// gradient evaluated at each adapted parameter `W^K`.
pub fn meta_gradient_first_order(
    model: &LossModel,
    paths: &[InnerPath],
    datasets: &[TaskDataset],
    source: Source,
) -> Result<ParamVector> {
    if paths.is_empty() || paths.len() != datasets.len() {
        return Err(arg(format!(
            "need one path per dataset, got {} paths and {} datasets",
            paths.len(),
            datasets.len()
        )));
    }
    let mut total = ParamVector::zeros(model.dim);
    for (i, (path, ds)) in paths.iter().zip(datasets).enumerate() {
        let pts = ds.source_points(source);
        if pts.is_empty() {
            return Err(arg(format!("task {i} has an empty {source:?} batch")));
        }
        total += &model.batch_grad(path.adapted(), &pts)?;
    }
    Ok(total.scaled(1.0 / paths.len() as f64))
}

/// Monte-Carlo estimate of the weighted meta-level incoherence
/// `eta_t gamma_t E||eps^u||^2 / 2` and its gradient-norm analogue.
///
/// Each replica reruns every inner path on fresh streams, then compares the
/// meta-gradient evaluated on the incoherence source with the one evaluated
/// on the support split.
pub fn estimate_eps_u(
    model: &LossModel,
    u: &ParamVector,
    datasets: &[TaskDataset],
    cfg: &RunConfig,
    t: usize,
) -> Result<MetaTerms> {
    if datasets.is_empty() {
        return Err(arg("task batch is empty"));
    }
    let per_replica: Vec<(f64, f64)> = (0..cfg.mc_replicas)
        .into_par_iter()
        .map(|r| {
            let paths = datasets
                .iter()
                .enumerate()
                .map(|(i, ds)| inner_adapt(model, u, ds, cfg, t, i, r + 1, None))
                .collect::<Result<Vec<_>>>()?;
            let g_full =
                meta_gradient_first_order(model, &paths, datasets, cfg.incoherence_source)?;
            let g_tr = meta_gradient_first_order(model, &paths, datasets, Source::Tr)?;
            Ok(((&g_full - &g_tr).sq_norm(), g_full.sq_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let reps = cfg.mc_replicas as f64;
    let weight = cfg.schedules.eta(t)? * cfg.schedules.gamma_outer / 2.0;
    let (mut eps, mut norm, mut max_sq) = (0.0, 0.0, 0.0f64);
    for (e, g) in per_replica {
        eps += e;
        norm += g;
        max_sq = max_sq.max(g);
    }
    Ok(MetaTerms {
        eps_u: weight * eps / reps,
        gnorm_u: weight * norm / reps,
        max_norm: max_sq.sqrt(),
    })
}

/// What one outer step produced besides the new meta parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterOutcome {
    pub u: ParamVector,
    /// Mean query loss of the live adapted parameters.
    pub train_loss: f64,
    pub paths: Vec<InnerPath>,
    pub meta_grad: ParamVector,
}

fn reduce(values: impl Iterator<Item = f64>, how: TaskReduction) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    match how {
        TaskReduction::Sum => sum,
        TaskReduction::Mean => sum / n as f64,
    }
}

/// One Meta-SGLD outer iteration on `datasets`, folding its bound
/// contributions into `acc`.
pub fn outer_step(
    model: &LossModel,
    u: &ParamVector,
    datasets: &[TaskDataset],
    cfg: &RunConfig,
    t: usize,
    acc: &mut BoundAccumulators,
) -> Result<OuterOutcome> {
    if datasets.len() != cfg.task_batch {
        return Err(arg(format!(
            "expected {} tasks, got {}",
            cfg.task_batch,
            datasets.len()
        )));
    }
    let live: Vec<(InnerPath, InnerTerms)> = datasets
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            let mut terms = InnerTerms::default();
            let path = inner_adapt(model, u, ds, cfg, t, i, 0, Some(&mut terms))?;
            Ok((path, terms))
        })
        .collect::<Result<Vec<_>>>()?;
    let (paths, terms): (Vec<_>, Vec<_>) = live.into_iter().unzip();

    let meta = estimate_eps_u(model, u, datasets, cfg, t)?;

    acc.eps_w_sum += reduce(terms.iter().map(|x| x.eps_w), cfg.task_reduction);
    acc.gnorm_w_sum += reduce(terms.iter().map(|x| x.gnorm_w), cfg.task_reduction);
    acc.eps_u_sum += meta.eps_u;
    acc.gnorm_u_sum += meta.gnorm_u;
    let step_max = terms
        .iter()
        .map(|x| x.max_norm)
        .fold(meta.max_norm, f64::max);
    acc.lipschitz_max = acc.lipschitz_max.max(step_max);

    let meta_grad = meta_gradient_first_order(model, &paths, datasets, Source::Va)?;
    let eta = cfg.schedules.eta(t)?;
    let mut next = u.clone();
    next.axpy(-eta, &meta_grad);
    if cfg.langevin {
        let sd = noise_std(eta, cfg.schedules.gamma_outer)?;
        let mut rng = stream(cfg, Purpose::OuterNoise, &[t as u64]);
        next += &rng.normal_vec(next.len(), sd);
    }

    let mut train_loss = 0.0;
    for (path, ds) in paths.iter().zip(datasets) {
        train_loss += model.batch_risk(path.adapted(), &ds.source_points(Source::Va))?;
    }
    train_loss /= paths.len() as f64;

    Ok(OuterOutcome {
        u: next,
        train_loss,
        paths,
        meta_grad,
    })
}

/// Draws the task batch for outer step `t`.
pub fn sample_task_batch(
    env: &EnvironmentSpec,
    cfg: &RunConfig,
    t: usize,
) -> Result<Vec<TaskDataset>> {
    (0..cfg.task_batch)
        .map(|i| {
            let path = [t as u64, i as u64];
            let task = sample_task(env, &mut stream(cfg, Purpose::Task, &path))?;
            sample_dataset(
                &task,
                env,
                cfg.m,
                cfg.m_tr,
                &mut stream(cfg, Purpose::Dataset, &path),
            )
        })
        .collect()
}

/// Draws `U^0 ~ N(u_init_mean, u_init_std^2 I)`.
pub fn initial_meta_param(cfg: &RunConfig) -> Result<ParamVector> {
    let mut rng = stream(cfg, Purpose::Init, &[0]);
    let jitter = rng.normal_vec(cfg.dim(), cfg.u_init_std);
    Ok(&ParamVector::from_slice(&cfg.u_init_mean)? + &jitter)
}

#[derive(Debug, Clone)]
pub struct MetaRunOptions {
    pub sg: SubgaussianSpec,
    /// Measure the observed gap every this many epochs; `None` disables it.
    pub eval_cadence: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MetaRun {
    pub records: Vec<RunRecord>,
    /// `U^0, ..., U^T`.
    pub u_trace: Vec<ParamVector>,
    pub train_losses: Vec<f64>,
    pub accumulators: BoundAccumulators,
}

impl MetaRun {
    pub fn final_u(&self) -> &ParamVector {
        self.u_trace.last().expect("trace holds U^0")
    }
}

fn check_finite(epoch: usize, rec: &RunRecord, u: &ParamVector) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            what: "meta parameter".into(),
        });
    }
    let vals = [
        ("eps_u", rec.eps_u),
        ("eps_w", rec.eps_w),
        ("gnorm_u", rec.gnorm_u),
        ("gnorm_w", rec.gnorm_w),
        ("lipschitz", rec.lipschitz),
        ("bound_total", rec.bound_total),
        ("gnorm_bound_total", rec.gnorm_bound_total),
    ];
    for (name, v) in vals {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: name.into(),
            });
        }
    }
    for (name, v) in [
        ("train_loss", rec.train_loss),
        ("test_loss", rec.test_loss),
        ("gap", rec.gap),
    ] {
        if v.is_some_and(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                what: name.into(),
            });
        }
    }
    Ok(())
}

/// Runs `T` outer steps and reports one record per epoch.
pub fn run_meta_sgld(
    model: &LossModel,
    cfg: &RunConfig,
    env: &EnvironmentSpec,
    opts: &MetaRunOptions,
) -> Result<MetaRun> {
    cfg.validate()?;
    env.validate()?;
    if cfg.m_tr == 0 {
        return Err(Error::Config("alternate training needs m_tr >= 1".into()));
    }
    if cfg.m_va == 0 {
        return Err(Error::Config("alternate training needs m_va >= 1".into()));
    }
    if model.dim != env.dim() || cfg.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: if model.dim != env.dim() {
                model.dim
            } else {
                cfg.dim()
            },
        });
    }
    if opts.eval_cadence == Some(0) {
        return Err(arg("eval cadence must be >= 1"));
    }

    let mut u = initial_meta_param(cfg)?;
    let mut acc = BoundAccumulators::default();
    let mut run = MetaRun {
        records: Vec::with_capacity(cfg.outer_steps),
        u_trace: vec![u.clone()],
        train_losses: Vec::with_capacity(cfg.outer_steps),
        accumulators: acc,
    };
    for t in 1..=cfg.outer_steps {
        let datasets = sample_task_batch(env, cfg, t)?;
        let out = outer_step(model, &u, &datasets, cfg, t, &mut acc)?;
        u = out.u;
        let b = assemble_alt_bound(&acc, &opts.sg, cfg.n, cfg.m_va)?;
        let mut rec = RunRecord {
            epoch: t,
            eps_u: acc.eps_u_sum,
            eps_w: acc.eps_w_sum,
            gnorm_u: acc.gnorm_u_sum,
            gnorm_w: acc.gnorm_w_sum,
            lipschitz: acc.lipschitz_max,
            bound_u: b.bound_u,
            bound_w: b.bound_w,
            bound_total: b.bound_total,
            gnorm_bound_u: b.gnorm_u,
            gnorm_bound_w: b.gnorm_w,
            gnorm_bound_total: b.gnorm_total,
            train_loss: None,
            test_loss: None,
            gap: None,
        };
        if let Some(c) = opts.eval_cadence {
            if t % c == 0 {
                let rng = stream(cfg, Purpose::EvalTest, &[t as u64]);
                let g = observed_gap(model, &u, env, cfg, t, cfg.n_test, cfg.n_test, &rng)?;
                rec.train_loss = Some(g.train_loss);
                rec.test_loss = Some(g.test_loss);
                rec.gap = Some(g.gap);
            }
        }
        check_finite(t, &rec, &u)?;
        run.records.push(rec);
        run.u_trace.push(u.clone());
        run.train_losses.push(out.train_loss);
    }
    run.accumulators = acc;
    Ok(run)
}
