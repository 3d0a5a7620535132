//! Joint training: SGLD over the stacked parameter `(u, w_1, ..., w_n)` with
//! the mutual-information bound tracked online.
//!
//! The joint empirical risk is
//! `(1/n) sum_i R_{B_i}(w_i) + (lambda/n) sum_i ||w_i - u||^2`, which makes `u` a
//! learned centroid of the task parameters.

use rayon::prelude::*;

use crate::bounds::SubgaussianSpec;
use crate::config::RunConfig;
use crate::env::{
    sample_dataset, sample_minibatch, sample_task, EnvironmentSpec, Source, TaskDataset,
};
use crate::error::{arg, Error, Result};
use crate::model::LossModel;
use crate::params::ParamVector;
use crate::record::JointRecord;
use crate::rng::{Purpose, RngStream};
use crate::schedule::{noise_std, DecayRule};

#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub u: ParamVector,
    pub ws: Vec<ParamVector>,
}

impl JointParams {
    /// `ws` all start at `u`.
    pub fn tied(u: ParamVector, n: usize) -> Self {
        Self {
            ws: vec![u.clone(); n],
            u,
        }
    }

    pub fn stacked_dim(&self) -> usize {
        self.u.len() + self.ws.iter().map(|w| w.len()).sum::<usize>()
    }

    /// `u` first, then `w_1, ..., w_n`.
    pub fn stack(&self) -> ParamVector {
        ParamVector::concat(std::iter::once(&self.u).chain(&self.ws))
    }

    pub fn unstack(v: &ParamVector, k_dim: usize, n: usize, d: usize) -> Result<Self> {
        let mut lens = vec![k_dim];
        lens.extend(std::iter::repeat_n(d, n));
        let mut blocks = v.split(&lens)?.into_iter();
        let u = blocks.next().expect("u block");
        Ok(Self {
            u,
            ws: blocks.collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub lambda: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

fn check_shapes(model: &LossModel, phi: &JointParams, n_batches: usize) -> Result<()> {
    if phi.ws.len() != n_batches {
        return Err(arg(format!(
            "need one batch per task, got {} batches for {} tasks",
            n_batches,
            phi.ws.len()
        )));
    }
    if phi.ws.is_empty() {
        return Err(arg("joint parameter has no tasks"));
    }
    for w in std::iter::once(&phi.u).chain(&phi.ws) {
        if w.len() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                got: w.len(),
            });
        }
    }
    Ok(())
}

/// Value of the joint empirical risk on the given per-task batches.
pub fn joint_risk(
    model: &LossModel,
    phi: &JointParams,
    batches: &[Vec<&[f64]>],
    coupling: Coupling,
) -> Result<f64> {
    check_shapes(model, phi, batches.len())?;
    let n = phi.ws.len() as f64;
    let mut total = 0.0;
    for (w, b) in phi.ws.iter().zip(batches) {
        total += model.batch_risk(w, b)? + coupling.lambda * w.sq_dist(&phi.u);
    }
    Ok(total / n)
}

/// Gradient of [`joint_risk`] with respect to every coordinate of the stacked
/// parameter, in [`JointParams::stack`] order.
pub fn joint_loss_grad(
    model: &LossModel,
    phi: &JointParams,
    batches: &[Vec<&[f64]>],
    coupling: Coupling,
) -> Result<ParamVector> {
    check_shapes(model, phi, batches.len())?;
    let n = phi.ws.len() as f64;
    let blocks = phi
        .ws
        .par_iter()
        .zip(batches)
        .map(|(w, b)| {
            let mut g = model.batch_grad(w, b)?;
            let pull = w - &phi.u;
            g.axpy(2.0 * coupling.lambda, &pull);
            Ok((g.scaled(1.0 / n), pull))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut gu = ParamVector::zeros(phi.u.len());
    for (_, pull) in &blocks {
        gu.axpy(-2.0 * coupling.lambda / n, pull);
    }
    Ok(ParamVector::concat(
        std::iter::once(&gu).chain(blocks.iter().map(|(g, _)| g)),
    ))
}

/// `phi - eta grad + N(0, sigma^2 I)`; plain gradient descent when `sigma = 0`.
pub fn joint_sgld_step(
    phi: &JointParams,
    grad: &ParamVector,
    eta: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<JointParams> {
    let mut v = phi.stack();
    if grad.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: grad.len(),
        });
    }
    if !(sigma >= 0.0) {
        return Err(arg(format!("noise std must be >= 0, got {sigma}")));
    }
    v.axpy(-eta, grad);
    if sigma > 0.0 {
        v += &rng.normal_vec(v.len(), sigma);
    }
    let d = phi.ws.first().map_or(0, |w| w.len());
    JointParams::unstack(&v, phi.u.len(), phi.ws.len(), d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzMode {
    /// Running maximum of observed stacked gradient norms.
    RunningMax,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradBoundTracker {
    pub mode: LipschitzMode,
    pub l_hat: f64,
    pub per_step_terms: Vec<f64>,
}

impl GradBoundTracker {
    pub fn new(mode: LipschitzMode) -> Self {
        let l_hat = match mode {
            LipschitzMode::RunningMax => 0.0,
            LipschitzMode::Fixed(l) => l,
        };
        Self {
            mode,
            l_hat,
            per_step_terms: Vec::new(),
        }
    }

    pub fn observe(&mut self, grad_norm: f64) -> f64 {
        if let LipschitzMode::RunningMax = self.mode {
            self.l_hat = self.l_hat.max(grad_norm);
        }
        self.l_hat
    }

    pub fn push(&mut self, term: f64) {
        self.per_step_terms.push(term);
    }

    pub fn mi_sum(&self) -> f64 {
        self.per_step_terms.iter().sum()
    }
}

/// `(D/2) log(1 + eta^2 L^2 / (D sigma^2))` with `D` the stacked dimension.
pub fn mi_step_term(eta: f64, sigma: f64, l_hat: f64, stacked_dim: usize) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::UndefinedBound(format!(
            "mutual-information term needs sigma > 0, got {sigma}"
        )));
    }
    if stacked_dim == 0 {
        return Err(arg("stacked dimension must be >= 1"));
    }
    let d = stacked_dim as f64;
    Ok(d / 2.0 * (eta * eta * l_hat * l_hat / (d * sigma * sigma)).ln_1p())
}

/// `sqrt(2 sigma^2 I / (n m))`.
pub fn joint_bound(mi_sum: f64, sg: &SubgaussianSpec, n: usize, m: usize) -> Result<f64> {
    if !(mi_sum >= 0.0) {
        return Err(arg(format!(
            "mutual-information sum must be >= 0, got {mi_sum}"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::UndefinedBound("joint bound needs n, m >= 1".into()));
    }
    Ok((2.0 * sg.sigma_sq * mi_sum / (n as f64 * m as f64)).sqrt())
}

/// `sigma L / sqrt(n m) * sqrt(c log T + c)`, valid for `eta_t = c / t` and
/// `sigma_t = sqrt(eta_t)`. `T` is real so the formula can be probed between
/// integers.
pub fn joint_closed_form(
    sg: &SubgaussianSpec,
    l_hat: f64,
    n: usize,
    m: usize,
    c: f64,
    t: f64,
) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(arg(format!("closed form needs T >= 1, got {t}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::UndefinedBound("joint bound needs n, m >= 1".into()));
    }
    Ok(sg.sigma() * l_hat / (n as f64 * m as f64).sqrt() * (c * t.ln() + c).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSettings {
    pub coupling: Coupling,
    /// Per-task minibatch size, 0 = the whole dataset.
    pub batch: usize,
    pub lipschitz: LipschitzMode,
}

impl Default for JointSettings {
    fn default() -> Self {
        Self {
            coupling: Coupling::default(),
            batch: 0,
            lipschitz: LipschitzMode::RunningMax,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointRun {
    pub records: Vec<JointRecord>,
    pub phi: JointParams,
    pub tracker: GradBoundTracker,
}

/// The `n` training datasets of a joint run.
pub fn sample_joint_tasks(env: &EnvironmentSpec, cfg: &RunConfig) -> Result<Vec<TaskDataset>> {
    (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_purpose(cfg.seed, Purpose::JointTasks, &[i as u64]);
            let task = sample_task(env, &mut rng)?;
            sample_dataset(&task, env, cfg.m, cfg.m_tr, &mut rng)
        })
        .collect()
}

/// `c` when the schedule admits the closed form: inverse-t decay with
/// `gamma_outer = 2`, so that the noise std is `sqrt(eta_t)`.
fn closed_form_constant(cfg: &RunConfig) -> Option<f64> {
    match cfg.schedules.decay {
        DecayRule::InverseT { c } if cfg.schedules.gamma_outer == 2.0 => Some(c),
        _ => None,
    }
}

/// Runs `T` joint SGLD steps on `n` fixed tasks. The noise std at step `t` is
/// `sqrt(2 eta_t / gamma_outer)`.
pub fn run_joint(
    model: &LossModel,
    cfg: &RunConfig,
    env: &EnvironmentSpec,
    settings: &JointSettings,
    sg: &SubgaussianSpec,
) -> Result<JointRun> {
    cfg.validate()?;
    env.validate()?;
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
    if settings.batch > cfg.m {
        return Err(Error::Config(format!(
            "joint batch ({}) exceeds m ({})",
            settings.batch, cfg.m
        )));
    }
    let datasets = sample_joint_tasks(env, cfg)?;
    let mut init_rng = RngStream::for_purpose(cfg.seed, Purpose::Init, &[1]);
    let u0 = &ParamVector::from_slice(&cfg.u_init_mean)?
        + &init_rng.normal_vec(cfg.dim(), cfg.u_init_std);
    let mut phi = JointParams::tied(u0, cfg.n);
    let stacked_dim = phi.stacked_dim();
    let mut tracker = GradBoundTracker::new(settings.lipschitz);
    let closed_c = closed_form_constant(cfg);
    let full: Vec<Vec<&[f64]>> = datasets
        .iter()
        .map(|ds| ds.source_points(Source::Union))
        .collect();
    let mut records = Vec::with_capacity(cfg.outer_steps);
    let mut mi_sum = 0.0;

    for t in 1..=cfg.outer_steps {
        let t64 = t as u64;
        let batches: Vec<Vec<&[f64]>> = if settings.batch == 0 {
            full.clone()
        } else {
            datasets
                .iter()
                .enumerate()
                .map(|(i, ds)| {
                    let mut rng =
                        RngStream::for_purpose(cfg.seed, Purpose::JointBatch, &[t64, i as u64]);
                    let idx = sample_minibatch(ds, Source::Union, settings.batch, &mut rng)?;
                    Ok(ds.points(&idx))
                })
                .collect::<Result<_>>()?
        };
        let grad = joint_loss_grad(model, &phi, &batches, settings.coupling)?;
        let l_hat = tracker.observe(grad.norm());
        let eta = cfg.schedules.eta(t)?;
        let sigma = if cfg.langevin {
            noise_std(eta, cfg.schedules.gamma_outer)?
        } else {
            0.0
        };
        let term = mi_step_term(eta, sigma, l_hat, stacked_dim)?;
        tracker.push(term);
        mi_sum += term;

        let mut rng = RngStream::for_purpose(cfg.seed, Purpose::JointNoise, &[t64]);
        phi = joint_sgld_step(&phi, &grad, eta, sigma, &mut rng)?;
        if !phi.stack().is_finite() {
            return Err(Error::NonFinite {
                epoch: t,
                what: "joint parameter".into(),
            });
        }

        let closed_form = closed_c
            .map(|c| joint_closed_form(sg, l_hat, cfg.n, cfg.m, c, t as f64))
            .transpose()?;
        records.push(JointRecord {
            t,
            l_hat,
            mi_step_term: term,
            mi_sum,
            joint_bound: joint_bound(mi_sum, sg, cfg.n, cfg.m)?,
            closed_form,
            train_risk: joint_risk(model, &phi, &full, settings.coupling)?,
        });
    }
    Ok(JointRun {
        records,
        phi,
        tracker,
    })
}
