//! Bound arithmetic: sub-gaussian constants, the equal-covariance Gaussian
//! KL identity and assembly of the alternate-training bound from the
//! accumulated incoherence and gradient-norm sums.

use crate::env::EnvironmentSpec;
use crate::error::{arg, Error, Result};
use crate::meta::BoundAccumulators;
use crate::model::{LossModel, ModelKind};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubgaussianProvenance {
    MeanEstimationDerived,
    BoundedLoss,
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgaussianSpec {
    pub sigma_sq: f64,
    pub provenance: SubgaussianProvenance,
}

impl SubgaussianSpec {
    pub fn user(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(arg(format!("sigma^2 must be positive, got {sigma_sq}")));
        }
        Ok(Self {
            sigma_sq,
            provenance: SubgaussianProvenance::UserSupplied,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }
}

/// Sub-gaussian constant of the square loss for the worst-case base learner:
/// one inner step from the origin on a single sample gives
/// `W ~ N(2 beta mu, (2 beta)^2 s^2 I)`, so `W - Z` has per-coordinate variance
/// `s_l^2 = s^2 (1 + (2 beta)^2)` and offset `(2 beta - 1) mu`. The loss is then
/// a scaled noncentral chi-square whose lower-tail CGF is bounded by
/// `(2k + d) s_l^4 lambda^2` with `k = (1 - 2 beta)^2 ||mu||^2`, evaluated at
/// the largest `||mu||^2` in the truncation box.
pub fn subgaussian_mean_estimation(
    model: &LossModel,
    env: &EnvironmentSpec,
    inner_lr: f64,
) -> Result<SubgaussianSpec> {
    match model.kind {
        ModelKind::MeanEstimationSq => {}
    }
    if model.dim != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: model.dim,
        });
    }
    if !(inner_lr > 0.0) {
        return Err(arg("inner learning rate must be positive"));
    }
    let step = 2.0 * inner_lr;
    let sigma_l_sq = env.task_var * (1.0 + step * step);
    let k = (1.0 - step).powi(2) * env.max_sq_norm();
    let d = env.dim() as f64;
    let sigma_sq = 2.0 * (2.0 * k + d) * sigma_l_sq * sigma_l_sq;
    if !(sigma_sq > 0.0) {
        return Err(Error::Config(
            "derived sub-gaussian constant is zero (task_var = 0?)".into(),
        ));
    }
    Ok(SubgaussianSpec {
        sigma_sq,
        provenance: SubgaussianProvenance::MeanEstimationDerived,
    })
}

/// A loss bounded in `[a, b]` is `(b - a) / 2`-sub-gaussian.
pub fn subgaussian_bounded(a: f64, b: f64) -> Result<SubgaussianSpec> {
    if !(b > a) {
        return Err(arg(format!("bounded loss needs b > a, got [{a}, {b}]")));
    }
    let half = (b - a) / 2.0;
    Ok(SubgaussianSpec {
        sigma_sq: half * half,
        provenance: SubgaussianProvenance::BoundedLoss,
    })
}

/// `KL(N(mu1, var I) || N(mu2, var I)) = ||mu1 - mu2||^2 / (2 var)`.
pub fn gauss_kl_same_cov(mu1: &ParamVector, mu2: &ParamVector, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(arg(format!("variance must be positive, got {var}")));
    }
    if mu1.len() != mu2.len() {
        return Err(Error::DimensionMismatch {
            expected: mu1.len(),
            got: mu2.len(),
        });
    }
    Ok(mu1.sq_dist(mu2) / (2.0 * var))
}

/// Bound values built from a snapshot of the accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AltBound {
    pub bound_u: f64,
    pub bound_w: f64,
    pub bound_total: f64,
    pub gnorm_u: f64,
    pub gnorm_w: f64,
    pub gnorm_total: f64,
}

/// `sigma * sqrt(eps / (n m_va))` for the meta part, the task part and their
/// sum, for both the incoherence and the gradient-norm accumulators.
pub fn assemble_alt_bound(
    acc: &BoundAccumulators,
    sg: &SubgaussianSpec,
    n: usize,
    m_va: usize,
) -> Result<AltBound> {
    if m_va == 0 {
        return Err(Error::UndefinedBound(
            "alternate-training bound needs m_va >= 1".into(),
        ));
    }
    if n == 0 {
        return Err(Error::UndefinedBound("bound needs n >= 1".into()));
    }
    let denom = n as f64 * m_va as f64;
    let f = |eps: f64| (sg.sigma_sq * eps / denom).sqrt();
    Ok(AltBound {
        bound_u: f(acc.eps_u_sum),
        bound_w: f(acc.eps_w_sum),
        bound_total: f(acc.eps_u_sum + acc.eps_w_sum),
        gnorm_u: f(acc.gnorm_u_sum),
        gnorm_w: f(acc.gnorm_w_sum),
        gnorm_total: f(acc.gnorm_u_sum + acc.gnorm_w_sum),
    })
}

/// Pairs the per-step bound summand `eta gamma ||eps||^2 / 2` with the KL
/// between the two Langevin transition kernels it comes from: means shifted
/// by `eta eps`, common variance `2 eta / gamma`. The summand is always twice
/// the KL.
pub fn step_term_consistency(eta: f64, gamma: f64, eps: &ParamVector) -> Result<(f64, f64)> {
    if !(eta > 0.0 && gamma > 0.0) {
        return Err(arg("eta and gamma must be positive"));
    }
    let term = eta * gamma * eps.sq_norm() / 2.0;
    let zero = ParamVector::zeros(eps.len());
    let kl = gauss_kl_same_cov(&eps.scaled(eta), &zero, 2.0 * eta / gamma)?;
    Ok((term, kl))
}
