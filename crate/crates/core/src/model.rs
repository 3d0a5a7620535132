//! Loss models with analytic gradients.

use crate::error::{Error, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `l(w, z) = ||w - z||^2`.
    MeanEstimationSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossModel {
    pub dim: usize,
    pub kind: ModelKind,
}

impl LossModel {
    pub fn mean_estimation(dim: usize) -> Self {
        Self {
            dim,
            kind: ModelKind::MeanEstimationSq,
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    fn check_batch(&self, w: &ParamVector, batch: &[&[f64]]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check(w.len())?;
        for z in batch {
            self.check(z.len())?;
        }
        Ok(())
    }

    pub fn loss(&self, w: &ParamVector, z: &[f64]) -> Result<f64> {
        self.check(w.len())?;
        self.check(z.len())?;
        Ok(self.loss_unchecked(w.as_slice(), z))
    }

    fn loss_unchecked(&self, w: &[f64], z: &[f64]) -> f64 {
        match self.kind {
            ModelKind::MeanEstimationSq => w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Mean per-sample loss over `batch`.
    pub fn batch_risk(&self, w: &ParamVector, batch: &[&[f64]]) -> Result<f64> {
        self.check_batch(w, batch)?;
        let total: f64 = batch
            .iter()
            .map(|z| self.loss_unchecked(w.as_slice(), z))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Gradient of [`batch_risk`](Self::batch_risk) at `w`.
    pub fn batch_grad(&self, w: &ParamVector, batch: &[&[f64]]) -> Result<ParamVector> {
        self.check_batch(w, batch)?;
        match self.kind {
            ModelKind::MeanEstimationSq => {
                let mean = batch_mean(batch, self.dim);
                let g = w
                    .as_slice()
                    .iter()
                    .zip(&mean)
                    .map(|(wi, mi)| 2.0 * (wi - mi))
                    .collect();
                ParamVector::new(g)
            }
        }
    }

    /// Central-difference approximation of the batch gradient with step `h`.
    pub fn finite_diff_grad(
        &self,
        w: &ParamVector,
        batch: &[&[f64]],
        h: f64,
    ) -> Result<ParamVector> {
        if !(h > 0.0) {
            return Err(Error::Argument(format!("step h must be positive, got {h}")));
        }
        self.check_batch(w, batch)?;
        let mut g = Vec::with_capacity(self.dim);
        let mut probe = w.as_slice().to_vec();
        for i in 0..self.dim {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = self.risk_slice(&probe, batch);
            probe[i] = orig - h;
            let down = self.risk_slice(&probe, batch);
            probe[i] = orig;
            g.push((up - down) / (2.0 * h));
        }
        ParamVector::new(g)
    }

    fn risk_slice(&self, w: &[f64], batch: &[&[f64]]) -> f64 {
        batch.iter().map(|z| self.loss_unchecked(w, z)).sum::<f64>() / batch.len() as f64
    }
}

/// Coordinate-wise mean of a non-empty batch, summed in batch order.
pub fn batch_mean(batch: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for z in batch {
        for (m, v) in mean.iter_mut().zip(z.iter()) {
            *m += v;
        }
    }
    let n = batch.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}
