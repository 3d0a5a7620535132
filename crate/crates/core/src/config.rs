//! Run configuration shared by the trainers and the evaluator.

use crate::env::Source;
use crate::error::{Error, Result};
use crate::schedule::Schedules;

/// How per-task contributions to the task-level accumulators are combined
/// within one outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskReduction {
    Mean,
    Sum,
}

/// The split the train side of the observed gap is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapProtocol {
    /// Post-adaptation loss on the support split each task adapted on.
    Support,
    /// Post-adaptation loss on the query split of fresh tasks, same as the
    /// test side.
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of training tasks, enters only the bound denominator.
    pub n: usize,
    pub m: usize,
    pub m_tr: usize,
    pub m_va: usize,
    pub task_batch: usize,
    pub outer_steps: usize,
    pub inner_steps: usize,
    pub mc_replicas: usize,
    pub schedules: Schedules,
    pub test_adapt_steps: usize,
    pub seed: u64,
    /// Inner minibatch size drawn from the support split, 0 = full split.
    pub inner_batch: usize,
    /// Size of the union batch used for incoherence estimates, 0 = full union.
    pub union_batch: usize,
    pub task_reduction: TaskReduction,
    /// Where the "full" gradient of the incoherence estimates is taken.
    /// `Source::Tr` forces it onto the support split, which zeroes every
    /// incoherence term.
    pub incoherence_source: Source,
    /// Inject Langevin noise. When false the trainers run plain gradient
    /// descent while the bound weights still use the configured temperatures.
    pub langevin: bool,
    pub u_init_mean: Vec<f64>,
    pub u_init_std: f64,
    pub n_test: usize,
    pub gap_protocol: GapProtocol,
    /// Inject Langevin noise during test-time adaptation.
    pub test_langevin: bool,
}

impl RunConfig {
    /// The synthetic 2-D mean-estimation setting with the given split.
    pub fn synthetic(m_tr: usize, m_va: usize) -> Self {
        Self {
            n: 20_000,
            m: m_tr + m_va,
            m_tr,
            m_va,
            task_batch: 5,
            outer_steps: 200,
            inner_steps: 4,
            mc_replicas: 10,
            schedules: Schedules::constant(0.2, 0.4, 1e4, 1e4),
            test_adapt_steps: 10,
            seed: 0,
            inner_batch: 0,
            union_batch: 0,
            task_reduction: TaskReduction::Mean,
            incoherence_source: Source::Union,
            langevin: true,
            u_init_mean: vec![-4.0, -4.0],
            u_init_std: 0.1,
            n_test: 500,
            gap_protocol: GapProtocol::Support,
            test_langevin: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.u_init_mean.len()
    }

    /// Checks the cross-field invariants. `m_tr = 0` is allowed here; the
    /// alternate trainer rejects it separately.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("n", self.n),
            ("m", self.m),
            ("task_batch", self.task_batch),
            ("mc_replicas", self.mc_replicas),
            ("n_test", self.n_test),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if self.m_tr + self.m_va != self.m {
            problems.push(format!(
                "m_tr + m_va must equal m (m_tr={}, m_va={}, m={})",
                self.m_tr, self.m_va, self.m
            ));
        }
        if self.task_batch > self.n {
            problems.push(format!(
                "task_batch ({}) must not exceed n ({})",
                self.task_batch, self.n
            ));
        }
        if self.inner_batch > self.m_tr {
            problems.push(format!(
                "inner_batch ({}) exceeds m_tr ({})",
                self.inner_batch, self.m_tr
            ));
        }
        if self.union_batch > self.m {
            problems.push(format!(
                "union_batch ({}) exceeds m ({})",
                self.union_batch, self.m
            ));
        }
        if self.u_init_mean.is_empty() {
            problems.push("u_init_mean must be non-empty".into());
        }
        if !(self.u_init_std >= 0.0 && self.u_init_std.is_finite()) {
            problems.push("u_init_std must be finite and >= 0".into());
        }
        if let Err(e) = self.schedules.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
