//! Meta-SGLD and joint SGLD on synthetic mean-estimation tasks, with online
//! estimates of information-theoretic generalization bounds.
//!
//! The alternate trainer ([`meta::run_meta_sgld`]) tracks the gradient
//! incoherence bound alongside a gradient-norm baseline; the joint trainer
//! ([`joint::run_joint`]) tracks the mutual-information bound of the stacked
//! Langevin chain.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod joint;
pub mod meta;
pub mod model;
pub mod params;
pub mod record;
pub mod rng;
pub mod schedule;

pub use bounds::{AltBound, SubgaussianProvenance, SubgaussianSpec};
pub use config::{GapProtocol, RunConfig, TaskReduction};
pub use env::{EnvironmentSpec, Source, TaskDataset, TaskSpec};
pub use error::{Error, Result};
pub use eval::GapReport;
pub use joint::{Coupling, GradBoundTracker, JointParams, JointRun, JointSettings, LipschitzMode};
pub use meta::{BoundAccumulators, InnerPath, MetaRun, MetaRunOptions};
pub use model::{LossModel, ModelKind};
pub use params::ParamVector;
pub use record::{JointRecord, RunRecord};
pub use rng::{derive_stream, Purpose, RngStream};
pub use schedule::{DecayRule, Rate, Schedules};
