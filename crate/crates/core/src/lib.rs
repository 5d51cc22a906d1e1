//! Hard clustering by coordinate ascent on a classification likelihood.
//!
//! The generic engine ([`engine`]) alternates a label step and a per-cluster
//! maximum-likelihood step for any [`engine::ClusterFamily`]. Two families
//! ship with the crate: exponential families ([`expfam`], whose label step
//! is a nearest-mean search under a Bregman divergence) and vector
//! autoregressions for multivariate time series ([`kvars`]).

pub mod data;
pub mod engine;
pub mod error;
pub mod expfam;
pub mod io;
pub mod kvars;
pub mod metrics;
pub mod select;
pub mod synth;

pub use data::{Assignment, Dataset};
pub use engine::{
    check_partial_maximum, run_kmle, ClusterFamily, EmptyClusterPolicy, EngineConfig, FitResult,
    PartialMaxCertificate, StopMode, StopReason, StopRule,
};
pub use error::{Error, Result};
pub use expfam::{ExpFamily, ExpFamilyModel};
pub use kvars::{run_kvars, InitMode, KVarsConfig, KVarsFit, KVarsModel, VarParams};
