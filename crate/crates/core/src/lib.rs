//! Poisson CP decomposition of sparse count tensors.
//!
//! Two solvers, CPAPR multiplicative updates ([`cpapr_mu`]) and sampled
//! Adam on the generalized CP loss ([`gcp_adam`]), plus the alternating
//! hybrid [`cgc`] that runs a stochastic stage followed by a deterministic
//! stage in each cycle. The [`metrics`] module compares sets of computed
//! models, [`synth`] generates test problems, and [`io`] reads and writes
//! tensors and models.

pub mod cpapr;
pub mod error;
pub mod gcp;
pub mod harness;
pub mod hybrid;
pub mod io;
pub mod kernels;
pub mod kruskal;
pub mod metrics;
pub mod objective;
pub mod record;
pub mod report;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod trace;

pub use cpapr::{cpapr_mu, kkt_violation, CpaprOptions};
pub use error::{Error, Result};
pub use gcp::{gcp_adam, GcpOptions, Sampler};
pub use hybrid::{
    cgc, cgc_with_policy, constant_work_strategy, constant_work_strategy_with, cp_poisson,
    cp_poisson_named, stage_seed, CyclePolicy, CycleSpec, SolverId, SolverOptions, StaticPolicy,
    Strategy,
};
pub use kruskal::{ColumnNorm, KruskalModel};
pub use objective::{poisson_nll, poisson_nll_gradient, stochastic_nll_estimate, DEFAULT_EPS};
pub use harness::{load_run, run_multistart, ExperimentConfig, Method, RunOutput, RunStore};
pub use record::{ResultSet, SolveRecord, TraceSummary};
pub use report::{build_report, Report, ReportOptions};
pub use seed::{Seed, SolverRng};
pub use tensor::SparseCountTensor;
pub use trace::{Checkpoint, SolveTrace, Stage, StageTag, TraceEntry};
