//! Cyclic GCP-CPAPR: per cycle, a stochastic search stage followed by a
//! deterministic refinement stage.

use std::fmt;
use std::str::FromStr;

use crate::cpapr::{cpapr_mu, CpaprOptions};
use crate::error::{Error, Result};
use crate::gcp::{gcp_adam, GcpOptions};
use crate::kruskal::KruskalModel;
use crate::seed::Seed;
use crate::tensor::SparseCountTensor;
use crate::trace::{SolveTrace, Stage, StageTag};

/// Registered Poisson CP solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverId {
    CpaprMu,
    GcpAdam,
}

impl SolverId {
    pub fn name(self) -> &'static str {
        match self {
            SolverId::CpaprMu => "CPAPR-MU",
            SolverId::GcpAdam => "GCP-Adam",
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpapr" | "cpapr-mu" | "cpapr_mu" | "mu" => Ok(SolverId::CpaprMu),
            "gcp" | "gcp-adam" | "gcp_adam" | "adam" => Ok(SolverId::GcpAdam),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

/// Options for one of the registered solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverOptions {
    Cpapr(CpaprOptions),
    Gcp(GcpOptions),
}

impl SolverOptions {
    fn kind(&self) -> &'static str {
        match self {
            SolverOptions::Cpapr(_) => "CpaprOptions",
            SolverOptions::Gcp(_) => "GcpOptions",
        }
    }

    /// Work-unit budget carried by the options.
    pub fn budget(&self) -> usize {
        match self {
            SolverOptions::Cpapr(o) => o.max_outer_iters,
            SolverOptions::Gcp(o) => o.max_epochs,
        }
    }
}

/// Dispatches to the solver named by `method`. The trace is returned as the
/// solver produced it. `rng` is only consumed by stochastic solvers.
pub fn cp_poisson<R: rand::Rng + ?Sized>(
    x: &SparseCountTensor,
    rank: usize,
    init: &KruskalModel,
    method: SolverId,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<SolveTrace> {
    match (method, opts) {
        (SolverId::CpaprMu, SolverOptions::Cpapr(o)) => cpapr_mu(x, rank, init, o),
        (SolverId::GcpAdam, SolverOptions::Gcp(o)) => gcp_adam(x, rank, init, o, rng),
        (m, o) => Err(Error::OptionsTypeMismatch { method: m.name(), given: o.kind() }),
    }
}

/// [`cp_poisson`] with the method given by name.
pub fn cp_poisson_named<R: rand::Rng + ?Sized>(
    x: &SparseCountTensor,
    rank: usize,
    init: &KruskalModel,
    method: &str,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<SolveTrace> {
    cp_poisson(x, rank, init, method.parse()?, opts, rng)
}

/// Solver choices and budgets for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpec {
    pub s_method: SolverId,
    pub d_method: SolverId,
    pub s_opts: SolverOptions,
    pub d_opts: SolverOptions,
}

impl CycleSpec {
    /// GCP-Adam for `gcp.max_epochs` epochs, then CPAPR-MU for
    /// `cpapr.max_outer_iters` iterations.
    pub fn gcp_then_cpapr(gcp: GcpOptions, cpapr: CpaprOptions) -> Self {
        CycleSpec {
            s_method: SolverId::GcpAdam,
            d_method: SolverId::CpaprMu,
            s_opts: SolverOptions::Gcp(gcp),
            d_opts: SolverOptions::Cpapr(cpapr),
        }
    }

    /// `(j, k)`: stochastic epochs and deterministic iterations.
    pub fn budgets(&self) -> (usize, usize) {
        (self.s_opts.budget(), self.d_opts.budget())
    }
}

/// An ordered list of cycles, fixed before the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub cycles: Vec<CycleSpec>,
}

impl Strategy {
    pub fn new(cycles: Vec<CycleSpec>) -> Result<Self> {
        if cycles.is_empty() {
            return Err(Error::InvalidArgument("strategy needs at least one cycle".into()));
        }
        Ok(Strategy { cycles })
    }

    /// Total work units the strategy may consume.
    pub fn total_budget(&self) -> usize {
        self.cycles.iter().map(|c| c.budgets().0 + c.budgets().1).sum()
    }
}

/// Hook called before every cycle after the first with the trace so far.
/// It returns the cycle actually run. The static policy returns the planned
/// cycle unchanged.
pub trait CyclePolicy {
    fn next_cycle(&mut self, cycle: usize, planned: &CycleSpec, so_far: &SolveTrace) -> CycleSpec;
}

/// Runs every cycle exactly as planned.
#[derive(Debug, Default, Clone, Copy)]
pub struct StaticPolicy;

impl CyclePolicy for StaticPolicy {
    fn next_cycle(&mut self, _: usize, planned: &CycleSpec, _: &SolveTrace) -> CycleSpec {
        planned.clone()
    }
}

/// Seed of the given stage of the given (0-based) cycle.
pub fn stage_seed(run_seed: Seed, cycle: usize, stage: Stage) -> Seed {
    let s = match stage {
        Stage::Stochastic => 0,
        Stage::Deterministic => 1,
    };
    run_seed.derive_path(&[cycle as u64, s])
}

/// Single-cycle strategy splitting `total` work units into `j` GCP-Adam
/// epochs and `total - j` CPAPR-MU iterations.
pub fn constant_work_strategy(total: usize, j: usize) -> Result<Strategy> {
    constant_work_strategy_with(total, j, &GcpOptions::default(), &CpaprOptions::default())
}

/// [`constant_work_strategy`] with explicit base options; their budgets are
/// overwritten.
pub fn constant_work_strategy_with(
    total: usize,
    j: usize,
    gcp: &GcpOptions,
    cpapr: &CpaprOptions,
) -> Result<Strategy> {
    if j > total {
        return Err(Error::BudgetOutOfRange { j, total });
    }
    Strategy::new(vec![CycleSpec::gcp_then_cpapr(
        gcp.clone().with_budget(j),
        cpapr.clone().with_budget(total - j),
    )])
}

/// Cyclic GCP-CPAPR with the static policy.
pub fn cgc(
    x: &SparseCountTensor,
    rank: usize,
    strategy: &Strategy,
    init: &KruskalModel,
    seed: Seed,
) -> Result<SolveTrace> {
    cgc_with_policy(x, rank, strategy, init, seed, &mut StaticPolicy)
}

/// Cyclic GCP-CPAPR. Returns the concatenated, stage-annotated trace; work
/// counts are cumulative across stages.
pub fn cgc_with_policy(
    x: &SparseCountTensor,
    rank: usize,
    strategy: &Strategy,
    init: &KruskalModel,
    seed: Seed,
    policy: &mut dyn CyclePolicy,
) -> Result<SolveTrace> {
    if strategy.cycles.is_empty() {
        return Err(Error::InvalidArgument("strategy needs at least one cycle".into()));
    }
    if init.rank() != rank {
        return Err(Error::RankMismatch(rank, init.rank()));
    }
    let mut total = SolveTrace {
        entries: Vec::new(),
        converged: false,
        model: init.clone(),
        checkpoints: Vec::new(),
    };

    for (l, planned) in strategy.cycles.iter().enumerate() {
        let cycle = if l == 0 { planned.clone() } else { policy.next_cycle(l, planned, &total) };
        let stages = [
            (Stage::Stochastic, cycle.s_method, &cycle.s_opts),
            (Stage::Deterministic, cycle.d_method, &cycle.d_opts),
        ];
        for (stage, method, opts) in stages {
            let mut rng = stage_seed(seed, l, stage).rng();
            let part = cp_poisson(x, rank, &total.model, method, opts, &mut rng)?;
            append_stage(&mut total, part, StageTag { cycle: l, stage });
        }
    }
    Ok(total)
}

fn append_stage(total: &mut SolveTrace, part: SolveTrace, tag: StageTag) {
    let offset = total.work();
    let elapsed_offset = total.entries.last().map(|e| e.elapsed).unwrap_or_default();
    for mut e in part.entries {
        e.work += offset;
        e.elapsed += elapsed_offset;
        e.tag = Some(tag);
        total.entries.push(e);
    }
    for mut c in part.checkpoints {
        c.work += offset;
        total.checkpoints.push(c);
    }
    total.model = part.model;
    total.converged = part.converged;
}
