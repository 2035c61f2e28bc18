//! Multi-start experiments: configuration, parallel execution over derived
//! seeds, and the run directory layout.
//!
//! A run directory contains
//!
//! * `run.json`: the configuration and a description of the tensor,
//! * `tensor.tns`: the data,
//! * `truth.model`: the generating model, for synthetic problems only,
//! * `models/<run_id>.model`: one file per solve,
//! * `records.csv`: the record index, in union order,
//! * `timings.csv`: wall times, kept apart so the other files are
//!   byte-identical across reruns.
//!
//! While a run is in progress, finished solves are appended to
//! `records.partial.csv`, which is removed once `records.csv` is written.

use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpapr::{cpapr_mu, CpaprOptions};
use crate::error::{Error, Result};
use crate::gcp::{gcp_adam, GcpOptions};
use crate::hybrid::{cgc, stage_seed, CycleSpec, Strategy};
use crate::io::{read_frostt_file, read_model_file, write_frostt_file, write_model_file};
use crate::kruskal::KruskalModel;
use crate::objective::{poisson_nll, DEFAULT_EPS};
use crate::record::{ResultSet, SolveRecord, TraceSummary};
use crate::seed::Seed;
use crate::synth::{create_guess, create_guess_scaled, ProblemSpec};
use crate::tensor::SparseCountTensor;
use crate::trace::{SolveTrace, Stage};

/// Labels of the result sets, in union order.
pub const GCP_SET: &str = "gcp";
pub const CPAPR_SET: &str = "cpapr";
pub const HYBRID_SET: &str = "cgc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cpapr,
    Gcp,
    Cgc,
    /// Constant-work hybrid study over `j_values`, with optional baselines.
    Sweep,
}

/// One experiment, as a flat key-value document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// FROSTT file with the data. Mutually exclusive with `problem_shape`.
    pub tensor: Option<PathBuf>,
    pub problem_shape: Option<Vec<usize>>,
    /// Rank of the generating model; defaults to `rank`.
    pub problem_rank: Option<usize>,
    pub problem_density: f64,
    /// Seed of the generator; defaults to `seed`.
    pub problem_seed: Option<u64>,

    pub rank: usize,
    pub method: Method,
    pub num_starts: usize,
    pub seed: u64,
    /// Scale initial guesses so they sum to the data's total count.
    pub scale_guess: bool,
    pub nll_eps: f64,

    pub cpapr_max_iters: usize,
    pub cpapr_inner_iters: usize,
    pub cpapr_kkt_tol: f64,

    pub gcp_max_epochs: usize,
    pub gcp_alpha0: f64,
    pub gcp_alpha_final: f64,
    pub gcp_decay: f64,
    pub gcp_iters_per_epoch: usize,
    pub gcp_samples_nonzero: Option<usize>,
    pub gcp_samples_zero: Option<usize>,
    pub gcp_fit_samples_nonzero: Option<usize>,
    pub gcp_fit_samples_zero: Option<usize>,

    /// Cycle count and per-cycle budgets for `method = "cgc"`.
    pub cgc_cycles: usize,
    pub cgc_j: usize,
    pub cgc_k: usize,

    /// Total work per hybrid run in a sweep.
    pub work: usize,
    pub j_values: Vec<usize>,
    /// Starts for each of the CPAPR-only and GCP-only baselines of a sweep.
    pub baseline_starts: usize,

    pub eps_list: Vec<f64>,
    pub t_step: f64,
    pub taus: Vec<f64>,

    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Not written to `run.json`, since it
    /// does not affect results.
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let cpapr = CpaprOptions::default();
        let gcp = GcpOptions::default();
        ExperimentConfig {
            tensor: None,
            problem_shape: None,
            problem_rank: None,
            problem_density: 0.01,
            problem_seed: None,
            rank: 5,
            method: Method::Sweep,
            num_starts: 20,
            seed: 0,
            scale_guess: true,
            nll_eps: DEFAULT_EPS,
            cpapr_max_iters: cpapr.max_outer_iters,
            cpapr_inner_iters: cpapr.max_inner_iters,
            cpapr_kkt_tol: cpapr.kkt_tol,
            gcp_max_epochs: gcp.max_epochs,
            gcp_alpha0: gcp.alpha0,
            gcp_alpha_final: gcp.alpha_final,
            gcp_decay: gcp.decay,
            gcp_iters_per_epoch: gcp.iters_per_epoch,
            gcp_samples_nonzero: None,
            gcp_samples_zero: None,
            gcp_fit_samples_nonzero: None,
            gcp_fit_samples_zero: None,
            cgc_cycles: 1,
            cgc_j: 50,
            cgc_k: 50,
            work: 100,
            j_values: vec![0, 2, 4, 8, 16, 32, 64, 100],
            baseline_starts: 0,
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            t_step: 0.01,
            taus: vec![0.85, 0.95],
            output_dir: None,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match (&self.tensor, &self.problem_shape) {
            (Some(_), Some(_)) => return bad("set either `tensor` or `problem_shape`, not both".into()),
            (None, None) => return bad("one of `tensor` or `problem_shape` is required".into()),
            _ => {}
        }
        if self.rank == 0 {
            return bad("rank must be positive".into());
        }
        if self.num_starts == 0 {
            return bad("num_starts must be at least 1".into());
        }
        match self.method {
            Method::Sweep => {
                if self.work == 0 {
                    return bad("sweep requires work >= 1".into());
                }
                if self.j_values.is_empty() {
                    return bad("sweep requires a non-empty j_values".into());
                }
                if let Some(&j) = self.j_values.iter().find(|&&j| j > self.work) {
                    return Err(Error::BudgetOutOfRange { j, total: self.work });
                }
            }
            Method::Cgc if self.cgc_cycles == 0 => return bad("cgc_cycles must be at least 1".into()),
            _ => {}
        }
        self.cpapr_options().validate()?;
        self.gcp_options().validate()?;
        Ok(())
    }

    pub fn cpapr_options(&self) -> CpaprOptions {
        CpaprOptions {
            max_outer_iters: self.cpapr_max_iters,
            max_inner_iters: self.cpapr_inner_iters,
            kkt_tol: self.cpapr_kkt_tol,
            eps: self.nll_eps,
            ..CpaprOptions::default()
        }
    }

    pub fn gcp_options(&self) -> GcpOptions {
        GcpOptions {
            alpha0: self.gcp_alpha0,
            alpha_final: self.gcp_alpha_final,
            decay: self.gcp_decay,
            iters_per_epoch: self.gcp_iters_per_epoch,
            samples_nonzero: self.gcp_samples_nonzero,
            samples_zero: self.gcp_samples_zero,
            fit_samples_nonzero: self.gcp_fit_samples_nonzero,
            fit_samples_zero: self.gcp_fit_samples_zero,
            max_epochs: self.gcp_max_epochs,
            eps: self.nll_eps,
            ..GcpOptions::default()
        }
    }

    pub fn problem_spec(&self) -> Option<ProblemSpec> {
        self.problem_shape.as_ref().map(|shape| ProblemSpec {
            shape: shape.clone(),
            rank: self.problem_rank.unwrap_or(self.rank),
            density: self.problem_density,
            seed: self.problem_seed.unwrap_or(self.seed),
        })
    }

    /// Reads or generates the data. The generating model is returned for
    /// synthetic problems.
    pub fn load_tensor(&self) -> Result<(SparseCountTensor, Option<KruskalModel>)> {
        if let Some(path) = &self.tensor {
            return Ok((read_frostt_file(path)?, None));
        }
        let spec = self
            .problem_spec()
            .ok_or_else(|| Error::InvalidArgument("no tensor source".into()))?;
        let (truth, x) = spec.generate()?;
        Ok((x, Some(truth)))
    }
}

/// What a single solve runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Cpapr(CpaprOptions),
    Gcp(GcpOptions),
    Hybrid { j: usize, k: usize, strategy: Strategy },
}

impl Job {
    fn method(&self) -> &'static str {
        match self {
            Job::Cpapr(_) => "CPAPR-MU",
            Job::Gcp(_) => "GCP-Adam",
            Job::Hybrid { .. } => "CGC",
        }
    }

    fn digest(&self) -> String {
        format!("{:016x}", fnv1a(format!("{self:?}").as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// One planned solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// Index into [`plan_sets`].
    pub set: usize,
    pub run_id: String,
    pub start: usize,
    pub job: Job,
}

/// Seed of start `n`: the initial guess uses `derive(0)` of it and the
/// solver `derive(1)`, so start `n` sees the same guess in every set.
pub fn start_seed(base: u64, start: usize) -> Seed {
    Seed(base).derive(start as u64)
}

pub fn initial_guess(shape: &[usize], rank: usize, total: Option<f64>, start: Seed) -> KruskalModel {
    let mut rng = start.derive(0).rng();
    match total {
        Some(t) => create_guess_scaled(shape, rank, t, &mut rng),
        None => create_guess(shape, rank, &mut rng),
    }
}

/// Runs one job from `init`. Standalone GCP-Adam draws from the stream of
/// the first stochastic stage of a hybrid run with the same seed, so the
/// degenerate hybrid budgets reproduce the standalone solvers exactly.
pub fn run_job(x: &SparseCountTensor, rank: usize, init: &KruskalModel, job: &Job, solver: Seed) -> Result<SolveTrace> {
    match job {
        Job::Cpapr(o) => cpapr_mu(x, rank, init, o),
        Job::Gcp(o) => gcp_adam(x, rank, init, o, &mut stage_seed(solver, 0, Stage::Stochastic).rng()),
        Job::Hybrid { strategy, .. } => cgc(x, rank, strategy, init, solver),
    }
}

/// Labels of the sets a config produces, in union order.
pub fn plan_sets(config: &ExperimentConfig) -> Vec<&'static str> {
    match config.method {
        Method::Cpapr => vec![CPAPR_SET],
        Method::Gcp => vec![GCP_SET],
        Method::Cgc => vec![HYBRID_SET],
        Method::Sweep if config.baseline_starts > 0 => vec![GCP_SET, CPAPR_SET, HYBRID_SET],
        Method::Sweep => vec![HYBRID_SET],
    }
}

/// Every solve of the experiment, in union order.
pub fn plan(config: &ExperimentConfig) -> Result<Vec<Task>> {
    config.validate()?;
    let sets = plan_sets(config);
    let set_of = |label| sets.iter().position(|&s| s == label).expect("planned set");
    let mut tasks = Vec::new();
    let mut push = |set: usize, prefix: String, starts: usize, job: Job| {
        for start in 0..starts {
            tasks.push(Task { set, run_id: format!("{prefix}-s{start:04}"), start, job: job.clone() });
        }
    };
    let (cpapr, gcp) = (config.cpapr_options(), config.gcp_options());
    match config.method {
        Method::Cpapr => push(set_of(CPAPR_SET), CPAPR_SET.into(), config.num_starts, Job::Cpapr(cpapr)),
        Method::Gcp => push(set_of(GCP_SET), GCP_SET.into(), config.num_starts, Job::Gcp(gcp)),
        Method::Cgc => {
            let (j, k) = (config.cgc_j, config.cgc_k);
            let cycle = CycleSpec::gcp_then_cpapr(gcp.with_budget(j), cpapr.with_budget(k));
            let strategy = Strategy::new(vec![cycle; config.cgc_cycles])?;
            push(set_of(HYBRID_SET), format!("{HYBRID_SET}-j{j:04}-k{k:04}"), config.num_starts, Job::Hybrid { j, k, strategy });
        }
        Method::Sweep => {
            if config.baseline_starts > 0 {
                push(set_of(GCP_SET), GCP_SET.into(), config.baseline_starts, Job::Gcp(gcp.clone()));
                push(set_of(CPAPR_SET), CPAPR_SET.into(), config.baseline_starts, Job::Cpapr(cpapr.clone()));
            }
            for &j in &config.j_values {
                let k = config.work - j;
                let strategy = crate::hybrid::constant_work_strategy_with(config.work, j, &gcp, &cpapr)?;
                push(set_of(HYBRID_SET), format!("{HYBRID_SET}-j{j:04}-k{k:04}"), config.num_starts, Job::Hybrid { j, k, strategy });
            }
        }
    }
    Ok(tasks)
}

/// Result sets of an experiment, in union order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub sets: Vec<ResultSet>,
}

impl RunOutput {
    pub fn set(&self, label: &str) -> Option<&ResultSet> {
        self.sets.iter().find(|s| s.label == label)
    }
}

fn solve_task(x: &SparseCountTensor, config: &ExperimentConfig, task: &Task) -> Result<SolveRecord> {
    let started = Instant::now();
    let seed = start_seed(config.seed, task.start);
    let total = config.scale_guess.then(|| x.total_count() as f64);
    let init = initial_guess(x.shape(), config.rank, total, seed);
    let trace = run_job(x, config.rank, &init, &task.job, seed.derive(1))?;
    let nll = poisson_nll(x, &trace.model, config.nll_eps)?.value;
    let pair = match &task.job {
        Job::Hybrid { j, k, .. } => Some((*j, *k)),
        _ => None,
    };
    Ok(SolveRecord {
        run_id: task.run_id.clone(),
        seed: seed.0,
        method: task.job.method().to_string(),
        options_digest: task.job.digest(),
        pair,
        nll,
        work: trace.work(),
        converged: trace.converged,
        summary: TraceSummary::of(&trace),
        model: trace.model,
        wall_time: started.elapsed(),
    })
}

/// Runs every planned solve on up to `config.threads` workers. Records are
/// returned in plan order whatever the completion order. With a store, each
/// finished solve is persisted immediately.
pub fn run_multistart(
    config: &ExperimentConfig,
    x: &SparseCountTensor,
    store: Option<&RunStore>,
) -> Result<RunOutput> {
    let tasks = plan(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let records: Vec<SolveRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let record = solve_task(x, config, task)?;
                if let Some(store) = store {
                    store.save(plan_sets(config)[task.set], &record)?;
                }
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut sets: Vec<ResultSet> = plan_sets(config).into_iter().map(ResultSet::new).collect();
    for (task, record) in tasks.iter().zip(records) {
        sets[task.set].push(record);
    }
    Ok(RunOutput { sets })
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub run_id: String,
    pub set: String,
    pub method: String,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub seed: u64,
    pub nll: f64,
    pub work: usize,
    pub converged: bool,
    pub options_digest: String,
    pub initial_nll: Option<f64>,
    pub trace_entries: usize,
    pub rejected_epochs: usize,
    pub final_kkt: Option<f64>,
    pub model_file: String,
}

impl RecordRow {
    fn of(set: &str, r: &SolveRecord) -> Self {
        RecordRow {
            run_id: r.run_id.clone(),
            set: set.to_string(),
            method: r.method.clone(),
            j: r.pair.map(|p| p.0),
            k: r.pair.map(|p| p.1),
            seed: r.seed,
            nll: r.nll,
            work: r.work,
            converged: r.converged,
            options_digest: r.options_digest.clone(),
            initial_nll: r.summary.initial_nll,
            trace_entries: r.summary.entries,
            rejected_epochs: r.summary.rejected_epochs,
            final_kkt: r.summary.final_kkt,
            model_file: model_path(&r.run_id),
        }
    }
}

fn model_path(run_id: &str) -> String {
    format!("models/{run_id}.model")
}

#[derive(Debug, Serialize, Deserialize)]
struct TimingRow {
    run_id: String,
    wall_time_s: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub tensor: String,
    pub shape: Vec<usize>,
    pub nnz: usize,
    pub total_count: u64,
    pub truth: Option<String>,
}

const PARTIAL_RECORDS: &str = "records.partial.csv";

/// Writer for a run directory.
pub struct RunStore {
    dir: PathBuf,
    partial: Mutex<csv::Writer<File>>,
}

impl RunStore {
    /// Creates the directory and writes the manifest and the data.
    pub fn create(
        dir: impl AsRef<Path>,
        config: &ExperimentConfig,
        x: &SparseCountTensor,
        truth: Option<&KruskalModel>,
    ) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("models"))?;
        write_frostt_file(x, dir.join("tensor.tns"))?;
        if let Some(t) = truth {
            write_model_file(t, dir.join("truth.model"))?;
        }
        let manifest = RunManifest {
            config: config.clone(),
            tensor: "tensor.tns".into(),
            shape: x.shape().to_vec(),
            nnz: x.nnz(),
            total_count: x.total_count(),
            truth: truth.map(|_| "truth.model".into()),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("run.json"), json + "\n")?;
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(PARTIAL_RECORDS))?;
        let partial = Mutex::new(csv::Writer::from_writer(file));
        Ok(RunStore { dir, partial })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save(&self, set: &str, record: &SolveRecord) -> Result<()> {
        write_model_file(&record.model, self.dir.join(model_path(&record.run_id)))?;
        let mut w = self.partial.lock().expect("record writer poisoned");
        w.serialize(RecordRow::of(set, record)).map_err(csv_error)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `records.csv` and `timings.csv` in union order and removes the
    /// in-progress file.
    pub fn finish(self, output: &RunOutput) -> Result<()> {
        let mut records = csv::Writer::from_writer(BufWriter::new(File::create(self.dir.join("records.csv"))?));
        let mut timings = csv::Writer::from_writer(BufWriter::new(File::create(self.dir.join("timings.csv"))?));
        for set in &output.sets {
            for r in &set.records {
                records.serialize(RecordRow::of(&set.label, r)).map_err(csv_error)?;
                timings
                    .serialize(TimingRow { run_id: r.run_id.clone(), wall_time_s: r.wall_time.as_secs_f64() })
                    .map_err(csv_error)?;
            }
        }
        records.flush()?;
        timings.flush()?;
        drop(self.partial);
        fs::remove_file(self.dir.join(PARTIAL_RECORDS))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub tensor: SparseCountTensor,
    pub output: RunOutput,
}

/// Reads a finished run directory. Sets appear in the order of their first
/// record, which is the union order the run was written in.
pub fn load_run(dir: impl AsRef<Path>) -> Result<LoadedRun> {
    let dir = dir.as_ref();
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)
        .map_err(|e| Error::ParseError { line: e.line(), message: format!("run.json: {e}") })?;
    let tensor = read_frostt_file(dir.join(&manifest.tensor))?;

    let mut wall = std::collections::HashMap::new();
    if let Ok(mut rdr) = csv::Reader::from_path(dir.join("timings.csv")) {
        for row in rdr.deserialize::<TimingRow>() {
            let row = row.map_err(csv_error)?;
            wall.insert(row.run_id, Duration::from_secs_f64(row.wall_time_s));
        }
    }

    let mut sets: Vec<ResultSet> = Vec::new();
    let mut rdr = csv::Reader::from_path(dir.join("records.csv")).map_err(csv_error)?;
    for (i, row) in rdr.deserialize::<RecordRow>().enumerate() {
        let row = row.map_err(|e| Error::ParseError { line: i + 2, message: e.to_string() })?;
        let model = read_model_file(dir.join(&row.model_file))?;
        let record = SolveRecord {
            wall_time: wall.get(&row.run_id).copied().unwrap_or_default(),
            run_id: row.run_id,
            seed: row.seed,
            method: row.method,
            options_digest: row.options_digest,
            pair: row.j.zip(row.k),
            model,
            nll: row.nll,
            work: row.work,
            converged: row.converged,
            summary: TraceSummary {
                initial_nll: row.initial_nll,
                entries: row.trace_entries,
                rejected_epochs: row.rejected_epochs,
                final_kkt: row.final_kkt,
            },
        };
        match sets.iter_mut().find(|s| s.label == row.set) {
            Some(s) => s.push(record),
            None => {
                let mut s = ResultSet::new(row.set);
                s.push(record);
                sets.push(s);
            }
        }
    }
    Ok(LoadedRun { manifest, tensor, output: RunOutput { sets } })
}
