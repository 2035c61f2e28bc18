use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgc_core::harness::{initial_guess, run_job, start_seed, Job};
use cgc_core::io::{read_frostt_file, read_model_file, write_frostt_file, write_model_file};
use cgc_core::synth::ProblemSpec;
use cgc_core::{
    build_report, load_run, poisson_nll, run_multistart, CpaprOptions, CycleSpec, ExperimentConfig, GcpOptions,
    ReportOptions, RunStore, SolveTrace, SolverId, Stage, Strategy,
};
use serde::Serialize;

use crate::args::{ConvertArgs, DecomposeArgs, GenArgs, GlobalArgs, ReportArgs, SweepArgs};

pub const OUTPUT_DIR_ENV: &str = "CGC_OUTPUT_DIR";

pub fn gen(global: &GlobalArgs, args: &GenArgs) -> Result<()> {
    let spec = ProblemSpec {
        shape: args.shape.clone(),
        rank: args.rank,
        density: args.density,
        seed: global.seed.unwrap_or(0),
    };
    let (truth, x) = spec.generate()?;
    write_frostt_file(&x, &args.out)?;
    if let Some(path) = &args.truth {
        write_model_file(&truth, path)?;
    }
    println!("wrote {} ({} nonzeros, total count {})", args.out.display(), x.nnz(), x.total_count());
    Ok(())
}

pub fn decompose(global: &GlobalArgs, args: &DecomposeArgs) -> Result<()> {
    let x = read_frostt_file(&args.tensor)?;
    let cpapr = CpaprOptions { kkt_tol: args.kkt_tol, ..CpaprOptions::default() }.with_budget(args.max_iters);
    let gcp = GcpOptions::default().with_budget(args.epochs);
    let job = match args.method.to_ascii_lowercase().as_str() {
        "cgc" | "hybrid" => {
            let cycle = CycleSpec::gcp_then_cpapr(gcp.with_budget(args.j), cpapr.with_budget(args.k));
            Job::Hybrid { j: args.j, k: args.k, strategy: Strategy::new(vec![cycle; args.cycles])? }
        }
        other => match other.parse::<SolverId>()? {
            SolverId::CpaprMu => Job::Cpapr(cpapr),
            SolverId::GcpAdam => Job::Gcp(gcp),
        },
    };
    let seed = start_seed(global.seed.unwrap_or(0), args.start);
    let total = (!args.unscaled_guess).then(|| x.total_count() as f64);
    let init = initial_guess(x.shape(), args.rank, total, seed);
    let trace = run_job(&x, args.rank, &init, &job, seed.derive(1))?;
    let nll = poisson_nll(&x, &trace.model, cgc_core::DEFAULT_EPS)?.value;
    write_model_file(&trace.model, &args.out)?;
    if let Some(path) = &args.trace {
        fs::write(path, trace_csv(&trace))?;
    }
    println!("nll={nll} work={} converged={}", trace.work(), trace.converged);
    Ok(())
}

fn trace_csv(trace: &SolveTrace) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("work,nll,nll_is_estimate,kkt_violation,learning_rate,rejected,cycle,stage\n");
    for e in &trace.entries {
        let (cycle, stage) = match e.tag {
            Some(t) => (
                t.cycle.to_string(),
                match t.stage {
                    Stage::Stochastic => "S",
                    Stage::Deterministic => "D",
                },
            ),
            None => (String::new(), ""),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.work,
            e.nll,
            e.nll_is_estimate,
            opt(e.kkt_violation),
            opt(e.learning_rate),
            e.rejected,
            cycle,
            stage
        );
    }
    s
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| crate::UsageError(format!("{}: {e}", path.display())))?;
    // relative tensor paths are relative to the config file
    if let (Some(t), Some(dir)) = (&config.tensor, path.parent()) {
        if t.is_relative() {
            config.tensor = Some(dir.join(t));
        }
    }
    Ok(config)
}

fn default_run_dir(config_path: &Path) -> PathBuf {
    let name = config_path.file_stem().map(PathBuf::from).unwrap_or_else(|| "run".into());
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(root) => PathBuf::from(root).join(name),
        None => PathBuf::from("cgc-runs").join(name),
    }
}

pub fn sweep(global: &GlobalArgs, args: &SweepArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(threads) = global.threads {
        config.threads = threads;
    }
    if global.deterministic {
        config.threads = 1;
    }
    if let Some(n) = args.starts {
        config.num_starts = n;
    }
    if let Some(n) = args.baseline_starts {
        config.baseline_starts = n;
    }
    let dir = args
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| default_run_dir(&args.config));
    config.validate()?;

    let (x, truth) = config.load_tensor()?;
    let store = RunStore::create(&dir, &config, &x, truth.as_ref())?;
    let output = run_multistart(&config, &x, Some(&store))?;
    store.finish(&output)?;
    let solves: usize = output.sets.iter().map(|s| s.len()).sum();
    println!("{solves} solves written to {}", dir.display());

    if !args.no_report {
        let report = build_report(&x, &output.sets, &report_options(&config, None, None, None))?;
        report.write_dir(dir.join("report"))?;
        println!("report written to {}", dir.join("report").display());
    }
    Ok(())
}

fn report_options(config: &ExperimentConfig, eps: Option<&Vec<f64>>, taus: Option<&Vec<f64>>, t_step: Option<f64>) -> ReportOptions {
    ReportOptions {
        eps_list: eps.cloned().unwrap_or_else(|| config.eps_list.clone()),
        t_step: t_step.unwrap_or(config.t_step),
        taus: taus.cloned().unwrap_or_else(|| config.taus.clone()),
        nll_eps: config.nll_eps,
    }
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    let opts = report_options(&run.manifest.config, args.eps.as_ref(), args.taus.as_ref(), args.t_step);
    let report = build_report(&run.tensor, &run.output.sets, &opts)?;
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("report"));
    report.write_dir(&out)?;
    println!(
        "approximate MLE {} (nll {}); report written to {}",
        report.mle.run_id,
        report.mle.nll,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TensorJson {
    shape: Vec<usize>,
    /// 1-based indices followed by the count.
    entries: Vec<Vec<u64>>,
}

#[derive(Serialize)]
struct ModelJson {
    weights: Vec<f64>,
    /// Row-major factor matrices.
    factors: Vec<Vec<Vec<f64>>>,
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase()
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    let (from, to) = (extension(&args.input), extension(&args.output));
    let json = match (from.as_str(), to.as_str()) {
        ("tns", "tns") => {
            write_frostt_file(&read_frostt_file(&args.input)?, &args.output)?;
            None
        }
        ("model", "model") => {
            write_model_file(&read_model_file(&args.input)?, &args.output)?;
            None
        }
        ("tns", "json") => {
            let x = read_frostt_file(&args.input)?;
            let entries = x
                .iter()
                .map(|(idx, c)| idx.iter().map(|&i| i as u64 + 1).chain([c]).collect())
                .collect();
            Some(serde_json::to_string(&TensorJson { shape: x.shape().to_vec(), entries })?)
        }
        ("model", "json") => {
            let m = read_model_file(&args.input)?;
            let factors = m.factors().iter().map(|a| a.rows().into_iter().map(|r| r.to_vec()).collect()).collect();
            Some(serde_json::to_string(&ModelJson { weights: m.weights().to_vec(), factors })?)
        }
        _ => bail!(crate::UsageError(format!(
            "cannot convert `.{from}` to `.{to}`; supported: tns->tns, tns->json, model->model, model->json"
        ))),
    };
    if let Some(text) = json {
        fs::write(&args.output, text + "\n")?;
    }
    println!("wrote {}", args.output.display());
    Ok(())
}
