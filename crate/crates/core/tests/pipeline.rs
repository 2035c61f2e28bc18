use cgc_core::harness::{initial_guess, start_seed};
use cgc_core::hybrid::{cgc, constant_work_strategy};
use cgc_core::io::{read_frostt_file, read_model_file, write_frostt_file, write_model_file};
use cgc_core::synth::ProblemSpec;
use cgc_core::{
    build_report, cpapr_mu, gcp_adam, load_run, poisson_nll, run_multistart, CpaprOptions, ExperimentConfig,
    GcpOptions, Method, ReportOptions, RunStore, DEFAULT_EPS,
};

fn problem() -> (cgc_core::KruskalModel, cgc_core::SparseCountTensor) {
    ProblemSpec { shape: vec![10, 9, 8], rank: 3, density: 0.15, seed: 11 }.generate().unwrap()
}

#[test]
fn generated_data_survives_file_round_trip() {
    let (truth, x) = problem();
    let dir = tempfile::tempdir().unwrap();
    write_frostt_file(&x, dir.path().join("x.tns")).unwrap();
    write_model_file(&truth, dir.path().join("t.model")).unwrap();
    assert_eq!(read_frostt_file(dir.path().join("x.tns")).unwrap(), x);
    assert_eq!(read_model_file(dir.path().join("t.model")).unwrap(), truth);
}

#[test]
fn solvers_improve_on_the_initial_guess() {
    let (_, x) = problem();
    let init = initial_guess(x.shape(), 3, Some(x.total_count() as f64), start_seed(5, 0));
    let f0 = poisson_nll(&x, &init, DEFAULT_EPS).unwrap().value;

    let cp = cpapr_mu(&x, 3, &init, &CpaprOptions::default().with_budget(30)).unwrap();
    let f_cp = poisson_nll(&x, &cp.model, DEFAULT_EPS).unwrap().value;
    assert!(f_cp < f0, "cpapr {f_cp} vs start {f0}");
    assert!(cp.entries.windows(2).all(|w| w[1].nll <= w[0].nll * (1.0 + 1e-12)));

    let mut rng = start_seed(5, 0).derive(1).rng();
    let gc = gcp_adam(&x, 3, &init, &GcpOptions::default().with_budget(5), &mut rng).unwrap();
    assert!(poisson_nll(&x, &gc.model, DEFAULT_EPS).unwrap().value < f0);

    let hy = cgc(&x, 3, &constant_work_strategy(20, 5).unwrap(), &init, start_seed(5, 0).derive(1)).unwrap();
    assert_eq!(hy.work(), 20);
    assert!(poisson_nll(&x, &hy.model, DEFAULT_EPS).unwrap().value < f0);
}

fn small_sweep() -> ExperimentConfig {
    ExperimentConfig {
        problem_shape: Some(vec![8, 7, 6]),
        problem_rank: Some(2),
        problem_density: 0.2,
        problem_seed: Some(3),
        rank: 2,
        method: Method::Sweep,
        num_starts: 3,
        baseline_starts: 2,
        work: 10,
        j_values: vec![0, 5, 10],
        seed: 9,
        threads: 1,
        ..ExperimentConfig::default()
    }
}

#[test]
fn stored_sweep_reloads_to_the_same_report() {
    let config = small_sweep();
    config.validate().unwrap();
    let (x, truth) = config.load_tensor().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::create(dir.path(), &config, &x, truth.as_ref()).unwrap();
    let output = run_multistart(&config, &x, Some(&store)).unwrap();
    store.finish(&output).unwrap();

    let labels: Vec<&str> = output.sets.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["gcp", "cpapr", "cgc"]);
    assert_eq!(output.sets[2].len(), 3 * 3);

    let run = load_run(dir.path()).unwrap();
    assert_eq!(run.tensor, x);
    let opts = ReportOptions::default();
    let a = build_report(&x, &output.sets, &opts).unwrap();
    let b = build_report(&run.tensor, &run.output.sets, &opts).unwrap();
    assert_eq!(a.deltas_csv(), b.deltas_csv());
    assert_eq!(a.epsball_csv(), b.epsball_csv());
    assert_eq!(a.auc_csv(), b.auc_csv());
    assert!(a.deltas.iter().all(|d| d.min_delta_r >= -1e-12 || d.group.starts_with("cgc")));
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let config = small_sweep();
    let (x, _) = config.load_tensor().unwrap();
    let one = run_multistart(&config, &x, None).unwrap();
    let many = run_multistart(&ExperimentConfig { threads: 3, ..config }, &x, None).unwrap();
    for (s, t) in one.sets.iter().zip(&many.sets) {
        for (r, q) in s.records.iter().zip(&t.records) {
            assert_eq!(r.run_id, q.run_id);
            assert_eq!(r.model, q.model);
            assert_eq!(r.nll.to_bits(), q.nll.to_bits());
        }
    }
}
