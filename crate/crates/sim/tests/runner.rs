use tiltfit_sim::runner::{coverage_study_with_threads, truth};
use tiltfit_sim::{run_experiment_with_threads, ExperimentConfig, Method, Regime, SimError};

#[test]
fn oracle_method_is_exact() {
    let mut cfg = ExperimentConfig::exp1(30, 5, 0.3, Regime::Cm, 1, 1);
    cfg.methods = vec![Method::Oracle];
    let table = run_experiment_with_threads(&cfg, 1).unwrap();
    let m = table.method(Method::Oracle).unwrap();
    assert!(m.rms.iter().chain(&m.bias).all(|v| *v == 0.0));
    assert_eq!((m.t, m.f, m.pcim), (2.0, 0.0, 1.0));
    assert_eq!(table.truth, truth(&cfg));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut cfg = ExperimentConfig::exp1(40, 5, 0.7, Regime::Ms, 12, 21);
    cfg.methods = vec![Method::Pet, Method::Pel, Method::HardThreshold];
    cfg.grid_len = 12;
    let one = run_experiment_with_threads(&cfg, 1).unwrap();
    let three = run_experiment_with_threads(&cfg, 3).unwrap();
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&three).unwrap());
}

#[test]
fn adding_a_method_leaves_the_others_unchanged() {
    let mut cfg = ExperimentConfig::exp1(40, 5, 0.3, Regime::Cm, 8, 4);
    cfg.methods = vec![Method::SoftThreshold];
    let alone = run_experiment_with_threads(&cfg, 2).unwrap();
    cfg.methods = vec![Method::Mean, Method::SoftThreshold, Method::QuadraticLoss];
    let together = run_experiment_with_threads(&cfg, 2).unwrap();
    assert_eq!(alone.method(Method::SoftThreshold), together.method(Method::SoftThreshold));
}

#[test]
fn structural_and_regression_designs_run() {
    let cfg = ExperimentConfig::exp2(80, 6, 2, 5);
    let t = run_experiment_with_threads(&cfg, 1).unwrap();
    assert_eq!(t.method(Method::Pet).unwrap().successes, 2);
    let mut cfg = ExperimentConfig::exp3(185, 3, 1, 5);
    cfg.grid_len = 4;
    let t = run_experiment_with_threads(&cfg, 1).unwrap();
    assert_eq!(t.truth.len(), 18);
    assert_eq!(t.selection.len(), 6);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ExperimentConfig::exp1(40, 5, 0.3, Regime::Cm, 0, 1);
    assert!(matches!(run_experiment_with_threads(&cfg, 1), Err(SimError::InvalidConfig(_))));
    cfg.reps = 2;
    cfg.rho = 1.0;
    assert!(matches!(run_experiment_with_threads(&cfg, 1), Err(SimError::InvalidConfig(_))));
    let mut cfg = ExperimentConfig::exp2(40, 6, 1, 1);
    cfg.methods = vec![Method::HardThreshold];
    assert!(matches!(run_experiment_with_threads(&cfg, 1), Err(SimError::InvalidConfig(_))));
}

#[test]
fn coverage_at_half_level_is_near_one_half() {
    let cfg = ExperimentConfig::exp1(300, 10, 0.3, Regime::Cm, 400, 17);
    let t = coverage_study_with_threads(&cfg, &[0.6], 0.5, 4).unwrap();
    let nc = t.rows[0].non_coverage;
    assert!((0.42..=0.58).contains(&nc), "non-coverage {nc}");
}
