use std::path::PathBuf;

use softkd_core::sim::config::ExperimentConfig;
use softkd_core::sim::experiment::run_experiment;
use softkd_core::ExecMode;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shipped_default_matches_builtin_default() {
    assert_eq!(config("default.json"), ExperimentConfig::default());
}

#[test]
fn quick_experiment_is_deterministic_across_modes() {
    let cfg = config("quick.json");
    cfg.validate().unwrap();
    let par = run_experiment(&cfg).unwrap();
    let seq = run_experiment(&ExperimentConfig {
        exec: ExecMode::Sequential,
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(par, seq);
    assert_eq!(run_experiment(&cfg).unwrap(), par);

    // 2 operators × 2 seeds × (warm-up + 2 staged + warm-up + 1 one-shot).
    assert_eq!(par.stages.len(), 2 * 2 * 5);
    assert_eq!(par.biasvar.len(), 2 * 2 * 2);
    assert_eq!(par.convergence.len(), 2 * 2 * 2);
    let names: Vec<&str> = par.summary.assertions.iter().map(|a| a.name.as_str()).collect();
    for want in [
        "homotopy_vs_one_shot",
        "lipschitz_bound",
        "mask_invariance",
        "decomposition_identity",
        "variance_reduction",
        "dense_bias_lowest",
        "convergence_trend",
        "staged_residual_not_worse",
    ] {
        assert_eq!(names.iter().filter(|n| **n == want).count(), 2, "{want}");
    }
    assert_eq!(par.summary.pass, par.summary.assertions.iter().all(|a| a.pass));
    for name in ["decomposition_identity", "lipschitz_bound", "mask_invariance"] {
        assert!(par.summary.assertions.iter().filter(|a| a.name == name).all(|a| a.pass));
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let cfg = config("quick.json");
    let mut other = cfg.clone();
    other.override_seed(Some("4")).unwrap();
    let cfg = ExperimentConfig {
        homotopy: None,
        convergence: None,
        ..cfg
    };
    let other = ExperimentConfig {
        homotopy: None,
        convergence: None,
        ..other
    };
    assert_ne!(run_experiment(&cfg).unwrap().biasvar, run_experiment(&other).unwrap().biasvar);
}
