use recloop::config::{Arm, PanScheme, PolicyName};
use recloop::experiment::{FEEDBACK_EFFECTS, METRICS};
use recloop::stats::{mean, sample_sd};
use recloop::{run_experiment, run_pan_benchmark, write_csv, write_pan_csv, ExperimentConfig, ExperimentReport};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.environment.users = 20;
    cfg.environment.items = 25;
    cfg.model.k = 3;
    cfg.horizon = 5;
    cfg.test_size = 60;
    cfg.replications = 3;
    cfg
}

fn read_rows(path: &std::path::Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    (header, r.records().map(|x| x.unwrap()).collect())
}

#[test]
fn same_seed_same_series() {
    let cfg = small();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.rows(), b.rows());
    let mut other = cfg.clone();
    other.seed = 99;
    assert_ne!(a.rows(), run_experiment(&other).unwrap().rows());
}

#[test]
fn row_count_is_arms_reps_steps_metrics() {
    let cfg = small();
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_csv(&report, dir.path()).unwrap();
    let (header, rows) = read_rows(&dir.path().join("results.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["arm", "replication", "timestep", "metric", "value"]);
    let metrics = METRICS.len() + FEEDBACK_EFFECTS.len();
    assert_eq!(rows.len(), 4 * 3 * 5 * metrics);

    let mut without_shadow = cfg.clone();
    without_shadow.arms = vec![Arm::Feedback, Arm::Cafl];
    let report = run_experiment(&without_shadow).unwrap();
    assert_eq!(report.rows().len(), 2 * 3 * 5 * METRICS.len());
}

#[test]
fn arms_share_environment_per_replication() {
    let cfg = small();
    let report = run_experiment(&cfg).unwrap();
    let sums = report.env_checksums();
    let mut again = cfg.clone();
    again.arms = vec![Arm::Uniform];
    assert_eq!(run_experiment(&again).unwrap().env_checksums(), sums);
    // replications draw different worlds
    assert_ne!(sums[0], sums[1]);
}

#[test]
fn single_replication_has_no_ci_column() {
    let mut cfg = small();
    cfg.replications = 1;
    let dir = tempfile::tempdir().unwrap();
    write_csv(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let (header, _) = read_rows(&dir.path().join("summary.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["arm", "timestep", "metric", "mean"]);

    cfg.replications = 2;
    write_csv(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let (header, rows) = read_rows(&dir.path().join("summary.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["arm", "timestep", "metric", "mean", "ci_halfwidth"]);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().is_ok()));
}

#[test]
fn summary_ci_matches_formula() {
    let report = run_experiment(&small()).unwrap();
    let row = report
        .summary()
        .into_iter()
        .find(|r| r.arm == "cafl" && r.timestep == 5 && r.metric == "rmse")
        .unwrap();
    let xs = report.final_values(Arm::Cafl, "rmse");
    assert_eq!(row.mean, mean(&xs));
    assert!((row.ci_halfwidth.unwrap() - 1.96 * sample_sd(&xs) / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn empty_report_writes_headers_only() {
    let report = ExperimentReport {
        config: small(),
        replications: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    write_csv(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text, "arm,replication,timestep,metric,value\n");
}

#[test]
fn csv_round_trip_is_exact() {
    let report = run_experiment(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_csv(&report, dir.path()).unwrap();
    let (_, rows) = read_rows(&dir.path().join("results.csv"));
    for (row, (arm, rep, t, metric, v)) in rows.iter().zip(report.rows()) {
        assert_eq!(&row[0], arm);
        assert_eq!(row[1].parse::<usize>().unwrap(), rep);
        assert_eq!(row[2].parse::<usize>().unwrap(), t);
        assert_eq!(&row[3], metric);
        assert_eq!(row[4].parse::<f64>().unwrap(), v);
    }
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(text.ends_with('\n'));
}

/// Step 1 is the shared random slate, so every arm sees the same data and
/// fits the same model.
#[test]
fn one_step_arms_agree() {
    let mut cfg = ExperimentConfig::default();
    cfg.horizon = 1;
    cfg.replications = 200;
    cfg.environment.users = 30;
    cfg.environment.items = 30;
    cfg.test_size = 100;
    let report = run_experiment(&cfg).unwrap();
    for metric in METRICS {
        let base = report.values_at(Arm::Feedback, 1, metric);
        let se = sample_sd(&base) / (base.len() as f64).sqrt();
        for arm in Arm::ALL {
            let xs = report.values_at(arm, 1, metric);
            assert!((mean(&xs) - mean(&base)).abs() <= 3.0 * se.max(1e-15), "{arm} {metric}");
        }
    }
}

/// With ε = 1 the CAFL arm explores uniformly and its weights are constant,
/// so its RMSE should be indistinguishable from the uniform arm's.
#[test]
fn fully_random_cafl_tracks_uniform() {
    let mut cfg = ExperimentConfig::default();
    cfg.policy.policy = PolicyName::Topn;
    cfg.policy.epsilon = 1.0;
    cfg.arms = vec![Arm::Cafl, Arm::Uniform];
    cfg.horizon = 10;
    cfg.replications = 50;
    cfg.environment.users = 40;
    cfg.environment.items = 40;
    cfg.test_size = 200;
    let report = run_experiment(&cfg).unwrap();
    for t in [2, 5, 10] {
        let d: Vec<f64> = report
            .values_at(Arm::Cafl, t, "rmse")
            .iter()
            .zip(report.values_at(Arm::Uniform, t, "rmse"))
            .map(|(a, b)| a - b)
            .collect();
        let z = mean(&d) / (sample_sd(&d) / (d.len() as f64).sqrt());
        assert!(z.abs() < 3.0, "step {t}: z = {z}");
    }
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = small();
    cfg.horizon = 30;
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn pan_naive_weight_dump_is_all_ones() {
    let mut cfg = ExperimentConfig::default();
    cfg.pan.environment.users = 20;
    cfg.pan.environment.items = 40;
    cfg.pan.sim_steps = 6;
    cfg.pan.train_steps = 4;
    cfg.pan.test_per_user = 5;
    cfg.pan.replications = 2;
    cfg.pan.model.epochs = 5;
    cfg.pan.schemes = vec![PanScheme::Naive];
    cfg.pan.dump_weights = true;
    let report = run_pan_benchmark(&cfg.pan, 0, cfg.ci).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_pan_csv(&report, dir.path()).unwrap();
    let dump = paths.iter().find(|p| p.to_string_lossy().contains("pan_weights_naive_0")).unwrap();
    let (header, rows) = read_rows(dump);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["s", "u", "i", "weight", "scheme"]);
    assert_eq!(rows.len(), 20 * 4);
    assert!(rows.iter().all(|r| &r[3] == "1" && &r[4] == "naive"));
}

#[test]
fn shipped_configs_match_defaults() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "pan.toml"] {
        let cfg = ExperimentConfig::load(&root.join(name)).unwrap();
        assert_eq!(cfg, ExperimentConfig::default(), "{name}");
    }
}
