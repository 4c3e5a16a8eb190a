use std::path::Path;

use pacile_cli::main_with_args;

fn run(args: &[&str]) -> i32 {
    let mut all = vec!["pacile"];
    all.extend_from_slice(args);
    main_with_args(all)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn unknown_keys_exit_with_config_status() {
    assert_eq!(run(&["train", "--set", "alpah=0.3", "--set", "bogus=1"]), 2);
}

#[test]
fn malformed_override_and_bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "alpha"]), 2);
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "alpha=1.5"]), 2);
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "kernel=gaussian"]), 2);
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "algorithm=sgd"]), 2);
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "dataset=/nonexistent.csv"]), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["fly"]), 2);
}

#[test]
fn validate_rejects_unknown_experiment() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate", "nonsense", "--out-dir", &out_arg(dir.path())]), 2);
}

#[test]
fn train_is_reproducible_under_a_fixed_seed() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, seed) in dirs.iter().zip(["5", "5", "6"]) {
        let out = out_arg(d.path());
        assert_eq!(run(&["train", "--seed", seed, "--out-dir", &out, "--set", "algorithm=mc-pb", "--set", "max_iters=50"]), 0);
    }
    let manifest = |i: usize| read(&dirs[i].path().join("manifest.json")).replace(&out_arg(dirs[i].path()), "OUT");
    let posterior = |i: usize| read(&dirs[i].path().join("posterior.txt"));
    assert_eq!(posterior(0), posterior(1));
    assert_eq!(manifest(0), manifest(1));
    assert_ne!(posterior(0), posterior(2));
    for f in ["trace.csv", "candidates.csv", "config.effective"] {
        assert!(dirs[0].path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn hyperparameter_menus_are_labelled_data_dependent() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(run(&["train", "--out-dir", &out, "--set", "algorithm=ile", "--set", "lambda_grid=0.01,0.1,1"]), 0);
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    let labels = manifest["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 1);
    assert!(labels[0].as_str().unwrap().contains("data-dependent"));
    assert_eq!(read(&dir.path().join("candidates.csv")).lines().count(), 4);

    assert_eq!(run(&["train", "--out-dir", &out, "--set", "algorithm=ile"]), 0);
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert!(manifest["labels"].as_array().unwrap().is_empty());
}

#[test]
fn certify_reports_bounds_and_oracle_risk() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(run(&["train", "--seed", "3", "--out-dir", &out]), 0);
    let posterior = dir.path().join("posterior.txt").display().to_string();
    let set = format!("posterior={posterior}");
    assert_eq!(run(&["certify", "--seed", "3", "--out-dir", &out, "--set", &set, "--set", "cert_samples=200"]), 0);
    let csv = read(&dir.path().join("certificates.csv"));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3, "{csv}");
    assert!(rows[1].starts_with("classification,"));
    assert!(rows[2].starts_with("augmented-excess,"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    let risk = manifest["oracle"]["expected_true_risk"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&risk));

    // A different seed draws a different training set, so the digest check fires.
    assert_eq!(run(&["certify", "--seed", "4", "--out-dir", &out, "--set", &set]), 2);
    assert_eq!(run(&["certify", "--out-dir", &out]), 2);
}

#[test]
fn certify_adds_kde_bound_for_unit_norm_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let common = ["--seed", "8", "--out-dir", &out, "--set", "normalize_rows=true", "--set", "algorithm=ile"];
    let mut train = vec!["train"];
    train.extend_from_slice(&common);
    assert_eq!(run(&train), 0);
    let set = format!("posterior={}", dir.path().join("posterior.txt").display());
    let mut certify = vec!["certify"];
    certify.extend_from_slice(&common);
    certify.extend_from_slice(&["--set", &set, "--set", "cert_samples=100"]);
    assert_eq!(run(&certify), 0);
    let csv = read(&dir.path().join("certificates.csv"));
    assert!(csv.lines().any(|l| l.starts_with("kde,")), "{csv}");
}

#[test]
fn sweep_does_not_depend_on_thread_count() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in dirs.iter().zip(["1", "4"]) {
        let out = out_arg(d.path());
        let code = run(&[
            "sweep", "--out-dir", &out, "--threads", threads, "--set", "alpha_grid=0.4,0.6", "--set", "t_grid=0.3,0.7",
            "--set", "max_iters=40", "--set", "eval_samples=100",
        ]);
        assert_eq!(code, 0);
    }
    for algo in ["ile", "relax-pb", "mc-pb"] {
        let name = format!("heatmap_{algo}.csv");
        let a = read(&dirs[0].path().join(&name));
        assert_eq!(a, read(&dirs[1].path().join(&name)));
        assert_eq!(a.lines().next().unwrap(), "alpha,t,j_hat,sigma,lambda");
        assert_eq!(a.lines().count(), 5);
    }
}

#[test]
fn config_file_and_flags_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nalgorithm = ile\nseed = 2\nsynthetic.m = 40\n").unwrap();
    let out = dir.path().join("out");
    let code = run(&["train", "--config", &cfg.display().to_string(), "--seed", "9", "--out-dir", &out_arg(&out)]);
    assert_eq!(code, 0);
    let effective = read(&out.join("config.effective"));
    assert!(effective.contains("seed = 9\n"));
    assert!(effective.contains("synthetic.m = 40\n"));
    assert!(effective.contains("algorithm = ile\n"));
}

#[test]
fn validate_subset_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["validate", "kl_curve,exp_identity", "--seed", "1", "--out-dir", &out_arg(dir.path())]);
    assert_eq!(code, 0);
    for f in ["kl_curve_1.csv", "exp_identity_1.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_pacile");
    let status = std::process::Command::new(bin).args(["train", "--set", "nope=1"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("nope"));
    let status = std::process::Command::new(bin).arg("keys").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains("alpha = 0.5"));
}
