use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ssl_gmm_lab::{execute, run_experiment, ExperimentConfig, LabError, RunManifest, RunOptions};

fn presets() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    out.sort();
    out
}

fn quick_config(dir: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
        experiment = "lambda-chi"
        output_dir = "{}"
        estimators = ["rmle"]
        [model]
        alpha_l = 0.5
        alpha_u = 1.0
        [grids]
        chi = {{ values = [0.2, 0.4] }}
        "#,
        dir.display()
    );
    ExperimentConfig::from_toml_str(&text, &[], None).unwrap()
}

#[test]
fn every_preset_parses_and_validates() {
    let all = presets();
    assert!(all.len() >= 10);
    for p in all {
        let text = fs::read_to_string(&p).unwrap();
        let cfg = ExperimentConfig::from_toml_str(&text, &[], None)
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(cfg.output_dir.starts_with("out"), "{}", p.display());
    }
}

#[test]
fn overrides_take_dotted_paths() {
    let cfg = ExperimentConfig::from_toml_str("", &["model.rho=0.3".into(), "seed_count=4".into()], Some(ssl_gmm_lab::ExperimentKind::AmpVsSe)).unwrap();
    assert_eq!(cfg.model.rho, 0.3);
    assert_eq!(cfg.seed_list().len(), 4);
    let clash = ExperimentConfig::from_toml_str("experiment = \"gd-vs-amp\"", &[], Some(ssl_gmm_lab::ExperimentKind::AmpVsSe));
    assert!(clash.is_err());
}

#[test]
fn hash_ignores_output_location_only() {
    let a = quick_config(Path::new("/tmp/a"));
    let b = quick_config(Path::new("/tmp/b"));
    assert_eq!(a.hash(), b.hash());
    let mut c = a.clone();
    c.model.alpha_u = 1.5;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn manifest_lists_every_file_written() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let rep = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert!(!rep.reused);
    let mut on_disk: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut listed = rep.manifest.outputs.clone();
    listed.sort();
    assert_eq!(on_disk, listed);
    assert!(listed.contains(&"manifest.json".to_string()));
    assert_eq!(RunManifest::load(tmp.path()).unwrap(), rep.manifest);
    assert_eq!(rep.manifest.config_hash, cfg.hash());
    // Tables carry the schema line first.
    let csv = fs::read_to_string(tmp.path().join("lambda_chi.csv")).unwrap();
    assert!(csv.starts_with("# ssl-gmm-lab v"));
}

#[test]
fn identical_rerun_is_a_no_op_and_force_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let first = run_experiment(&cfg, RunOptions::default()).unwrap();
    let second = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert!(second.reused);
    assert_eq!(first.manifest, second.manifest);
    let forced = run_experiment(&cfg, RunOptions { threads: Some(1), force: true }).unwrap();
    assert!(!forced.reused);

    // A changed config replaces the previous outputs.
    let mut changed = cfg.clone();
    changed.model.alpha_u = 2.0;
    let rep = run_experiment(&changed, RunOptions::default()).unwrap();
    assert!(!rep.reused);
    assert_eq!(rep.manifest.config_hash, changed.hash());
}

#[test]
fn foreign_files_block_the_run_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("notes.txt"), "keep me").unwrap();
    let cfg = quick_config(tmp.path());
    match run_experiment(&cfg, RunOptions::default()) {
        Err(LabError::ForeignFiles(p)) => assert_eq!(p, tmp.path()),
        other => panic!("expected refusal, got {other:?}"),
    }
    run_experiment(&cfg, RunOptions { threads: None, force: true }).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join("notes.txt")).unwrap(), "keep me");
}

#[test]
fn empty_grid_succeeds_with_no_tasks() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(tmp.path());
    cfg.grids.insert(
        "chi".into(),
        ssl_gmm_lab::config::GridSpec::Values(ssl_gmm_lab::config::ValuesGrid { values: vec![] }),
    );
    let rep = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(rep.manifest.failed_tasks(), 0);
    let csv = fs::read_to_string(tmp.path().join("lambda_chi.csv")).unwrap();
    // Schema line and header only.
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn optimal_lambda_is_stable_under_quadrature_refinement() {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/fig12.toml")).unwrap();
    let inv = |nodes: usize| -> Vec<f64> {
        let cfg = ExperimentConfig::from_toml_str(&text, &[format!("quadrature_nodes={nodes}")], None).unwrap();
        let out = execute(&cfg, None).unwrap();
        out.summary["optima"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["inv_lambda_star"].as_f64().unwrap())
            .collect()
    };
    let (coarse, fine) = (inv(201), inv(401));
    assert_eq!(coarse.len(), 2);
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

fn dataset(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ssl-gmm-lab"))
        .arg("dataset")
        .args(["--set", "model.n_dim=8", "--set", "model.alpha_l=0.5", "--set", "model.alpha_u=1.0"])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn dataset_hides_unlabeled_labels_by_default() {
    let hidden = dataset(&["--seed", "3"]);
    let lines: Vec<&str> = hidden.lines().collect();
    assert!(lines[0].starts_with("# ssl-gmm-lab"));
    assert!(lines[1].starts_with("set,y,x0"));
    let unlabeled: Vec<&str> = lines.iter().copied().filter(|l| l.starts_with("unlabeled,")).collect();
    let labeled: Vec<&str> = lines.iter().copied().filter(|l| l.starts_with("labeled,")).collect();
    assert_eq!((labeled.len(), unlabeled.len()), (4, 8));
    assert!(unlabeled.iter().all(|l| l.starts_with("unlabeled,,")));
    assert!(labeled.iter().all(|l| l.starts_with("labeled,1,") || l.starts_with("labeled,-1,")));
    assert!(!hidden.contains("center"));

    let revealed = dataset(&["--seed", "3", "--reveal-hidden"]);
    assert!(revealed.lines().filter(|l| l.starts_with("unlabeled,")).all(|l| !l.starts_with("unlabeled,,")));
    assert_eq!(revealed.lines().filter(|l| l.starts_with("center,")).count(), 1);
    // Same draw either way.
    let strip = |s: &str| s.lines().filter(|l| l.starts_with("labeled,")).map(String::from).collect::<Vec<_>>();
    assert_eq!(strip(&hidden), strip(&revealed));
    assert_eq!(hidden, dataset(&["--seed", "3"]));
}

#[test]
fn failed_config_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "experiment = \"lambda-chi\"\n[model]\nrho = 1.5\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ssl-gmm-lab"))
        .args(["lambda-chi", "--config"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(!status.success());
}
