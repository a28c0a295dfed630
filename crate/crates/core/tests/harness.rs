//! Reproducibility of emitted runs and end-to-end CLI behavior.

use std::fs;
use std::process::Command;

use zr_stefan::harness::acceptance::hydrodynamic_plan;
use zr_stefan::harness::config::ExperimentPlan;
use zr_stefan::harness::output::{load_manifest, load_summary};
use zr_stefan::harness::{execute, run_plan};

const FAST_REACTION: &str = r#"
kind = "fast_reaction"
N = 32
horizon = 0.01
snapshot_count = 4
[schedule]
ladder = [[10.0, 0.1], [30.0, 0.03]]
[rate]
kind = "affine"
a = 1.0
"#;

#[test]
fn manifest_rerun_reproduces_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = hydrodynamic_plan().unwrap();
    plan.grids = vec![64, 128];
    plan.replicas = 4;
    plan.output_dir = dir.path().to_path_buf();
    let (first, files) = execute(&plan).unwrap();
    for name in ["results.csv", "summary.json", "manifest.json", "plan.toml"] {
        assert!(files.dir.join(name).is_file(), "{name} missing");
    }
    let reloaded = load_manifest(&files.manifest).unwrap();
    assert_eq!(reloaded, plan);
    let from_disk = load_summary(&files.summary).unwrap();
    assert!(from_disk.same_values(&first.table));
    let again = run_plan(&reloaded).unwrap();
    assert!(again.table.same_values(&first.table));
    let written_plan = ExperimentPlan::from_toml(&fs::read_to_string(&files.plan).unwrap()).unwrap();
    assert_eq!(written_plan, plan);
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = ExperimentPlan::from_toml(FAST_REACTION).unwrap();
    plan.output_dir = dir.path().to_path_buf();
    let (_, files) = execute(&plan).unwrap();
    let text = fs::read_to_string(&files.manifest).unwrap();
    let seed_only = text.replacen("\"seed\": 1", "\"seed\": 2", 1);
    assert_ne!(seed_only, text);
    fs::write(&files.manifest, seed_only).unwrap();
    assert!(load_manifest(&files.manifest).is_err());
    let horizon = text.replace("\"horizon\": 0.01", "\"horizon\": 0.02");
    assert_ne!(horizon, text);
    fs::write(&files.manifest, horizon).unwrap();
    assert!(load_manifest(&files.manifest).is_err());
}

#[test]
fn fast_reaction_rungs_are_deterministic() {
    let plan = ExperimentPlan::from_toml(FAST_REACTION).unwrap();
    let a = run_plan(&plan).unwrap();
    let b = run_plan(&plan).unwrap();
    assert!(a.table.same_values(&b.table));
    assert!(a.table.series("l2_error").len() == 2);
}

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_zr-stefan"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn cli_thermo_writes_a_table() {
    let out = cli().args(["thermo", "--rate", "affine", "--a", "0.5", "--points", "5"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6, "{text}");
}

#[test]
fn cli_pde_run_emits_files_and_bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pde.toml");
    fs::write(&cfg, "kind = \"pde\"\nN = 32\nhorizon = 0.002\nsnapshot_count = 2\n").unwrap();
    let out = cli().args(["pde", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("pde/results.csv").is_file());
    assert!(fs::read_dir(dir.path().join("pde"))
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().starts_with("snapshots_N32")));

    fs::write(&cfg, "kind = \"pde\"\nmystery = 1\n").unwrap();
    let out = cli().args(["pde", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "kind = \"stefan\"\n").unwrap();
    let out = cli().args(["pde", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_check_runs_a_single_criterion() {
    let out = cli().args(["check", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[PASS]") && text.contains(" 3 thermodynamic"), "{text}");
    assert_eq!(cli().args(["check", "11"]).output().unwrap().status.code(), Some(2));
}
