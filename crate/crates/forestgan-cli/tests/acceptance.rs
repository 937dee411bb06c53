//! Command-line acceptance: repeating any command with identical flags and
//! seed must reproduce its CSV/JSON/SVG artifacts byte for byte (nothing
//! written embeds a timestamp), and the documented run-directory layout and
//! exit-code contract must hold.  The determinism check prints the same
//! `acceptance NN <name>: PASS/FAIL` line as the library gate.
//!
//! Everything runs through the installed binary (`CARGO_BIN_EXE_forestgan`),
//! inside a per-process scratch directory; expensive training artifacts are
//! produced once behind `OnceLock` fixtures and shared between tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forestgan"))
}

/// Per-process scratch root, recreated on first use.
fn scratch() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("forestgan-cli-acceptance-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).expect("create scratch dir");
        dir
    })
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn CLI")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

/// Every file under `dir` as relative path → content bytes.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).expect("read file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Asserts two run directories hold identical files with identical bytes;
/// returns the number of files compared.
fn assert_identical_trees(a: &Path, b: &Path) -> Result<usize, String> {
    let (ta, tb) = (dir_bytes(a), dir_bytes(b));
    let names_a: Vec<_> = ta.keys().collect();
    let names_b: Vec<_> = tb.keys().collect();
    if names_a != names_b {
        return Err(format!(
            "file sets differ between {} and {}: {names_a:?} vs {names_b:?}",
            a.display(),
            b.display()
        ));
    }
    for (name, bytes) in &ta {
        if tb[name] != *bytes {
            return Err(format!("{name} differs between repeated runs"));
        }
    }
    Ok(ta.len())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json")).expect("parse json")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

// ---------------------------------------------------------------------------
// Shared training fixtures
// ---------------------------------------------------------------------------

/// Short ring run with the shallow-forest head; feeds the artifact checks
/// and the tournament.
fn ring_forest_run() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch().join("ring_forest");
        run_ok(&[
            "gan-train",
            "--preset",
            "gan_forest_shallow",
            "--steps",
            "40",
            "--seed",
            "1",
            "--out",
            path_str(&dir),
        ]);
        dir
    })
}

/// Short ring run with the fc head; second tournament competitor.
fn ring_fc_run() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch().join("ring_fc");
        run_ok(&[
            "gan-train",
            "--preset",
            "gan_fc",
            "--steps",
            "40",
            "--seed",
            "2",
            "--out",
            path_str(&dir),
        ]);
        dir
    })
}

/// Short two-moons run; dataset mismatch fodder for the tournament.
fn moons_run() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch().join("moons");
        run_ok(&[
            "gan-train",
            "--preset",
            "gan_fc",
            "--data",
            "two_moons",
            "--steps",
            "40",
            "--seed",
            "3",
            "--out",
            path_str(&dir),
        ]);
        dir
    })
}

/// Small parity sweep whose seed directories feed the plot tests.
fn xor_tree_run() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch().join("xor_tree");
        run_ok(&[
            "xor",
            "--model",
            "tree",
            "--dim",
            "3",
            "--seeds",
            "3",
            "--out",
            path_str(&dir),
        ]);
        dir
    })
}

// ---------------------------------------------------------------------------
// 11 — determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_determinism() {
    let body = || -> Result<String, String> {
        let mut compared = 0usize;
        let mut repeat = |label: &str, args: &[&str]| -> Result<(), String> {
            let d1 = scratch().join(format!("det_{label}_1"));
            let d2 = scratch().join(format!("det_{label}_2"));
            for dir in [&d1, &d2] {
                let full: Vec<&str> = args
                    .iter()
                    .copied()
                    .chain(["--out", path_str(dir)])
                    .collect();
                let out = run(&full);
                if !out.status.success() {
                    return Err(format!(
                        "{label} run failed: {}",
                        String::from_utf8_lossy(&out.stderr)
                    ));
                }
            }
            compared += assert_identical_trees(&d1, &d2)?;
            Ok(())
        };

        repeat(
            "xor",
            &["xor", "--model", "tree", "--dim", "2", "--epochs", "80", "--seeds", "2", "--seed", "3"],
        )?;
        repeat(
            "gan",
            &["gan-train", "--preset", "gan_forest_deep", "--steps", "30", "--seed", "4"],
        )?;
        repeat("clf", &["clf-cond", "--head", "forest", "--steps", "40", "--seed", "5"])?;

        // Tournament over two fixed competitors, repeated.
        let (a, b) = (ring_forest_run(), ring_fc_run());
        repeat(
            "tournament",
            &["tournament", "--runs", path_str(a), path_str(b), "--seed", "6"],
        )?;

        Ok(format!(
            "{compared} artifact files byte-identical across repeated xor / gan-train / clf-cond / tournament invocations"
        ))
    };
    match body() {
        Ok(detail) => println!("acceptance 11 determinism: PASS — {detail}"),
        Err(why) => {
            println!("acceptance 11 determinism: FAIL — {why}");
            panic!("acceptance 11 failed: {why}");
        }
    }
}

// ---------------------------------------------------------------------------
// Run-directory layout and summaries
// ---------------------------------------------------------------------------

#[test]
fn xor_run_layout_and_summary() {
    let dir = xor_tree_run();
    for file in [
        "config.json",
        "summary.json",
        "plots/loss.svg",
        "plots/condition.svg",
        "seed_0/config.json",
        "seed_0/log.csv",
        "seed_0/classifier.json",
        "seed_2/log.csv",
    ] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["dim"], 3);
    assert_eq!(summary["model"], "tree");
    assert_eq!(summary["seeds"], 3);
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 3);
    // The calibrated tree recipe solves parity on these seeds.
    let rate = summary["success_rate"].as_f64().unwrap();
    assert!(rate >= 2.0 / 3.0, "tree success rate {rate} below 2/3");

    let log = std::fs::read_to_string(dir.join("seed_0/log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(forestgan::train::CSV_HEADER));
    assert_eq!(lines.count(), 1000, "one row per epoch");
}

#[test]
fn xor_fc_mostly_fails_parity() {
    let dir = scratch().join("xor_fc");
    run_ok(&["xor", "--model", "fc", "--dim", "3", "--seeds", "3", "--out", path_str(&dir)]);
    let summary = read_json(&dir.join("summary.json"));
    let rate = summary["success_rate"].as_f64().unwrap();
    assert!(rate <= 1.0 / 3.0, "fc success rate {rate} above 1/3");
}

#[test]
fn gan_run_layout_and_summary() {
    let dir = ring_forest_run();
    for file in [
        "config.json",
        "log.csv",
        "summary.json",
        "checkpoints/step_00004/generator.json",
        "checkpoints/step_00004/discriminator.json",
        "checkpoints/step_00040/generator.json",
        "checkpoints/final/generator.json",
        "checkpoints/final/discriminator.json",
        "plots/samples_step_00004.svg",
        "plots/samples_final.svg",
        "plots/loss.svg",
        "plots/condition.svg",
    ] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["preset"], "gan_forest_shallow");
    assert_eq!(summary["steps"], 40);
    assert_eq!(summary["diverged"], false);
    assert_eq!(summary["mode_coverage"]["histogram"].as_array().unwrap().len(), 8);
    let log = std::fs::read_to_string(dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 41, "header plus one row per step");

    // The final checkpoint round-trips through the library loader.
    forestgan::network::Network::load(&dir.join("checkpoints/final/generator.json")).unwrap();
}

#[test]
fn gan_zero_steps_is_a_valid_smoke_run() {
    let dir = scratch().join("gan_zero");
    run_ok(&["gan-train", "--steps", "0", "--seed", "9", "--out", path_str(&dir)]);
    let log = std::fs::read_to_string(dir.join("log.csv")).unwrap();
    assert_eq!(log.trim_end(), forestgan::train::CSV_HEADER);
    assert!(dir.join("checkpoints/final/generator.json").is_file());
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["diverged"], false);
    assert_eq!(summary["final_d_loss"], Value::Null);
}

#[test]
fn clf_cond_writes_base_and_stress_runs() {
    let dir = scratch().join("clf_short");
    run_ok(&["clf-cond", "--head", "fc", "--steps", "60", "--seed", "2", "--out", path_str(&dir)]);
    for file in [
        "base/config.json",
        "base/log.csv",
        "base/classifier.json",
        "stress/config.json",
        "stress/log.csv",
        "plots/loss.svg",
        "plots/condition.svg",
        "summary.json",
    ] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    let base: Value = read_json(&dir.join("base/config.json"));
    let stress: Value = read_json(&dir.join("stress/config.json"));
    let (b, s) = (
        base["learning_rate"].as_f64().unwrap(),
        stress["learning_rate"].as_f64().unwrap(),
    );
    assert!((s - 10.0 * b).abs() < 1e-15, "stress lr {s} is not 10× base {b}");
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
}

// ---------------------------------------------------------------------------
// Tournament contract
// ---------------------------------------------------------------------------

#[test]
fn tournament_report_is_antisymmetric_and_named_after_run_dirs() {
    let out = scratch().join("tournament_report");
    let (a, b) = (ring_forest_run(), ring_fc_run());
    run_ok(&["tournament", "--runs", path_str(a), path_str(b), "--seed", "6", "--out", path_str(&out)]);
    for file in ["report.json", "tables.txt", "heatmap.svg"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["models"], serde_json::json!(["ring_forest", "ring_fc"]));
    let diff = report["diff_matrix"].as_array().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let d_ij = diff[i].as_array().unwrap()[j].as_f64().unwrap();
            let d_ji = diff[j].as_array().unwrap()[i].as_f64().unwrap();
            assert_eq!(d_ij + d_ji, 0.0, "diff matrix not antisymmetric at ({i}, {j})");
        }
    }
    assert_eq!(report["ordering"]["cycle"], false);
    let tables = std::fs::read_to_string(out.join("tables.txt")).unwrap();
    assert!(tables.contains("ring_forest") && tables.contains("ring_fc"));
}

#[test]
fn tournament_rejects_mixed_datasets() {
    let out = scratch().join("tournament_mixed");
    let code = exit_code(&[
        "tournament",
        "--runs",
        path_str(ring_forest_run()),
        path_str(moons_run()),
        "--seed",
        "6",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code, 2, "dataset mismatch is a usage error");
}

// ---------------------------------------------------------------------------
// Plot command
// ---------------------------------------------------------------------------

#[test]
fn plot_renders_default_and_custom_charts() {
    let run_dir = xor_tree_run().join("seed_0");
    run_ok(&["plot", "--run", path_str(&run_dir)]);
    assert!(run_dir.join("plots/loss.svg").is_file());
    assert!(run_dir.join("plots/condition.svg").is_file());

    let spec_path = scratch().join("val_loss_plot.json");
    std::fs::write(
        &spec_path,
        r#"{ "series": ["val_loss"], "log_y": true, "out": "val.svg", "title": "Validation loss" }"#,
    )
    .unwrap();
    run_ok(&["plot", "--run", path_str(&run_dir), "--spec", path_str(&spec_path)]);
    let svg = std::fs::read_to_string(run_dir.join("plots/val.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("Validation loss"));
}

#[test]
fn plot_rejects_unknown_columns() {
    let run_dir = xor_tree_run().join("seed_0");
    let spec_path = scratch().join("bad_plot.json");
    std::fs::write(&spec_path, r#"{ "series": ["no_such_column"] }"#).unwrap();
    let code = exit_code(&["plot", "--run", path_str(&run_dir), "--spec", path_str(&spec_path)]);
    assert_eq!(code, 2, "unknown column is a usage error");
}

// ---------------------------------------------------------------------------
// Exit codes and config override
// ---------------------------------------------------------------------------

#[test]
fn usage_errors_exit_with_two() {
    // clap-level: unknown subcommand, missing required flag, bad enum value.
    assert_eq!(exit_code(&["frobnicate"]), 2);
    assert_eq!(exit_code(&["xor"]), 2);
    assert_eq!(exit_code(&["xor", "--model", "quantum"]), 2);
    // Library-level precondition: parity needs at least two inputs.
    let dir = scratch().join("xor_dim1");
    assert_eq!(
        exit_code(&["xor", "--model", "tree", "--dim", "1", "--out", path_str(&dir)]),
        2
    );
}

#[test]
fn config_file_overrides_the_recipe() {
    let dir = scratch().join("xor_config_override");
    let config_path = scratch().join("short_xor.json");
    // A pared-down parity config; `epochs` is accepted for the step count.
    std::fs::write(
        &config_path,
        r#"{
            "batch_size": 8,
            "learning_rate": 0.3,
            "beta2": 0.95,
            "epochs": 25,
            "seed": 0,
            "condition_probe_every": 5,
            "dataset": { "kind": "xor", "dim": 3, "n_samples": 8, "seed": 0 }
        }"#,
    )
    .unwrap();
    run_ok(&[
        "xor",
        "--model",
        "tree",
        "--seeds",
        "1",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&dir),
    ]);
    let log = std::fs::read_to_string(dir.join("seed_0/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 26, "25 configured epochs plus the header");
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["epochs"], 25);
}
