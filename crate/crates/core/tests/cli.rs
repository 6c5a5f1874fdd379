use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use basisrisk::pipeline::sha256_hex;

const SMALL: &str = r#"
[synthetic]
n_counties = 4
fields_per_county = 12
n_years = 20
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_basisrisk"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).expect("column");
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = run(&["run", "--config", &cfg, "--seed", "9", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));

    let manifest: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
    let files = manifest["outputs"].as_array().unwrap();
    assert!(files.len() >= 9);
    for f in files {
        let name = f["file"].as_str().unwrap();
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes), "{name}");
    }
    assert_eq!(manifest["config"]["seed"], 9);
}

#[test]
fn different_seed_changes_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["run", "--config", &cfg, "--seed", "1", "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["run", "--config", &cfg, "--seed", "2", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(read(&a, "simulated_panel.csv"), read(&b, "simulated_panel.csv"));
    assert_eq!(read(&a, "fits.csv"), read(&b, "fits.csv"));
}

#[test]
fn staged_commands_match_run() {
    let tmp = tempfile::tempdir().unwrap();
    let staged = tmp.path().join("staged");
    let whole = tmp.path().join("whole");
    let s = staged.to_str().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "[data]\ncounties = {:?}\n{SMALL}",
            staged.join("reference_counties.csv").display().to_string()
        ),
    );
    let panel = staged.join("panel.csv");
    let p = panel.to_str().unwrap();
    let steps: [&[&str]; 5] = [
        &["generate", "--config", &cfg, "--out", s],
        &["fit", "--config", &cfg, "--out", s, "--input", p],
        &["simulate", "--config", &cfg, "--seed", "4", "--out", s, "--input", p],
        &["evaluate", "--config", &cfg, "--out", s],
        &["aggregate", "--config", &cfg, "--out", s],
    ];
    for args in steps {
        let o = run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let plain_dir = tmp.path().join("plain");
    fs::create_dir_all(&plain_dir).unwrap();
    let plain = write_config(&plain_dir, SMALL);
    let o = run(&["run", "--config", &plain, "--seed", "4", "--out", whole.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["fits.csv", "simulated_panel.csv", "field_evaluations.csv", "county_aggregates.csv"] {
        assert_eq!(read(&staged, name), read(&whole, name), "{name}");
    }
}

#[test]
fn subsidy_raises_area_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let fair = tmp.path().join("fair");
    let sub = tmp.path().join("sub");
    assert!(run(&["run", "--config", &cfg, "--seed", "3", "--out", fair.to_str().unwrap()]).status.success());
    let o = run(&["run", "--config", &cfg, "--seed", "3", "--subsidy", "true", "--out", sub.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = column(&read(&fair, "field_evaluations.csv"), "ce_area");
    let b = column(&read(&sub, "field_evaluations.csv"), "ce_area");
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| y >= x));
    assert!(a.iter().zip(&b).any(|(x, y)| y > x));
}

#[test]
fn preference_and_trigger_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = run(&[
        "run", "--config", &cfg, "--seed", "3", "--preference", "cpt-r1", "--premium-basis", "county-fair",
        "--triggers", "0.85,0.5,0.7", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = read(&out, "field_evaluations.csv").lines().next().unwrap().to_string();
    assert!(header.contains("ce_farm_0.50,ce_farm_0.70,ce_farm_0.85"), "{header}");
    let manifest = read(&out, "manifest.json");
    assert!(manifest.contains("\"r1\""));
    assert!(manifest.contains("county_fair"));
}

#[test]
fn missing_seed_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["run", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn missing_input_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let o = run(&["fit", "--seed", "1", "--out", tmp.path().to_str().unwrap(), "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));

    let o = run(&["run", "--config", missing.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 1\n[contracts]\ntrigers = [0.5]\n");
    let o = run(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trigers"));
}

#[test]
fn unwritable_output_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = run(&["run", "--config", &cfg, "--seed", "1", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_size_and_county() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = run(&["sweep", "--config", &cfg, "--seed", "2", "--sizes", "20,40", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read(tmp.path(), "sweep.csv");
    assert_eq!(rows.lines().count(), 1 + 2 * 4);
    let summary = read(tmp.path(), "sweep_summary.csv");
    assert_eq!(column(&summary, "n_years"), vec![20.0, 40.0]);
}
