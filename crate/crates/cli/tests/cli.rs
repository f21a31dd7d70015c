use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn knitsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knitsim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn only_file(dir: &Path, ext: &str) -> PathBuf {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    assert_eq!(files.len(), 1, "{files:?}");
    files.pop().unwrap()
}

/// Header row and data rows of a result file.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#')).skip(1);
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn without_run_line(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("# run ")).collect::<Vec<_>>().join("\n")
}

const TOMO: &[&str] = &["tomography", "--kind", "pauli", "--d", "2", "--eps", "0.1", "--delta", "0.1", "--trials", "50", "--seed", "7"];

#[test]
fn tomography_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), TOMO);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = only_file(dir.path(), "csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("knitsim-csv/1"));
    let (header, rows) = table(&csv);
    assert_eq!(rows.len(), 50);
    let n = col(&header, "planned_shots");
    assert!(rows.iter().all(|r| r[n] == "10286"));
    assert!(only_file(dir.path(), "json").exists());
}

#[test]
fn missing_eps_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), &["tomography", "--d", "2", "--delta", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--eps"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn invalid_ranges_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["tomography", "--d", "3", "--eps", "0.1", "--delta", "0.1"][..],
        &["tomography", "--d", "2", "--eps", "0", "--delta", "0.1"],
        &["tomography", "--d", "2", "--eps", "0.1", "--delta", "1.5"],
        &["twolayer", "--r", "30", "--eps", "0.1", "--delta", "0.1"],
        &["tree", "--l", "2", "--r", "2", "--eps", "0.1", "--delta", "0.1", "--protocol", "a"],
        &["tomography", "--kind", "nonsense", "--eps", "0.1", "--delta", "0.1"],
    ] {
        let out = knitsim(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    knitsim(a.path(), TOMO);
    knitsim(b.path(), TOMO);
    let (fa, fb) = (only_file(a.path(), "csv"), only_file(b.path(), "csv"));
    assert_eq!(fa.file_name(), fb.file_name());
    assert_eq!(
        without_run_line(&fs::read_to_string(fa).unwrap()),
        without_run_line(&fs::read_to_string(fb).unwrap())
    );
    assert_eq!(fs::read(only_file(a.path(), "json")).unwrap(), fs::read(only_file(b.path(), "json")).unwrap());

    let c = tempfile::tempdir().unwrap();
    let mut other: Vec<&str> = TOMO.to_vec();
    *other.last_mut().unwrap() = "8";
    knitsim(c.path(), &other);
    assert_ne!(only_file(c.path(), "csv").file_name(), only_file(a.path(), "csv").file_name());
}

#[test]
fn config_file_supplies_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"kind": "pauli", "d": 2, "eps": 0.1, "delta": 0.1, "trials": 50, "seed": 7}"#).unwrap();
    let out_a = dir.path().join("a");
    let out = knitsim(&out_a, &["--config", cfg.to_str().unwrap(), "tomography"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let flags = dir.path().join("b");
    knitsim(&flags, TOMO);
    assert_eq!(only_file(&out_a, "csv").file_name(), only_file(&flags, "csv").file_name());

    fs::write(&cfg, r#"{"eps": 0.1, "delta": 0.1, "epsilon": 0.2}"#).unwrap();
    let out = knitsim(&out_a, &["--config", cfg.to_str().unwrap(), "tomography"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_accepts_outputs_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    knitsim(dir.path(), TOMO);
    let csv = only_file(dir.path(), "csv");
    let ok = Command::new(env!("CARGO_BIN_EXE_knitsim")).arg("verify").arg(&csv).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));

    let text = fs::read_to_string(&csv).unwrap();
    let tampered = dir.path().join(csv.file_name().unwrap()).with_extension("bad.csv");
    fs::write(&tampered, text.replacen(",true", ",false", 1)).unwrap();
    let bad = Command::new(env!("CARGO_BIN_EXE_knitsim")).arg("verify").arg(&tampered).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAILED"));
}

#[test]
fn twolayer_has_r_plus_one_shot_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), &["twolayer", "--r", "3", "--eps", "0.3", "--delta", "0.1", "--trials", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&only_file(dir.path(), "csv"));
    let shot_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("shots_")).collect();
    assert_eq!(shot_cols.len(), 4);
    let total = col(&header, "total_shots");
    for r in &rows {
        let sum: u64 = shot_cols.iter().map(|&i| r[i].parse::<u64>().unwrap()).sum();
        assert_eq!(sum, r[total].parse::<u64>().unwrap());
    }
}

#[test]
fn chain_tree_reports_each_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), &["tree", "--l", "3", "--r", "1", "--eps", "0.3", "--delta", "0.1", "--trials", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&only_file(dir.path(), "csv"));
    for l in 1..=3 {
        col(&header, &format!("shots_depth_{l}"));
        col(&header, &format!("deviation_depth_{l}"));
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(only_file(dir.path(), "json")).unwrap()).unwrap();
    assert_eq!(json["plan"]["scheme"], "chain");
    assert_eq!(rows.len(), 2);
}

#[test]
fn tree_file_runs_and_is_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let tree = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/two_wire.json");
    let out = knitsim(dir.path(), &["twolayer", "--tree", tree, "--eps", "0.3", "--delta", "0.1", "--trials", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(only_file(dir.path(), "csv")).unwrap();
    assert!(text.contains("\"tree_sha256\":\""));
    let (header, rows) = table(&only_file(dir.path(), "csv"));
    let exact = col(&header, "exact");
    assert_eq!(rows[0][exact], rows[1][exact]);

    let clash = knitsim(dir.path(), &["twolayer", "--tree", tree, "--r", "3", "--eps", "0.3", "--delta", "0.1"]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn scaling_rows_are_sorted_by_r() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), &["scaling", "--r", "4,1,6,2,3,5", "--eps", "0.1", "--delta", "0.1"]);
    assert!(out.status.success());
    let (header, rows) = table(&only_file(dir.path(), "csv"));
    let r: Vec<usize> = rows.iter().map(|row| row[col(&header, "R")].parse().unwrap()).collect();
    assert_eq!(r, vec![1, 2, 3, 4, 5, 6]);
    let q = col(&header, "optimal_qpd_shots");
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[1][q].parse::<f64>().unwrap() / w[0][q].parse::<f64>().unwrap()).collect();
    assert!(ratios.iter().all(|x| (x - 9.0).abs() < 1e-9), "{ratios:?}");
}

#[test]
fn separation_grid_gives_ten_points_per_r() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["separation", "--r", "1,2", "--eps", "0.5", "--delta", "0.1", "--shots", "10,30,100,300,1000", "--trials", "3", "--seed", "5"];
    let out = knitsim(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = only_file(dir.path(), "csv");
    let (header, rows) = table(&csv);
    assert_eq!(rows.len(), 20);
    for r in ["1", "2"] {
        assert_eq!(rows.iter().filter(|row| row[col(&header, "R")] == r).count(), 10);
    }
    let rate = col(&header, "success_rate");
    assert!(rows.iter().all(|row| (0.0..=1.0).contains(&row[rate].parse::<f64>().unwrap())));

    let again = tempfile::tempdir().unwrap();
    knitsim(again.path(), &args);
    assert_eq!(
        without_run_line(&fs::read_to_string(&csv).unwrap()),
        without_run_line(&fs::read_to_string(only_file(again.path(), "csv")).unwrap())
    );
}

#[test]
fn plan_lists_every_node_and_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = knitsim(dir.path(), &["plan", "--l", "2", "--r", "2", "--eps", "0.2", "--delta", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&only_file(dir.path(), "csv"));
    assert_eq!(rows.len(), 2 + 4 + 1);
    assert_eq!(rows.last().unwrap()[col(&header, "path")], "root");
}
