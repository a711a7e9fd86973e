use std::path::Path;
use std::process::{Command, Output};

use agcm::report::FitReport;
use agcm::SelectionResult;

fn agcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agcm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn select_dental_text_table() {
    let o = agcm(&["select", "--dental"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[1], "(1, 1)         90.4011*");
    assert_eq!(lines[9], "(3, 3)         98.1777");
}

#[test]
fn select_json_reports_best() {
    let o = agcm(&["select", "--dental", "--format", "json"]);
    assert!(o.status.success());
    let r: SelectionResult = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.best, vec![1, 1]);
    assert_eq!(r.grid.len(), 9);
}

#[test]
fn fit_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = agcm(&["fit", "--dental", "--degrees", "2,3", "--format", "json", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: FitReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let data = agcm::dental_dataset();
    let direct = agcm::fit(&data.y, &data.spec(&[2, 3]).unwrap()).unwrap();
    assert_eq!(report.fit, direct);
    assert_eq!(report.degrees, vec![2, 3]);
    assert_eq!(report.groups, vec!["girls", "boys"]);
}

#[test]
fn simulate_is_seeded_and_loadable() {
    let a = agcm(&["simulate", "--seed", "9", "--n", "20", "--format", "csv"]);
    let b = agcm(&["simulate", "--seed", "9", "--n", "20", "--format", "csv"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "sim.csv", &stdout(&a));
    let o = agcm(&["fit", "--data", &path, "--degrees", "1,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn unseeded_runs_report_their_seed() {
    let o = agcm(&["simulate", "--n", "10"]);
    assert!(o.status.success());
    assert!(stderr(&o).starts_with("seed: "));
}

#[test]
fn mc_aic_svg_with_csv_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("charts").join("aic.svg");
    let o = agcm(&[
        "mc-aic", "--seed", "3", "--rho", "0.5", "--n-grid", "20,40", "--replications", "20", "--format", "svg", "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 3);
    let csv = std::fs::read_to_string(svg.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn diag_bias_text() {
    let o = agcm(&["diag", "bias", "--seed", "1", "--n", "40", "--replications", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("block 2"));
}

#[test]
fn validation_errors_exit_2() {
    let o = agcm(&["fit", "--dental", "--degrees", "4,1"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "blank.csv", "group,1,2,3,4\na,1,2,3,4\na,1,,3,4\n");
    let o = agcm(&["fit", "--data", &path, "--degrees", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing value at row 3, column 3"), "{}", stderr(&o));
    let o = agcm(&["select", "--dental", "--format", "svg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_data_exit_3() {
    // Every row equals its group mean, so the residual space is empty.
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..6).map(|i| if i < 3 { "a,1,2,3,4\n" } else { "b,2,2,2,2\n" }).collect();
    let path = write(dir.path(), "flat.csv", &format!("group,1,2,3,4\n{rows}"));
    let o = agcm(&["fit", "--data", &path, "--degrees", "1,1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn io_errors_exit_4() {
    let o = agcm(&["fit", "--data", "/nonexistent/data.csv", "--degrees", "1,1"]);
    assert_eq!(o.status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "x");
    let o = agcm(&["select", "--dental", "--out", &format!("{blocker}/out.txt")]);
    assert_eq!(o.status.code(), Some(4));
}
