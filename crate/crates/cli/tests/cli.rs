use std::path::Path;
use std::process::{Command, Output};

use discovery_cli::preset;
use discovery_core::PassModel;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_discovery"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn discovery")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(&run(args))).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn frontier_default_grid_peaks_near_two_ninths() {
    let out = stdout(&run(&["frontier"]));
    assert!(!out.contains('\r'));
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["mu", "P", "Pprime", "Lambda"]);
    assert_eq!(rows.len(), 1 + 99);
    let (mut best, mut arg) = (f64::MIN, 0.0_f64);
    for r in &rows[1..] {
        let dp: f64 = r[2].parse().unwrap();
        if dp > best {
            best = dp;
            arg = r[0].parse().unwrap();
        }
    }
    assert!((arg - 2.0 / 9.0).abs() <= 0.01 + 1e-12, "peak at {arg}");
}

#[test]
fn frontier_points_and_empty_grid() {
    let out = stdout(&run(&["frontier", "--points", "0.5"]));
    let rows = csv_rows(&out);
    let p: f64 = rows[1][1].parse().unwrap();
    assert!((p - 0.9453125).abs() < 1e-12);

    let empty = stdout(&run(&["frontier", "--points", ""]));
    assert_eq!(empty, "mu,P,Pprime,Lambda\n");
    let empty = stdout(&run(&["frontier", "--grid", "0.5:0.4:0.01"]));
    assert_eq!(empty, "mu,P,Pprime,Lambda\n");

    let v = json(&["frontier", "--points", "0.3", "--format", "json"]);
    assert!((v[0]["Pprime"].as_f64().unwrap() - 2.66828).abs() < 1e-5);
}

#[test]
fn solve_baseline_and_first_best() {
    let v = json(&["solve"]);
    let mu = v["equilibrium"]["mu_star"].as_f64().unwrap();
    assert!((mu - 0.3293775).abs() < 1e-6);
    assert!(v.get("first_best").is_none());

    let v = json(&["solve", "--first-best"]);
    assert!((v["first_best"]["mu_fb"].as_f64().unwrap() - 0.5596426).abs() < 1e-6);
    assert!((v["bounty"]["b_star"].as_f64().unwrap() - 46.3736).abs() < 1e-3);
}

#[test]
fn full_weight_creator_needs_no_bounty() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = preset("baseline").unwrap();
    f.creator.alpha = 1.0;
    let path = write(dir.path(), "s.json", &serde_json::to_string(&f).unwrap());
    let v = json(&["solve", "--first-best", "--scenario", &path]);
    assert_eq!(v["bounty"]["b_star"].as_f64().unwrap(), 0.0);
}

#[test]
fn range_violation_exits_2_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = preset("baseline").unwrap();
    f.policy.pass_model = PassModel::binomial(10, 0);
    let path = write(dir.path(), "s.json", &serde_json::to_string(&f).unwrap());
    let o = run(&["solve", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"]["kind"], "input");
    assert_eq!(e["error"]["pointer"], "/policy/pass_model/s");
}

#[test]
fn parse_error_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let text = serde_json::to_string_pretty(&preset("baseline").unwrap())
        .unwrap()
        .replacen("\"alpha\": 0.5", "\"alpha\": \"half\"", 1);
    let path = write(dir.path(), "s.json", &text);
    let o = run(&["solve", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"]["pointer"], "/creator/alpha");
    let line = text.lines().position(|l| l.contains("\"half\"")).unwrap() + 1;
    assert_eq!(e["error"]["line"].as_u64().unwrap() as usize, line);
    assert!(e["error"]["column"].as_u64().unwrap() > 0);
}

#[test]
fn ambiguous_equilibrium_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = preset("baseline").unwrap();
    f.policy.q = 11.0;
    f.policy.pass_model = PassModel::binomial(11, 4);
    let path = write(dir.path(), "s.json", &serde_json::to_string(&f).unwrap());
    let o = run(&["solve", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(3));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"]["code"], "ambiguous_equilibrium");
}

#[test]
fn unknown_preset_is_an_input_error() {
    let o = run(&["solve", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_q_keeps_failed_points_as_nan_rows() {
    let out = stdout(&run(&["budget", "sweep-q", "--q-range", "10:12"]));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 4);
    let q11 = rows.iter().find(|r| r[0] == "11").unwrap();
    assert_eq!(q11[3], "NaN");
    assert!(out.contains("ambiguous_equilibrium"));
}

#[test]
fn budget_loop_converges_and_state_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let v = json(&["budget", "loop", "--state-out", state.to_str().unwrap()]);
    assert_eq!(v["converged"], true);
    let q = v["state"]["q"].as_f64().unwrap();
    let b = v["state"]["B"].as_f64().unwrap();
    assert!(q <= 12.0 * 1.01 && q > 0.0);
    assert!(b >= 0.0);

    let step = json(&["budget", "step", "--state", state.to_str().unwrap()]);
    assert!((step["state"]["q"].as_f64().unwrap() - q).abs() < 0.05 * q);
}

#[test]
fn heatmap_flags_cells() {
    let out = stdout(&run(&["heatmap", "--q-range", "9:11", "--s-range", "3:12"]));
    let rows = csv_rows(&out);
    let cell = |q: &str, s: &str| rows.iter().find(|r| r[0] == q && r[1] == s).unwrap().clone();
    assert_eq!(cell("10", "3")[6], "interior");
    assert_eq!(cell("10", "12")[6], "s_exceeds_q");
    let lam: f64 = cell("10", "3")[5].parse().unwrap();
    assert!((lam - 3.4454).abs() < 1e-3);
}

#[test]
fn cohort_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cohort.csv");
    let o = run(&["cohort", "--n", "20000", "--seed", "4", "--format", "csv", "--out", csv_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("id,"));
    assert!(!text.contains('\r'));

    let v = json(&["fit", "--records", csv_path.to_str().unwrap()]);
    assert!(v["fit"].is_object());

    let jsonl = dir.path().join("cohort.jsonl");
    let o = run(&["cohort", "--n", "500", "--format", "jsonl", "--out", jsonl.to_str().unwrap()]);
    assert!(o.status.success());
    let lines = std::fs::read_to_string(&jsonl).unwrap();
    assert_eq!(lines.lines().count(), 500);
    assert!(json(&["fit", "--records", jsonl.to_str().unwrap()])["fit"].is_object());
}

#[test]
fn cohort_is_deterministic_under_seed() {
    let a = stdout(&run(&["cohort", "--n", "50", "--seed", "9", "--format", "csv"]));
    let b = stdout(&run(&["cohort", "--n", "50", "--seed", "9", "--format", "csv"]));
    let c = stdout(&run(&["cohort", "--n", "50", "--seed", "10", "--format", "csv"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn stress_and_replay_run_from_presets() {
    let v = json(&["stress"]);
    assert_eq!(v["source"], "model");
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);

    let v = json(&["replay", "--preset", "thompson-20", "--replications", "300"]);
    assert!(v["dh"].as_f64().unwrap().is_finite());
}

#[test]
fn noise_preset_lowers_effort() {
    let base = json(&["solve"])["equilibrium"]["mu_star"].as_f64().unwrap();
    let noisy = json(&["solve", "--preset", "noise"])["equilibrium"]["mu_star"].as_f64().unwrap();
    assert!(noisy < base);
}
