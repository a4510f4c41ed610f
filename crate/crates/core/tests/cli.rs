use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keygraph-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn eval_two_nodes() {
    let out = run(&[
        "--mode", "eval", "--n", "2", "--K", "1", "--P", "2", "--alpha", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["q"], 0.5);
    assert_eq!(v["p"], 0.5);
    assert_eq!(v["first_moment"], 1.0);
}

#[test]
fn eval_without_channels_has_zero_bounds() {
    let out = run(&[
        "--mode", "eval", "--n", "10", "--K", "2", "--P", "20", "--alpha", "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["lower_bound_P0"], 0.0);
    assert_eq!(v["upper_bound_P0"], 0.0);
}

#[test]
fn invalid_theta_exits_2() {
    let out = run(&[
        "--mode", "eval", "--n", "5", "--K", "4", "--P", "4", "--alpha", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error"));
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"mode":"eval","n":[3],"K":1,"P":3,"alpha":0.5,"bogus":1}"#,
    )
    .unwrap();
    let out = run(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"mode":"eval","n":[2],"K":1,"P":2,"alpha":0.3}"#).unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "--alpha", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["first_moment"], 1.0);
}

#[test]
fn simulate_zero_trials_exits_2() {
    let out = run(&[
        "--mode", "simulate", "--n", "5", "--K", "1", "--P", "3", "--alpha", "0.5", "--trials", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_stable_across_runs() {
    let args = [
        "--mode", "simulate", "--n", "20", "--K", "2", "--P", "30", "--alpha", "0.7", "--trials",
        "1", "--seed", "9",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["trials"], 1);
    assert!(v["analytic"]["first_moment"].is_f64());
}

#[test]
fn simulate_writes_per_trial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    let out = run(&[
        "--mode",
        "simulate",
        "--n",
        "10",
        "--K",
        "1",
        "--P",
        "3",
        "--alpha",
        "0.5",
        "--trials",
        "25",
        "--seed",
        "1",
        "--trials-csv",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "trial,isolated_count");
    assert_eq!(lines.len(), 26);
    assert!(csv.ends_with('\n'));
    let mean: f64 = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum::<f64>()
        / 25.0;
    assert!((mean - json(&out)["mc_mean_I"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn sweep_header_and_analytic_only_rows() {
    let out = run(&[
        "--mode", "sweep", "--n", "200,800", "--K", "4", "--alpha", "1", "--c", "2", "--trials",
        "0", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "n,K,P,alpha,gamma_achieved,c_equiv,e_I_analytic,e_I2_analytic,lower_bound_P0,upper_bound_P0,mc_freq_I0,mc_mean_I,mc_stderr_I0,trials,seed"
    );
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 15);
        assert!(cols[10..13].iter().all(|c| c.is_empty()), "{row}");
        assert!(!cols[8].is_empty() && !cols[9].is_empty());
    }
    assert!(lines[1].starts_with("200,4,"));
    assert!(lines[2].starts_with("800,4,"));
}

#[test]
fn sweep_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = run(&[
        "--mode",
        "sweep",
        "--n",
        "200",
        "--K",
        "4",
        "--alpha",
        "1",
        "--c",
        "2",
        "--trials",
        "0",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}

#[test]
fn infeasible_schedule_exits_3_naming_n() {
    let out = run(&[
        "--mode", "sweep", "--n", "200,800", "--K", "4", "--alpha", "0", "--c", "2", "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("n = 200"), "{}", stderr(&out));
}

#[test]
fn descending_n_is_invalid() {
    let out = run(&[
        "--mode", "sweep", "--n", "800,200", "--K", "4", "--alpha", "1", "--c", "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identities_default_grid_passes() {
    let out = run(&["--mode", "identities"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn identities_fault_injection_exits_1() {
    let out = run(&[
        "--mode",
        "identities",
        "--grid-size",
        "50",
        "--inject-fault",
        "q-off-by-one",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL q=v(θ,K)"));
}

#[test]
fn identities_empty_grid_warns() {
    let out = run(&["--mode", "identities", "--grid-size", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("0 checks"));
}

#[test]
fn oracle_mode_reports_exact_law() {
    let out = run(&[
        "--mode", "oracle", "--n", "3", "--K", "1", "--P", "2", "--alpha", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["exact"]["p_no_isolated"], 0.25);
}

#[test]
fn oracle_rejects_large_instances() {
    let out = run(&[
        "--mode", "oracle", "--n", "8", "--K", "2", "--P", "6", "--alpha", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
