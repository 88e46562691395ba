use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ftsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftsc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn bundled_scenario_runs_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = ftsc(&["--scenario", "fig3_caseA", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["trajectory.csv", "events.csv", "metrics.txt", "scenario.cfg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("status = ok"));
}

#[test]
fn pft_scenario_stops_before_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let res = ftsc(&["--scenario", "fig9_pft", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    let t_final: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("final_time = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(t_final < 4.5);
}

#[test]
fn malformed_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.cfg", "[plant\nbenchmark = \"A\"\n");
    let res = ftsc(&["--scenario", &p, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let p = write(dir.path(), "unknown.cfg", "[plant]\nbenchmark = \"A\"\nspeed = 3\n");
    assert_eq!(code(&ftsc(&["--scenario", &p])), 2);
}

#[test]
fn invalid_design_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "k.cfg", "[plant]\nbenchmark = \"A\"\n[ft]\nk = [1.0]\n");
    let res = ftsc(&["--scenario", &p]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("ft.k"));
}

#[test]
fn integration_failure_and_switch_cap_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nb");
    let res = ftsc(&["--scenario", "nussbaum_caseF", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 4);
    assert!(String::from_utf8_lossy(&res.stderr).contains("t = "));
    assert!(out.join("trajectory.csv").exists());

    let p = write(
        dir.path(),
        "cap.cfg",
        "[plant]\nbenchmark = \"A\"\n[supervisor]\nswitch_cap = 1\n[sim]\nt_end = 2.0\n",
    );
    let res = ftsc(&["--scenario", &p, "--out", dir.path().join("cap").to_str().unwrap()]);
    assert_eq!(code(&res), 5);
}

#[test]
fn missing_file_is_an_io_error() {
    assert_eq!(code(&ftsc(&["--scenario", "/nonexistent/file.cfg"])), 1);
}

#[test]
fn printed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let res = ftsc(&["--scenario", "fig3_caseB", "--dt", "2e-4", "--print-config"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("dt = 0.0002"));
    let p = write(dir.path(), "eff.cfg", &text);
    let again = ftsc(&["--scenario", &p, "--print-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn controller_override_switches_law() {
    let res = ftsc(&["--scenario", "fig3_caseA", "--controller", "pft", "--print-config"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("controller = \"pft\""));
    assert!(text.contains("t_end = 4.49955"));
}

#[test]
fn verify_subcommand_reports() {
    let res = ftsc(&["verify", "--seed", "7"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("inequalities") && text.contains("comparison") && text.contains("pft_bound"));
    assert!(text.contains("3/3 passed"));
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!(code(&ftsc(&["--suite", "fig4"])), 2);
}
