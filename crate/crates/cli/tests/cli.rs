use std::path::Path;
use std::process::{Command, Output};

use leosim::metrics::import_summary;
use leosim::sweep::{parse_grid_csv, GRID_HEADER};

const SHORT: &str = "sim.duration_s = 60\ntraffic.flow_count = 10\n";

fn leosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leosim"))
        .args(args)
        .env_remove("LEOSIM_OUT")
        .output()
        .expect("spawn leosim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_empty_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "empty.txt", "");
    let o = leosim(&["validate", "--scenario", &sc]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo = String::from_utf8(o.stdout).unwrap();
    for line in [
        "polar.planes = 6",
        "inclined.planes = 20",
        "green.cpu_th_pct = 80",
        "green.idle_time_s = 600",
        "sim.duration_s = 3600",
        "sim.refresh_s = 10",
        "sim.queue_ms = 250",
        "link.capacity_bps = 20000000",
    ] {
        assert!(echo.contains(line), "missing '{line}' in\n{echo}");
    }
    assert_eq!(echo.matches("ground.").count(), 10);
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..9 {
        let flag = if i < 2 { "controller" } else { "-" };
        text.push_str(&format!("ground.g{i} = {}, 10, {flag}\n", i * 5));
    }
    text.push_str("green.cpu_th_pct = 105\n");
    let sc = write(dir.path(), "bad.txt", &text);
    let o = leosim(&["validate", "--scenario", &sc]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("ground station count != 10"), "{err}");
    assert!(err.contains("green.cpu_th_pct"), "{err}");
    assert!(err.contains("line 10"), "{err}");
}

#[test]
fn missing_scenario_is_io_failure() {
    let o = leosim(&["validate", "--scenario", "/nonexistent/scenario.txt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_parseable_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "short.txt", SHORT);
    let mut bytes = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("out{i}"));
        let o = leosim(&[
            "run",
            "--scenario",
            &sc,
            "--protocol",
            "srv6-green",
            "--load",
            "0.5",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let s = import_summary(&out.join("summary.v1")).unwrap();
        assert_eq!(s.schema, "v1");
        assert_eq!(s.seed, 42);
        let series = std::fs::read(out.join("series.csv")).unwrap();
        assert!(series.starts_with(b"t_s,node_id,cpu_pct,mem_bytes\n"));
        bytes.push((std::fs::read(out.join("summary.v1")).unwrap(), series));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn run_rejects_out_of_range_load() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = leosim(&["run", "--protocol", "ipv4", "--load", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("load"), "{}", stderr(&o));
    assert!(!out.join("summary.v1").exists());
}

#[test]
fn run_unwritable_out_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "short.txt", SHORT);
    let blocker = write(dir.path(), "file", "x");
    let out = format!("{blocker}/sub");
    let o = leosim(&["run", "--scenario", &sc, "--protocol", "ipv4", "--load", "0.2", "--out", &out]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_uses_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "short.txt", SHORT);
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_leosim"))
        .args(["run", "--scenario", &sc, "--protocol", "mpls", "--load", "0.3"])
        .env("LEOSIM_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("summary.v1").exists());
}

#[test]
fn compare_writes_sorted_grid_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "short.txt", SHORT);
    let out = dir.path().join("grid");
    let args = |resume: bool| {
        let mut a = vec![
            "compare".to_string(),
            "--scenario".into(),
            sc.clone(),
            "--protocols".into(),
            "srv6,ipv4".into(),
            "--loads".into(),
            "0.5:1.0:0.5".into(),
            "--seeds".into(),
            "1".into(),
            "--jobs".into(),
            "2".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        if resume {
            a.push("--resume".into());
        }
        a
    };
    let run = |a: Vec<String>| leosim(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let o = run(args(false));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let full = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert!(full.starts_with(GRID_HEADER));
    let rows = parse_grid_csv(&full).unwrap();
    let keys: Vec<String> = rows.iter().map(|r| format!("{} {}", r.protocol, r.load)).collect();
    assert_eq!(keys, ["ipv4 0.5", "ipv4 1", "srv6 0.5", "srv6 1"]);

    // drop one row as if the grid had been interrupted
    let truncated: Vec<&str> = full.lines().filter(|l| !l.starts_with("srv6,1,")).collect();
    std::fs::write(out.join("grid.csv"), truncated.join("\n") + "\n").unwrap();
    let o = run(args(true));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("1 cells to run, 3 already done"), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("grid.csv")).unwrap(), full);
}

#[test]
fn compare_rejects_bad_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = leosim(&["compare", "--protocols", "ipv5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ipv5"));
    let o = leosim(&["compare", "--loads", "0.5:1.5:0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("loads"));
}
