use std::process::{Command, Output};

use serde_json::Value;

fn multibeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multibeam"))
        .args(args)
        .env_remove("MULTIBEAM_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn infinite_r0_json() {
    let out = multibeam(&["infinite-r0", "a=1.5"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["r0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["source"], "infinite_theory");
    assert_eq!(v["config"]["a"], "1.5");
    assert_eq!(v["metadata"]["command"], "infinite-r0");
    assert!(String::from_utf8_lossy(&out.stderr).contains("r0 = 1.000000"));
}

#[test]
fn single_result_csv_header() {
    let out = multibeam(&["--format", "csv", "infinite-r0", "lattice=square", "a=1.3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let meta: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(meta.contains(&"# command = infinite-r0"));
    assert!(meta.contains(&"# config.lattice = square"));
    assert!(meta.iter().any(|l| l.starts_with("# version = ")));
    assert!(meta.iter().any(|l| l.starts_with("# max_residual = ")));
    let body: Vec<&str> = text.lines().skip(meta.len()).collect();
    assert_eq!(
        body[0],
        "delta_res,gamma,gamma_loss,r0,source,gamma0,radiative_orders,target_orders"
    );
    assert_eq!(body.len(), 2);
}

#[test]
fn sweep_csv_header_and_rows() {
    let out = multibeam(&[
        "sweep-spacing",
        "N=7",
        "nk=48",
        "waist=0.3",
        "detuning=0",
        "grid=1.5,1.7",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut body = text.lines().filter(|l| !l.starts_with('#'));
    let header = body.next().unwrap();
    assert!(
        header.starts_with("a,na,r0,gamma,gamma_loss,delta_res,w_opt"),
        "{header}"
    );
    let rows: Vec<&str> = body.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1.5,"));
    let cols = header.split(',').count();
    assert!(rows.iter().all(|r| r.split(',').count() == cols));
}

#[test]
fn unknown_key_is_a_config_error() {
    let out = multibeam(&["infinite-r0", "spacingg=1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["error"]["message"].as_str().unwrap().contains("spacingg"));
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "# comment\na = 1.7\nna = 1.4\n").unwrap();
    let out = multibeam(&["--config", path.to_str().unwrap(), "infinite-r0"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["error"]["kind"], "config");
    assert!(
        v["error"]["message"].as_str().unwrap().contains("line 3"),
        "{v}"
    );
}

#[test]
fn window_check_rejects_spacing_outside_window() {
    let out = multibeam(&["infinite-r0", "a=2.3", "study=spacing-window"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["kind"], "config");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = multibeam(&["--config", "/nonexistent/run.conf", "infinite-r0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["kind"], "io");
}

#[test]
fn overrides_beat_the_config_file_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "[lattice]\nkind = square\na = 1.2\n").unwrap();
    let p = path.to_str().unwrap();
    let out = multibeam(&["--config", p, "emit-config", "a=1.3"]);
    assert!(out.status.success());
    let emitted = String::from_utf8(out.stdout).unwrap();
    assert!(emitted.contains("lattice = square"));
    assert!(emitted.contains("a = 1.3"));

    let again = dir.path().join("again.conf");
    std::fs::write(&again, &emitted).unwrap();
    let out = multibeam(&["--config", again.to_str().unwrap(), "emit-config"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), emitted);
}

#[test]
fn output_file_receives_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r0.json");
    let out = multibeam(&["--output", path.to_str().unwrap(), "infinite-r0", "a=1.2"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((v["r0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn bad_worker_count_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_multibeam"))
        .args(["infinite-r0"])
        .env("MULTIBEAM_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("MULTIBEAM_WORKERS"));
}
