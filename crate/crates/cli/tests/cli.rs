use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_paramsens");

fn paramsens(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PARAMSENS_CACHE").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const PARAMS: &str = "[[parameter]]\nname = \"param1\"\nmin = 0.0\nmax = 1.0\n\n[[parameter]]\nname = \"param2\"\nmin = 0.0\nmax = 1.0\n";

#[test]
fn sample_writes_plan() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.toml");
    fs::write(&params, PARAMS).unwrap();
    let plan = dir.path().join("plan.csv");
    let args = ["sample", "--params", params.to_str().unwrap(), "--n", "3", "--step", "0.25", "--seed", "9", "--out", plan.to_str().unwrap()];
    let stdout = ok(&paramsens(&args));
    let text = fs::read_to_string(&plan).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert!(stdout.starts_with(&format!("{rows} samples in 3 stars")), "{stdout}");
    assert!(text.contains("sample_id,star_id,branch_param,step_offset,param1,param2"));
    ok(&paramsens(&args));
    assert_eq!(fs::read_to_string(&plan).unwrap(), text);
}

#[test]
fn sample_rejects_bad_params() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.toml");
    fs::write(&params, "[[parameter]]\nname = \"a\"\nmin = 1.0\nmax = 0.0\n").unwrap();
    let out = paramsens(&["sample", "--params", params.to_str().unwrap(), "--n", "2", "--step", "0.1", "--out", "x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn synth_writes_fiber_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    ok(&paramsens(&["synth", "--param1", "0.5", "--param2", "0.3", "--count", "5", "--extent", "200,200,300", "--out", out.to_str().unwrap()]));
    let text = fs::read_to_string(&out).unwrap();
    let ids: std::collections::BTreeSet<&str> = text.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
    assert_eq!(ids.len(), 5);
    let bad = paramsens(&["synth", "--param1", "1.5", "--param2", "0.3", "--out", out.to_str().unwrap()]);
    assert!(!bad.status.success());
}

/// A study whose target is this binary's `synth` verb run as an external
/// command.
fn external_study(dir: &Path) -> std::path::PathBuf {
    let config = format!(
        r#"
[study]
output = "out"

[[parameter]]
name = "param1"
min = 0.0
max = 1.0

[[parameter]]
name = "param2"
min = 0.0
max = 1.0

[sampling]
stars = 2
step = 0.25
seed = 3

[target]
kind = "external"
command = "{BIN} synth --param1 {{param1}} --param2 {{param2}} --count 8 --extent 150,150,300 --result-id {{sample_id}} --out {{output}}"

[analysis]
n_points = 100

[grid]
dims = [16, 16, 16]
"#
    );
    let path = dir.join("study.toml");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn run_analyze_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = external_study(dir.path());
    let stdout = ok(&paramsens(&["run", config.to_str().unwrap()]));
    assert!(stdout.contains("0 reused, 0 failed"), "{stdout}");
    let again = ok(&paramsens(&["run", config.to_str().unwrap()]));
    assert!(again.contains("0 executed"), "{again}");

    let collection = dir.path().join("out");
    let col = collection.to_str().unwrap();
    let written = ok(&paramsens(&["analyze", col]));
    assert_eq!(written.lines().count(), 3);
    let sens = fs::read_to_string(collection.join("sensitivity.csv")).unwrap();
    assert!(sens.starts_with("parameter,measure,scope,value\n"));
    assert!(sens.contains(",GLOBAL,"));
    assert_eq!(fs::metadata(collection.join("occupation.raw")).unwrap().len(), 16 * 16 * 16 * 4);

    let report = dir.path().join("report");
    ok(&paramsens(&["report", col, "--out", report.to_str().unwrap()]));
    for f in ["matrix.csv", "regional.csv", "embedding.csv", "summary.md"] {
        assert!(report.join(f).exists(), "{f}");
    }
    let matrix = fs::read_to_string(report.join("matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 2 * 7);
}

fn get(addr: &str, target: &str) -> (u16, serde_json::Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status: u16 = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    assert!(head.to_ascii_lowercase().contains("content-type: application/json"));
    (status, serde_json::from_str(body).unwrap())
}

#[test]
fn serve_answers_queries() {
    let dir = tempfile::tempdir().unwrap();
    let config = external_study(dir.path());
    ok(&paramsens(&["run", config.to_str().unwrap()]));
    let collection = dir.path().join("out");
    let mut child = Command::new(BIN)
        .args(["serve", collection.to_str().unwrap(), "--port", "0"])
        .env_remove("PARAMSENS_CACHE")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let (status, study) = get(&addr, "/study");
    assert_eq!(status, 200);
    assert_eq!(study["schema_version"], 1);
    let (status, mds) = get(&addr, "/mds");
    assert_eq!(status, 200);
    assert_eq!(mds["points"].as_array().unwrap().len(), study["samples"].as_array().unwrap().len());
    assert_eq!(get(&addr, "/matrix?measure=bogus").0, 400);
    assert_eq!(get(&addr, "/fibers/12345").0, 404);
    child.kill().unwrap();
    child.wait().unwrap();
}
