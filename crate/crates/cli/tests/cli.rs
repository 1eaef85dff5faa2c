use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 3
n_pairs = 3

[data]
kind = "blobs"
n = 240
noise = 0.6

[network]
hidden = [8, 8]

[train]
epochs = 10

[curve]
epochs = 5

[pam]
nu_p = 1000.0
nu_phi = 1000.0
outer_iters = 2
perm_epochs = 2
curve_epochs = 3

[sweep]
lrs = [0.01, 0.05, 0.1]
batch_sizes = [16, 32, 64]
"#;

fn modeconn(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_modeconn"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = modeconn(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join("run").join(rel)).unwrap()
}

#[test]
fn gen_data_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["gen-data"]);
    ok(b.path(), &["gen-data"]);
    assert_eq!(read(a.path(), "data.csv"), read(b.path(), "data.csv"));
    let text = String::from_utf8(read(a.path(), "data.csv")).unwrap();
    assert!(text.starts_with("label,f0,f1\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn full_pipeline_writes_report_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["run"]);
    ok(b.path(), &["run"]);
    let report = String::from_utf8(read(a.path(), "report/report_table.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 5);
    let modes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["unaligned", "pam-unaligned", "pam-aligned", "aligned"]);

    for rel in [
        "data.csv",
        "models/model_1.json",
        "models/model_6.json",
        "alignments/pair_2.json",
        "curves/table/pair_1/aligned.json",
        "curves/table/pair_0/pam-unaligned.pam.jsonl",
        "bounds/pair_0.json",
        "report/report_table.md",
    ] {
        assert_eq!(read(a.path(), rel), read(b.path(), rel), "{rel} differs between reruns");
    }
}

#[test]
fn figure_convention_report() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen-data"]);
    ok(d.path(), &["train"]);
    ok(d.path(), &["--override", "eval.seed_convention=\"figure\"", "curve", "--mode", "aligned"]);
    ok(d.path(), &["--override", "eval.seed_convention=\"figure\"", "curve", "--mode", "unaligned"]);
    assert!(d.path().join("run/curves/figure/pair_0/aligned.csv").exists());
    // Modes without curves are left out of the report.
    ok(d.path(), &["report", "--convention", "figure"]);
    let report = String::from_utf8(read(d.path(), "report/report_figure.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let out = modeconn(d.path(), &["report", "--convention", "table"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_override_exits_with_config_error() {
    let d = tempfile::tempdir().unwrap();
    let out = modeconn(d.path(), &["--override", "data.no_such_key=1", "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = modeconn(d.path(), &["--override", "garbage", "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_and_tampered_artifacts_exit_with_code_3() {
    let d = tempfile::tempdir().unwrap();
    let out = modeconn(d.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));

    ok(d.path(), &["gen-data"]);
    let csv = d.path().join("run/data.csv");
    let mut bytes = std::fs::read(&csv).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = if bytes[last] == b'1' { b'2' } else { b'1' };
    std::fs::write(&csv, bytes).unwrap();
    let out = modeconn(d.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn sweep_covers_the_grid() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen-data"]);
    ok(d.path(), &["train"]);
    ok(d.path(), &["sweep"]);
    let text = String::from_utf8(read(d.path(), "sweep/summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().filter(|r| r[0] == "unaligned").count(), 9);
    assert_eq!(rows.iter().filter(|r| r[0] == "aligned").count(), 9);
    let pairs = String::from_utf8(read(d.path(), "sweep/pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 2 * 9 * 3);
}
