use std::path::Path;
use std::process::{Command, Output};

fn novex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_novex"))
        .args(args)
        .output()
        .expect("spawn novex")
}

const TINY: &[&str] = &[
    "--trials", "1", "--n-train", "360", "--n-test", "180", "--trees", "5", "--max-depth", "4",
];

fn run_tiny(extra: &[&str]) -> Output {
    let mut args = vec!["run"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    novex(&args)
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn delta_sweep_writes_csv() {
    let text = stdout(&run_tiny(&["--values", "0,2", "--methods", "B2,ME"]));
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("axis,"), "{header}");
    assert_eq!(lines.count(), 4);
}

#[test]
fn bits_sweep_writes_markdown() {
    let text = stdout(&run_tiny(&[
        "--sweep", "bits", "--values", "none,2", "--methods", "ME,B3", "--format", "markdown",
    ]));
    assert!(text.starts_with("| axis | method | FDR | power | comm (kB) |"));
    assert!(text.contains("| n/a | B3 |"), "{text}");
    assert!(text.contains("1 kB = 1000 bytes."));
}

#[test]
fn runs_are_reproducible() {
    let args = ["--values", "1", "--methods", "B3", "--seed", "7"];
    assert_eq!(stdout(&run_tiny(&args)), stdout(&run_tiny(&args)));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("table.md");
    std::fs::write(
        &config,
        format!(
            "values = [\"0\"]\nmethods = [\"B2\"]\nformat = \"markdown\"\nout = {:?}\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let status = run_tiny(&["--config", config.to_str().unwrap(), "--methods", "B3"]);
    assert!(stdout(&status).is_empty());
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.contains("| B3 |") && !table.contains("| B2 |"), "{table}");
}

#[test]
fn export_data_writes_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let out = novex(&[
        "export-data", "--delta", "1.5", "--n-train", "30", "--n-test", "12", "--d", "6", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(Path::new(&path)).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.len(), 3 + 6);
    assert_eq!(&header[0], "agent");
    assert_eq!(reader.records().count(), 42);
}

#[test]
fn bad_input_fails_with_message() {
    for extra in [
        &["--sweep", "width"][..],
        &["--methods", "B4"][..],
        &["--alpha", "2"][..],
        &["--sweep", "bits", "--values", "0"][..],
        &["--config", "/nonexistent/run.toml"][..],
    ] {
        let out = run_tiny(extra);
        assert!(!out.status.success(), "{extra:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{extra:?}");
    }
}
