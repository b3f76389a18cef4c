use std::io::Write;
use std::process::{Command, Output, Stdio};

fn encctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_encctl"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(
        encctl(&["run", "--case", "1", "--frobnicate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(encctl(&["run", "--case", "3"]).status.code(), Some(2));
    assert_eq!(
        encctl(&["run", "--case", "1", "--mode", "fast"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn tiny_modulus_exits_with_overflow() {
    let out = encctl(&[
        "run",
        "--case",
        "1",
        "--mode",
        "plain",
        "--ring-degree",
        "16",
        "--log-q",
        "10",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = encctl(&["run", "--case", "2", "--ring-degree", "16", "--log-q", "10"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_a_replayable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let csv_s = csv.to_str().unwrap();
    let args = [
        "run",
        "--case",
        "2",
        "--steps",
        "8",
        "--ring-degree",
        "256",
        "--track",
        "--out",
        csv_s,
    ];
    let out = encctl(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("external products per step: 9"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# case=2\n"));
    assert!(text.contains("\nt,y0,y1,u0,u1,u_nom0,u_nom1,err,elapsed_ms,ext_prod_count,margin\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);

    let digest = |t: &str| {
        t.lines()
            .find(|l| l.starts_with("# state_digest="))
            .map(str::to_owned)
    };
    let replayed = dir.path().join("replay.csv");
    let out = encctl(&[
        "run",
        "--replay",
        csv_s,
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again = std::fs::read_to_string(&replayed).unwrap();
    assert!(digest(&text).is_some());
    assert_eq!(digest(&text), digest(&again));
}

#[test]
fn rcf_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_encctl"))
        .arg("rcf")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"4 4\n1 1 0 0\n2 0 0 0\n0 0 1 1\n0 0 2 0\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("kappa 2"), "{text}");
    assert!(text.contains("r 0 2"));
    assert!(text.contains("checks passed"));
}

#[test]
fn keygen_writes_a_container() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sk.bin");
    let out = encctl(&[
        "keygen",
        "--out",
        path.to_str().unwrap(),
        "--ring-degree",
        "64",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    assert!(std::fs::read(&path).unwrap().starts_with(b"ENCCTL"));
}

#[test]
fn verify_passes() {
    let out = encctl(&["verify"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
}
