use std::process::Command;

fn chanshort() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chanshort"))
}

#[test]
fn malformed_config_exits_with_code_2_and_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, "[design]\nmemory = 1\nthis line has no equals sign\n").unwrap();
    let out = chanshort()
        .args(["design-cs", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.ini:3"), "{err}");
}

#[test]
fn unknown_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanshort()
        .args(["design-cs", "--set", "design.bogus=3", "--out"])
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_cs_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cs.csv");
    let out = chanshort()
        .args(["design-cs", "--seed", "3", "--set", "design.memory=1", "--set", "design.snr_db=6", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# chanshort "));
    assert!(text.contains("# config_sha256 "));
    assert!(text.contains("# seed 3"));
    assert!(text.lines().any(|l| l.starts_with("i_opt,")));
}
