use std::path::Path;
use std::process::Command;

fn stochum(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stochum"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selftest_exits_zero_and_writes_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "[solve]\nmode = \"selftest\"\n");
    let out_dir = dir.path().join("out");
    let out = stochum(&[&cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("PASS selftest.oracle_compare")));
    assert!(out_dir.join("result.json").exists());
}

#[test]
fn configuration_errors_exit_two_and_name_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[domain]\ng_lo = 0.9\ng_hi = 0.1\nwidth = 2\n[solve]\nmode = \"norm\"\nN0 = 1.0\n",
    );
    let out = stochum(&[&cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    for field in ["domain.g_lo", "domain.width", "solve.N0"] {
        assert!(stderr.contains(field), "{field} missing from {stderr}");
    }
}

#[test]
fn mode_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.toml", "[solve]\nmode = \"norm\"\n");
    let out_dir = dir.path().join("out");
    let out = stochum(&[
        &cfg,
        "--mode",
        "selftest",
        "--seedless",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("SKIP selftest.duality"));
}

#[test]
fn failing_ledger_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.toml",
        "[domain]\nn = 8\ng_lo = 0.1\ng_hi = 0.9\n[solve]\nmode = \"time\"\ndt = 0.1\nN0 = 1e-30\nbracket = [0.1, 0.2]\nexpand_cap = 1\n",
    );
    let out_dir = dir.path().join("out");
    let out = stochum(&[&cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("FAIL time.bracket"));
    assert!(out_dir.join("result.json").exists());
}

#[test]
fn missing_file_is_a_configuration_error() {
    let out = stochum(&["/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            stochum::config::parse_config(&path, None)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
