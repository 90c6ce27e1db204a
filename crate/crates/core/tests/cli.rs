//! End-to-end runs of the `gdstbc` binary.

use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdstbc"))
        .args(args)
        .env_remove("GDSTBC_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_builtin_succeeds() {
    let o = run(&["verify", "un2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("groups: 2"));
    assert!(text.contains("rate: 5/4"));
    assert!(text.contains("K: 3"));
}

#[test]
fn verify_flags_a_broken_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // Two identical identity matrices in different groups violate QOC.
    let doc = r#"{"T":1,"N":1,"groups":[[1],[2]],"matrices":[[[1,1,0,1]],[[1,1,0,1]]]}"#;
    std::fs::write(&path, doc).unwrap();
    let o = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED"));
}

#[test]
fn construct_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("code.json");
    let o = run(&["construct", "--seed-matrix", "1,1,0,0;1,-1,0,0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = run(&["verify", out.to_str().unwrap()]);
    assert!(v.status.success());
    assert!(stdout(&v).contains("rate: 5/4"));
}

#[test]
fn rate_and_complexity_print_exact_values() {
    let o = run(&["rate", "--T", "4", "--N", "4"]);
    assert!(stdout(&o).contains("max_rate: 17/8"));
    let o = run(&["rate", "--T", "4", "--N", "4", "--balanced"]);
    assert!(stdout(&o).contains("max_rate: 5/4"));
    let o = run(&["complexity", "--Lmax", "15", "--K", "5", "--b", "4", "--R", "2"]);
    assert_eq!(stdout(&o).trim(), "5·2^11");
    let o = run(&["complexity", "--Lmax", "4", "--K", "3", "--R", "5/4"]);
    assert_eq!(stdout(&o).trim(), "3·2^(4b/5)");
    let o = run(&["complexity", "--Lmax", "1", "--K", "1", "--R", "0.75"]);
    assert_eq!(stdout(&o).trim(), "2^(2b/3)");
}

#[test]
fn usage_errors_exit_nonzero() {
    let o = run(&["complexity", "--Lmax", "2", "--K", "3", "--R", "1"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
    let o = run(&["rate", "--T", "x", "--N", "2"]);
    assert!(!o.status.success());
    let o = run(&["verify", "no_such_code"]);
    assert!(!o.status.success());
}

fn simulate(extra: &[&str], env_seed: Option<&str>) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gdstbc"));
    cmd.args(["simulate", "--code", "un2_reduced", "--snr", "0,10", "--target-errors", "100", "--max-trials", "5000"]);
    cmd.args(extra);
    match env_seed {
        Some(s) => cmd.env("GDSTBC_SEED", s),
        None => cmd.env_remove("GDSTBC_SEED"),
    };
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn simulate_is_byte_identical_across_worker_counts() {
    let a = simulate(&["--workers", "1", "--seed", "8"], None);
    let b = simulate(&["--workers", "3", "--seed", "8"], None);
    assert_eq!(a, b);
    assert!(a.starts_with("snr_db,trials,bit_errors,ber,ci_halfwidth"));
}

#[test]
fn seed_flag_beats_environment() {
    let env_only = simulate(&[], Some("8"));
    let flag = simulate(&["--seed", "8"], None);
    let both = simulate(&["--seed", "8"], Some("9"));
    let other = simulate(&[], Some("9"));
    assert_eq!(env_only, flag);
    assert_eq!(both, flag);
    assert_ne!(other, flag);
}

#[test]
fn noiseless_simulation_has_zero_ber() {
    let text = simulate(&["--noiseless"], None);
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "0", "{line}");
    }
}

#[test]
fn simulate_reads_a_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let csv = dir.path().join("out.csv");
    std::fs::write(&cfg, "code = \"alamouti\"\nsnr_db = [6.0]\nmax_trials = 1000\ntarget_bit_errors = 50\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn certify_and_rotate_report_ranks() {
    let o = run(&["certify", "un2_reduced"]);
    assert!(stdout(&o).contains("min_rank: 2 (full: 2)"));
    let dir = tempfile::tempdir().unwrap();
    let angles = dir.path().join("angles.json");
    let o = run(&["rotate", "un2_reduced", "--step-divisor", "40", "--out", angles.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["certify", "un2_reduced", "--angles", angles.to_str().unwrap()]);
    assert!(stdout(&o).contains("min_rank: 2"));
}

#[test]
fn fixtures_are_written_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fixtures", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    for name in ["un2", "un2_reduced", "un4", "gpp3", "b4"] {
        let path = dir.path().join(format!("{name}.json"));
        assert!(run(&["verify", path.to_str().unwrap()]).status.success(), "{name}");
    }
}
