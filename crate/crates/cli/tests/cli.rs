use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[market]
scenarios = 30
synthetic_days = 300

[grid]
m_fixed = 400
dt_fixed = 0.5

[sampling]
mode = "classical"
c = 10
c0 = 5
c_k = 5
c_max = 10
i_max = 4
e_tol = 0.05

[report]
svd_benchmark = false
"#;

const LOOSE: &str = r#"
[tolerances]
e_tol = 1.0
e_tol_h = 0.3
e_tol_t = 0.1
e_tol_d = 0.3
e_tol_samp = 0.3
"#;

fn morrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morrisk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_exit_code_follows_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let loose = write_config(dir.path(), "loose.toml", &format!("{LOOSE}{TINY}"));
    let out_dir = dir.path().join("out");
    let o = morrisk(&["run", "--config", &loose, "--output", out_dir.to_str().unwrap(), "--threads", "2"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.contains("converged: true"));
    assert!(out_dir.join("summary.md").is_file());

    let r = morrisk(&["report", "--input", out_dir.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("30 scenarios"));

    let strict = write_config(
        dir.path(),
        "strict.toml",
        &format!("[tolerances]\ne_tol = 1e-12\ne_tol_h = 1e-13\ne_tol_d = 1e-13\ne_tol_samp = 1e-13\n{TINY}"),
    );
    let o = morrisk(&["run", "--config", &strict, "--output", dir.path().join("strict").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged: false"));
}

#[test]
fn greedy_and_grid_study_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{LOOSE}{TINY}"));
    let out = dir.path().join("g");
    let o = morrisk(&["greedy", "--config", &cfg, "--mode", "adaptive", "--seed", "3", "--output", out.to_str().unwrap()]);
    assert!(o.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("greedy_trace.csv").is_file());
    assert!(out.join("basis.morq").is_file());

    let o = morrisk(&["grid-study", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert!(o.status.code().unwrap() <= 1);
    assert!(out.join("grid_study.csv").is_file());
}

#[test]
fn errors_exit_with_two() {
    let o = morrisk(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    let o = morrisk(&["report", "--input", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = morrisk(&["greedy", "--mode", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}
