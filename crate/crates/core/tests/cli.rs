use std::path::{Path, PathBuf};
use std::process::Command;

use descent::config::RunConfig;
use descent::harness::{cached_rho_field, cmd_cache, CacheAction};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_descent"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn write_variant(dir: &Path, base: &str, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(config(base)).unwrap();
    assert!(text.contains(from), "{from} not in {base}");
    let p = dir.join(base);
    std::fs::write(&p, text.replacen(from, to, 1)).unwrap();
    p
}

#[test]
fn flat_identities_pass_and_zero_tolerance_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&["identities"], &config("flat_constant.toml"), tmp.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(tmp.path().join("identities.json").exists());
    let strict = write_variant(tmp.path(), "flat_constant.toml", "[tolerances]", "[tolerances]\ntol_id = 0.0");
    let (code, stdout) = run(&["identities"], &strict, &tmp.path().join("strict"));
    assert_eq!(code, 2, "{stdout}");
    assert!(stdout.contains("FAIL"));
}

#[test]
fn flat_constant_represents_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&["represent"], &config("flat_constant.toml"), tmp.path());
    assert_eq!(code, 0, "{stdout}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("represent.json")).unwrap()).unwrap();
    let phi = v["report"]["phi_p_reconstructed"].as_f64().unwrap();
    assert!((phi - 1.0).abs() <= 1e-6, "{phi}");
}

#[test]
fn config_and_io_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_variant(tmp.path(), "flat_constant.toml", "t = [-1.0, 2.0]", "t = [2.0, -1.0]");
    assert_eq!(run(&["represent"], &bad, tmp.path()).0, 3);
    assert_eq!(run(&["represent"], &tmp.path().join("missing.toml"), tmp.path()).0, 5);
    let o = Command::new(env!("CARGO_BIN_EXE_descent")).arg("represent").output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("lapse_manufactured.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["identities", "--threads", "1"], &cfg, &a).0, 0);
    assert_eq!(run(&["identities", "--threads", "3"], &cfg, &b).0, 0);
    for f in ["identities.json", "identities.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cache_rebuild_reproduces_values() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&config("lapse_manufactured.toml")).unwrap();
    cfg.resolution.rho_grid = [5, 9, 9];
    cfg.output.dir = tmp.path().join("out");
    cfg.output.cache_dir = tmp.path().join("cache");
    let built = cmd_cache(&cfg, CacheAction::Build).unwrap();
    assert!(built.passed());
    let first = cached_rho_field(&cfg).unwrap();
    let cleared = cmd_cache(&cfg, CacheAction::Clear).unwrap();
    assert_eq!(cleared.files.len(), 1);
    let second = cached_rho_field(&cfg).unwrap();
    assert_eq!(first.shape, second.shape);
    for (a, b) in first.rho.iter().zip(&second.rho) {
        assert!(a.is_nan() && b.is_nan() || (a - b).abs() <= 1e-12);
    }
}
