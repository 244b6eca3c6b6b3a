//! End-to-end checks of the binary: exit codes, validation completeness,
//! and byte-level determinism of rerun outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_mesolj")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mesolj-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SMALL_CONV: &str = r#"
[kernel]
epsilon = 2.0
r0 = 1.0
a = 0.8
b = 0.4
d = 2

[grid]
n = 64
half_width = 4.0

[pde]
t_horizon = 0.02
dt = 0.001
r = 11.0
beta = 0.99
snapshot_stride = 5
allow_uncovered_horizon = true

[meso]
alpha = 0.15

[study]
kind = "convergence"
n_list = [64, 128]
seeds = 3
record_stride = 10
table_radii = 128
"#;

#[test]
fn invalid_config_exits_2_and_lists_all_violations() {
    let dir = tmp_dir("invalid");
    let bad = SMALL_CONV
        .replace("a = 0.8", "a = 1.4") // a >= d - 1
        .replace("alpha = 0.15", "alpha = 2.0");
    let cfg = write_config(&dir, "bad.toml", &bad);
    let out = Command::new(binary())
        .args(["convergence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("d - 1 > a > b > 0"), "{stderr}");
    assert!(stderr.contains("alpha"), "{stderr}");
}

#[test]
fn regime_violation_exits_3_unless_waived() {
    let dir = tmp_dir("regime");
    // alpha above the admissible bound 1/(2(0.99 + 2/1.1)) ~ 0.178
    let regime = SMALL_CONV.replace("alpha = 0.15", "alpha = 0.2");
    let cfg = write_config(&dir, "regime.toml", &regime);
    let out = Command::new(binary())
        .args(["convergence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("admissible mesoscale bound"));

    let waived = format!("{}\nuncovered_regime = true\n", regime);
    let cfg = write_config(&dir, "waived.toml", &waived);
    let out = Command::new(binary())
        .args(["convergence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.join("out2/manifest.json")).unwrap();
    assert!(manifest.contains("waived_conditions"));
    assert!(manifest.contains("admissible mesoscale bound"));
}

#[test]
fn missing_config_exits_4() {
    let dir = tmp_dir("missing");
    let out = Command::new(binary())
        .args(["convergence", "--config"])
        .arg(dir.join("nope.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn rerun_produces_identical_csv_bytes() {
    let dir = tmp_dir("determinism");
    let cfg = write_config(&dir, "conv.toml", SMALL_CONV);
    for tag in ["one", "two"] {
        let out = Command::new(binary())
            .args(["convergence", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(tag))
            .args(["--seed-base", "7", "--threads", "2"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.join("one/convergence.csv")).unwrap();
    let b = fs::read(dir.join("two/convergence.csv")).unwrap();
    assert_eq!(a, b, "rerun CSV bytes differ");

    // a different seed base changes the numbers
    let out = Command::new(binary())
        .args(["convergence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("three"))
        .args(["--seed-base", "99"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let c = fs::read(dir.join("three/convergence.csv")).unwrap();
    assert_ne!(a, c, "different seeds should change the table");
}

#[test]
fn manifest_written_before_results_and_finalized() {
    let dir = tmp_dir("manifest");
    let cfg = write_config(&dir, "conv.toml", SMALL_CONV);
    let out = Command::new(binary())
        .args(["solve-pde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() > 0.0);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
    // keys serialize sorted
    let text = fs::read_to_string(dir.join("out/manifest.json")).unwrap();
    let hash_pos = text.find("config_hash").unwrap();
    let status_pos = text.find("status").unwrap();
    assert!(hash_pos < status_pos);
}

#[test]
fn simulate_and_sconv_smoke() {
    let dir = tmp_dir("simulate");
    let sim_cfg = format!(
        "{}\nn_particles = 32\nsim_steps = 20\n",
        SMALL_CONV.replace("kind = \"convergence\"", "kind = \"simulate-only\"")
    );
    let cfg = write_config(&dir, "sim.toml", &sim_cfg);
    let out = Command::new(binary())
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(dir.join("out/trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,i,x1,x2"));
    assert!(dir.join("out/wiener.bin").exists());

    let sconv_cfg = SMALL_CONV
        .replace("kind = \"convergence\"", "kind = \"sconv\"")
        .replace("seeds = 3", "seeds = 2\nsim_steps = 20\nharvest_stride = 5");
    let cfg = write_config(&dir, "sconv.toml", &sconv_cfg);
    let out = Command::new(binary())
        .args(["sconv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("sconv_out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("sconv_out/sconv.csv")).unwrap();
    assert!(csv.starts_with("n,seed_count,mean_norm,stderr,slope_so_far"));
    assert!(dir.join("sconv_out/sconv_bessel.csv").exists());
}
