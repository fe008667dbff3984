use std::fs;
use std::path::Path;
use std::process::Command;

use waveguide_nulling::config::RunConfig;

fn wgnull() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wgnull"));
    c.env("RUST_LOG", "warn");
    c
}

fn coarse_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    let m = &mut cfg.mesh;
    m.azimuthal = 8;
    m.source_straight = 12;
    m.source_cap = 4;
    m.control_straight = 8;
    m.control_cap = 3;
    m.truncation_straight = 16;
    m.truncation_cap = 4;
    m.antenna_axial = 12;
    m.control_r = 3;
    m.control_x = 4;
    m.control_theta = 8;
    m.wall_axial = 21;
    m.wall_azimuthal = 8;
    cfg.solver.alpha_count = 4;
    cfg.output.grid_radial = 4;
    cfg.output.grid_azimuthal = 8;
    let path = dir.join("coarse.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

#[test]
fn solve_grid_and_current_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse_config(dir.path());
    let out = dir.path().join("out");
    let status = wgnull()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--dump-matrix")
        .arg(out.join("k.bin"))
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["metrics.json", "timings.json", "density.csv", "sweep.csv", "mesh.csv", "k.bin"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for key in ["alpha", "linf_rel", "h1_control", "l2_quiet", "condition_estimate"] {
        assert!(metrics.get(key).is_some(), "metrics lacks {key}");
    }
    assert!(fs::read(out.join("k.bin")).unwrap().starts_with(b"WGNKMAT1"));

    let grid = wgnull()
        .args(["grid", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--slices", "-0.028,0.002"])
        .output()
        .unwrap();
    assert!(grid.status.success(), "{}", String::from_utf8_lossy(&grid.stderr));
    assert!(out.join("grid_x-0.028.csv").exists());
    let text = fs::read_to_string(out.join("grid_x0.002.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 8);

    let current = wgnull().args(["current", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(current.status.success(), "{}", String::from_utf8_lossy(&current.stderr));
    let text = fs::read_to_string(out.join("current.csv")).unwrap();
    assert!(text.starts_with("x,theta,re_m,im_m,d,delta_prime\n"));
}

#[test]
fn sweep_writes_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse_config(dir.path());
    let out = dir.path().join("out");
    let s = wgnull().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(s.status.success());
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn missing_density_and_bad_config_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse_config(dir.path());
    let g = wgnull()
        .args(["grid", "--config"])
        .arg(&cfg)
        .arg("--density")
        .arg(dir.path().join("nope.csv"))
        .output()
        .unwrap();
    assert!(!g.status.success());
    assert!(String::from_utf8_lossy(&g.stderr).contains("not found"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[antenna]\nhalf_length = \"long\"\n").unwrap();
    let s = wgnull().args(["solve", "--config"]).arg(&bad).output().unwrap();
    assert!(!s.status.success());

    let nested = dir.path().join("nested.toml");
    fs::write(&nested, "[[control]]\nx_center = 0.0\nx_half = 0.1\nr_inner = 0.06\nr_outer = 0.16\n").unwrap();
    let s = wgnull().args(["solve", "--config"]).arg(&nested).output().unwrap();
    assert!(!s.status.success());
    assert!(String::from_utf8_lossy(&s.stderr).contains("clearance"));
}

#[test]
fn oracle_exits_zero_when_all_checks_pass() {
    let o = wgnull().arg("oracle").output().unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
