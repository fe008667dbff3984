use std::fs;

use num_complex::Complex64 as c64;
use waveguide_nulling::config::RunConfig;
use waveguide_nulling::pipeline::{read_density_csv, slices, solve, write_density_csv, write_slices, Problem};
use waveguide_nulling::Error;

/// Default geometry at a resolution small enough for debug-speed tests.
fn coarse() -> RunConfig {
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
    cfg.solver.alpha_count = 5;
    cfg
}

#[test]
fn coarse_solve_reduces_the_control_error() {
    let out = solve(&coarse(), None).unwrap();
    assert_eq!(out.sweep.len(), 5);
    assert_eq!(out.metrics.source_unknowns, out.problem.source.len());
    assert!(out.metrics.linf_rel < 0.5, "linf_rel {}", out.metrics.linf_rel);
    assert!(out.metrics.l2_quiet_rel.is_finite());
    assert!(out.metrics.condition_estimate.is_finite());
}

#[test]
fn zero_amplitude_gives_zero_density_and_errors() {
    let mut cfg = coarse();
    cfg.modes[0].amplitude = [0.0, 0.0];
    let out = solve(&cfg, Some(1e-12)).unwrap();
    assert!(out.density.values.iter().all(|v| *v == c64::new(0.0, 0.0)));
    assert_eq!(out.metrics.linf_rel, 0.0);
    assert_eq!(out.metrics.l2_quiet, 0.0);
    assert_eq!(out.metrics.strategy, "fixed");
}

#[test]
fn nesting_violation_names_the_clearance() {
    let mut cfg = coarse();
    cfg.control[0].r_inner = 0.06;
    let err = Problem::build(&cfg).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("geometry"), "{text}");
    assert!(text.contains("control[0]"), "{text}");
}

#[test]
fn outputs_are_deterministic_and_reloadable() {
    let cfg = coarse();
    let dir = tempfile::tempdir().unwrap();
    let a = solve(&cfg, None).unwrap();
    a.write_outputs(&dir.path().join("a")).unwrap();
    let b = solve(&cfg, None).unwrap();
    b.write_outputs(&dir.path().join("b")).unwrap();
    for f in ["metrics.json", "density.csv", "sweep.csv", "mesh.csv"] {
        let fa = fs::read(dir.path().join("a").join(f)).unwrap();
        let fb = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(fa == fb, "{f} differs between runs");
    }
    let sweep = fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + cfg.solver.alpha_count);

    let loaded = read_density_csv(&dir.path().join("a/density.csv"), &a.problem.source).unwrap();
    assert_eq!(loaded, a.density.values);
}

#[test]
fn density_loader_rejects_foreign_meshes() {
    let cfg = coarse();
    let p = Problem::build(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("density.csv");
    let v = vec![c64::new(1.0, 0.0); p.source.len()];
    write_density_csv(&p.source, &v, fs::File::create(&path).unwrap()).unwrap();

    let mut other = cfg.clone();
    other.mesh.source_straight += 2;
    let q = Problem::build(&other).unwrap();
    assert!(read_density_csv(&path, &q.source).is_err());
    assert!(matches!(read_density_csv(&dir.path().join("missing.csv"), &p.source), Err(Error::Io(_))));
}

#[test]
fn slice_grid_covers_the_control_annulus() {
    let cfg = coarse();
    let p = Problem::build(&cfg).unwrap();
    let v = vec![c64::new(0.0, 0.0); p.source.len()];
    let s = slices(&p, &v, &[0.002]).unwrap();
    let r: Vec<f64> = s[0].points.iter().map(|q| q.radial()).collect();
    let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), x| (a.min(*x), b.max(*x)));
    assert!((lo - 0.13).abs() < 1e-12 && (hi - 0.16).abs() < 1e-12);
    assert!(s[0].points.iter().all(|q| (q.x - 0.002).abs() < 1e-15));

    let dir = tempfile::tempdir().unwrap();
    let files = write_slices(dir.path(), &s).unwrap();
    let text = fs::read_to_string(&files[0]).unwrap();
    assert!(text.starts_with("x,y,z,re_u,im_u,re_exi,im_exi,abs_u_plus_exi\n"));
    assert_eq!(text.lines().count(), 1 + cfg.output.grid_radial * cfg.output.grid_azimuthal);
}
