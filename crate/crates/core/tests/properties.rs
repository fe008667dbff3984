use proptest::prelude::*;
use waveguide_nulling::config::RunConfig;
use waveguide_nulling::feasibility::{taper, taper_derivative_bound};
use waveguide_nulling::geometry::Vec3;
use waveguide_nulling::kernels::{dlp_kernel, phi, KernelParams};
use waveguide_nulling::solver::geometric_alphas;
use waveguide_nulling::specialfun::{bessel_j, bessel_root};

fn point() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn taper_stays_in_unit_interval_and_respects_bound(x in -0.3..0.3f64, c_t in 0.01..0.29f64) {
        let t = taper(x, 0.3, c_t).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.d));
        prop_assert!(t.d_prime.abs() <= taper_derivative_bound(c_t) * (1.0 + 1e-12));
        prop_assert!(t.d_prime * x <= 0.0);
    }

    #[test]
    fn helmholtz_kernel_is_symmetric(x in point(), y in point(), k in 0.1..5.0f64) {
        prop_assume!((x - y).norm() > 1e-3);
        let p = KernelParams::new(k);
        let a = phi(x, y, &p).unwrap();
        let b = phi(y, x, &p).unwrap();
        prop_assert!((a - b).norm() <= 1e-14 * a.norm());
    }

    #[test]
    fn double_layer_kernel_is_linear_in_the_normal(x in point(), y in point(), s in 0.1..3.0f64) {
        prop_assume!((x - y).norm() > 1e-3);
        let p = KernelParams::new(1.0);
        let nu = Vec3::new(0.6, 0.0, 0.8);
        let a = dlp_kernel(x, y, nu * s, &p).unwrap();
        let b = dlp_kernel(x, y, nu, &p).unwrap() * s;
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
    }

    #[test]
    fn cylindrical_coordinates_round_trip(x in -3.0..3.0f64, r in 0.01..3.0f64, t in -3.1..3.1f64) {
        let p = Vec3::cylindrical(x, r, t);
        prop_assert!((p.radial() - r).abs() <= 1e-12);
        prop_assert!((p.azimuth() - t).abs() <= 1e-12);
    }

    #[test]
    fn bessel_roots_are_zeros(order in 0u32..8, index in 1u32..6) {
        let chi = bessel_root(order, index).unwrap();
        prop_assert!(bessel_j(order, chi).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn alpha_grids_are_geometric(n in 2usize..20, hi in -3.0..0.0f64, span in 1.0..12.0f64) {
        let a = geometric_alphas(10f64.powf(hi), 10f64.powf(hi - span), n).unwrap();
        prop_assert_eq!(a.len(), n);
        let q = a[1] / a[0];
        for w in a.windows(2) {
            prop_assert!((w[1] / w[0] - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn config_round_trips_through_toml(radius in 1.0..10.0f64, quiet in 1e-4..1.0f64, count in 2usize..30) {
        let mut cfg = RunConfig::default();
        cfg.waveguide.radius = radius;
        cfg.surfaces.quiet_weight = quiet;
        cfg.solver.alpha_count = count;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
