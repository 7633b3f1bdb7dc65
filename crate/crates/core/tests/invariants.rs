use proptest::prelude::*;

use descent::config::RunConfig;
use descent::frames::{cone_sample, frame_residuals, Caps};
use descent::geodesic::{exp_map, shoot_to_target, trace_ray, HyperboloidDir, RayOptions, VertexFrame};
use descent::metric::{riemann, riemann_fd, DerivMode, Domain, Family, MetricSpec, Shape};
use descent::quadrature::gauss_legendre;

fn dom() -> Domain {
    Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
}

fn family(k: usize, eps: f64) -> Family {
    let gauss = Shape::Gauss { width: 1.0, center: [0.3, 0.0] };
    match k {
        0 => Family::Minkowski,
        1 => Family::PerturbedLapse { eps, shape: gauss },
        2 => Family::ConformallyFlat { eps, shape: gauss },
        3 => Family::PerturbedLapse { eps, shape: Shape::Sine },
        _ => Family::ConformallyFlat { eps, shape: Shape::Ripple },
    }
}

fn spec(k: usize, eps: f64) -> MetricSpec {
    MetricSpec::new(family(k, eps), dom(), DerivMode::Analytic).unwrap()
}

const BASE: &str = r#"
vertex = [1.0, 0.1, 0.0]
t0 = 0.0

[metric]
deriv_mode = { mode = "analytic" }
family = { family = "minkowski" }
domain = { t = [-1.0, 2.0], x = [-3.0, 3.0], y = [-3.0, 3.0] }
"#;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hyperboloid_directions_are_unit(psi in 0.0..1.4f64, theta in -4.0..4.0f64, chi in 0.0..3.0f64) {
        prop_assert!((HyperboloidDir::from_polar(psi, theta).hyperbolic_norm() - 1.0).abs() < 1e-9);
        prop_assert!((HyperboloidDir::from_rapidity(chi, theta).hyperbolic_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frame_relations_hold(k in 0usize..5, eps in 0.0..0.08f64, psi in 0.0..1.1f64, theta in -3.1..3.1f64, frac in 0.1..1.0f64) {
        let s = spec(k, eps);
        let p = [1.0, 0.1, 0.0];
        let vf = VertexFrame::new(&s, &p).unwrap();
        let w = HyperboloidDir::from_polar(psi, theta).velocity();
        let st = trace_ray(&s, &vf, w, &[frac], &RayOptions::default()).unwrap()[0];
        let c = cone_sample(&s, &vf, &st, &Caps::default()).unwrap();
        prop_assert!(frame_residuals(&c.frame, &c.g) < 1e-9);
        prop_assert!(c.frame.rho > 0.0 && c.frame.b_inv > 0.0);
    }

    #[test]
    fn analytic_curvature_matches_differences(k in 1usize..5, t in -0.5..1.5f64, x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let s = spec(k, 0.05);
        let q = [t, x, y];
        let a = riemann(&s, &q).unwrap().riem;
        let f = riemann_fd(&s, &q, 1e-4).unwrap().riem;
        let flat = |r: &[[[[f64; 3]; 3]; 3]; 3]| r.iter().flatten().flatten().flatten().copied().collect::<Vec<_>>();
        for (u, v) in flat(&a).iter().zip(flat(&f)) {
            prop_assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn shooting_inverts_the_exponential_map(k in 0usize..3, wx in -0.5..0.5f64, wy in -0.5..0.5f64, t in 0.0..0.8f64) {
        let s = spec(k, 0.05);
        let p = [1.0, 0.1, 0.0];
        let d = HyperboloidDir::from_velocity([wx, wy]).unwrap();
        let (q, rho) = exp_map(&s, &p, t, &d).unwrap();
        let (back, rho2) = shoot_to_target(&s, &p, &q).unwrap();
        let (v0, v1) = (d.velocity(), back.velocity());
        prop_assert!((v0[0] - v1[0]).abs() < 1e-7 && (v0[1] - v1[1]).abs() < 1e-7);
        prop_assert!((rho - rho2).abs() < 1e-7);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials(n in 2usize..20, a in -2.0..0.0f64, b in 0.5..3.0f64) {
        let rule = gauss_legendre(n, a, b).unwrap();
        let deg = 2 * n - 1;
        let q: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
        let exact = (b.powi(deg as i32 + 1) - a.powi(deg as i32 + 1)) / (deg as f64 + 1.0);
        prop_assert!((q - exact).abs() <= 1e-10 * exact.abs().max(1.0));
    }

    #[test]
    fn config_roundtrips(tol in 1e-9..1.0f64, n in 2usize..12, res in 4usize..200, seed in 0..=i64::MAX as u64, k in 0usize..5) {
        let mut c = RunConfig::from_toml(BASE).unwrap();
        c.metric = spec(k, 0.05);
        c.tolerances.tol_id = tol;
        c.resolution.identities = res;
        c.resolution.quadrature.n_tau = n;
        c.seed = seed;
        c.validate().unwrap();
        prop_assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
