//! Acceptance criteria 1-10. Each test prints one PASS/FAIL line to stderr
//! (bypassing output capture) and then asserts.

use std::io::Write;
use std::time::Instant;

use descent::fdtd::{run_fdtd, FdtdOptions, WaveProblem};
use descent::field::Field;
use descent::frames::cone_sample;
use descent::geodesic::{trace_ray, HyperboloidDir, RayOptions, VertexFrame};
use descent::identities::{converges, random_ray_points, verify_identities_rays, verify_vertex_asymptotics, IdentityOptions};
use descent::injectivity::{estimate_injectivity, InjectivityOptions};
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Point, Shape};
use descent::quadrature::{build_cone_grid, QuadratureOptions};
use descent::representation::{
    evaluate_on_grid, evaluate_representation, kirchhoff_on_grid, poisson_for_field, PoissonOptions,
    RepresentationOptions, Variant,
};
use descent::transport::{solve_transport, TransportOptions};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {n:2} {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn dom() -> Domain {
    Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
}

fn flat() -> MetricSpec {
    MetricSpec::minkowski(dom())
}

fn lapse(eps: f64) -> MetricSpec {
    MetricSpec::new(
        Family::PerturbedLapse { eps, shape: Shape::Gauss { width: 1.0, center: [0.3, 0.0] } },
        dom(),
        DerivMode::Analytic,
    )
    .unwrap()
}

const P: Point = [1.0, 0.1, 0.0];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn quad(n: usize) -> RepresentationOptions {
    RepresentationOptions {
        quadrature: QuadratureOptions { n_tau: n, n_psi: n, n_theta: 3 * n / 2, h_max: 1.0 / 256.0 },
        ..Default::default()
    }
}

#[test]
fn c01_flat_poisson_reproduction() {
    let start = Instant::now();
    let s = flat();
    let p = [1.0, 0.0, 0.0];
    let f = Field::CauchyGauss { amplitude: 1.0, width: 0.5, center: [0.0, 0.0], t0: 0.0 };
    let o = RepresentationOptions {
        quadrature: QuadratureOptions { n_tau: 4, n_psi: 40, n_theta: 16, h_max: 1.0 / 64.0 },
        ..Default::default()
    };
    let rep = evaluate_representation(&s, &p, 0.0, &f, 1.0, &o).unwrap().phi_p_reconstructed;
    let poi = poisson_for_field(&s, &f, &p, 0.0, &PoissonOptions::default()).unwrap();
    let phi0 = |x: [f64; 2]| f.cauchy_data(0.0, x).unwrap()[0];
    let zero = |_: [f64; 2]| 0.0;
    let src = |_: &Point| 0.0;
    let fo = FdtdOptions { dx: 1.0 / 256.0, half_width: [2.5, 2.5], ..Default::default() };
    let run = run_fdtd(&s, &WaveProblem { phi0: &phi0, phi1: &zero, source: &src, t0: 0.0 }, 1.0, &fo).unwrap();
    let fd = run.probe(&p).unwrap();
    let gaps = [rel(rep, poi), rel(rep, fd), rel(poi, fd)];
    let secs = start.elapsed().as_secs_f64();
    let pass = gaps.iter().all(|g| *g <= 1e-3) && secs <= 120.0;
    report(
        1,
        "flat Poisson reproduction",
        pass,
        format!("rep {rep:.10} poisson {poi:.10} fdtd {fd:.10}; gaps {:.1e} {:.1e} {:.1e}; {secs:.1}s", gaps[0], gaps[1], gaps[2]),
    );
    assert!(pass);
}

#[test]
fn c02_flat_constants_and_linears() {
    let s = flat();
    let o = quad(8);
    let one = evaluate_representation(&s, &P, 0.0, &Field::Constant { value: 1.0 }, 1.0, &o).unwrap();
    let t = evaluate_representation(&s, &P, 0.0, &Field::Affine { coef: [1.0, 0.0, 0.0], offset: 0.0 }, 1.0, &o).unwrap();
    let e1 = (one.phi_p_reconstructed - 1.0).abs();
    let et = (t.phi_p_reconstructed - P[0]).abs();
    let pass = e1 <= 1e-6 && et <= 1e-6;
    report(2, "flat constants and linears", pass, format!("|phi - 1| {e1:.1e}, |phi - t_p| {et:.1e}"));
    assert!(pass);
}

#[test]
fn c03_flat_quantity_table() {
    let s = flat();
    let p = [1.0, 0.0, 0.0];
    let vf = VertexFrame::new(&s, &p).unwrap();
    let caps = IdentityOptions::new(1.0, 32).caps;
    let pts = random_ray_points(&s, &p, 1.0, 100, 3, &caps).unwrap();
    let mut worst = [0.0f64; 8];
    for pt in &pts {
        let st = trace_ray(&s, &vf, pt.w, &[pt.tau], &RayOptions::default()).unwrap()[0];
        let c = cone_sample(&s, &vf, &st, &caps).unwrap();
        let (f, k) = (c.frame, c.coeffs);
        let r = (f.point[1] - p[1]).hypot(f.point[2] - p[2]);
        let riem = c.curvature.riem.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let pi = k.tr_pi.abs().max(k.pi_nn.abs()).max(k.pi_na.abs());
        let vals = [
            (1.0 / f.b_inv - 1.0).abs(),
            (f.r_tilde - r).abs(),
            k.omega.abs(),
            k.zetabar.abs(),
            pi,
            (k.tr_k - 2.0 / f.rho).abs(),
            k.k_hat_sq.sqrt(),
            riem,
        ];
        for (w, v) in worst.iter_mut().zip(vals) {
            *w = w.max(v);
        }
    }
    let pass = worst.iter().all(|w| *w <= 1e-8);
    let names = ["b-1", "r~-r", "omega", "zetabar", "pi", "tr k-2/rho", "|k^|", "R"];
    let detail: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    report(3, "flat quantity table", pass, format!("100 points; {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn c04_identity_suite() {
    let start = Instant::now();
    let s = lapse(0.05);
    let o = IdentityOptions::new(1.0, 32);
    let pts = random_ray_points(&s, &P, 1.0, 200, 7, &o.caps).unwrap();
    let coarse = verify_identities_rays(&s, &P, &pts, &o).unwrap();
    let fine = verify_identities_rays(&s, &P, &pts, &IdentityOptions::new(1.0, 64)).unwrap();
    let (mc, mf) = (coarse.max_residuals(), fine.max_residuals());
    let worst = coarse.worst();
    let slow: Vec<&String> = mc.keys().filter(|k| !converges(&[mc[*k], mf[*k]], 1.8)).collect();
    let min_ratio = mc
        .keys()
        .filter(|k| mc[*k] >= descent::identities::ROUNDOFF_FLOOR)
        .map(|k| mc[k] / mf[k])
        .fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    let pass = mc.len() == 16 && coarse.failures.is_empty() && worst <= 5e-4 && slow.is_empty() && secs <= 300.0;
    report(
        4,
        "identity suite",
        pass,
        format!("{} identities, worst {worst:.2e}, smallest ratio above roundoff {min_ratio:.1}, slow {slow:?}; {secs:.1}s", mc.len()),
    );
    assert!(pass);
}

#[test]
fn c05_vertex_asymptotics() {
    let s = lapse(0.05);
    let taus: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let mut worst = [0.0f64; 2];
    let mut nb = 0.0;
    for w in [[0.0, 0.0], [0.3, 0.1], [-0.5, 0.4]] {
        let r = verify_vertex_asymptotics(&s, &P, &HyperboloidDir::from_velocity(w).unwrap(), &taus).unwrap();
        worst[0] = worst[0].max((r.rho_tr_k.limit - 2.0).abs());
        worst[1] = worst[1].max((r.b.limit - r.expected_b).abs());
        nb = r.expected_b;
    }
    let pass = worst[0] <= 1e-3 && worst[1] <= 1e-3;
    report(5, "vertex asymptotics", pass, format!("|rho tr k - 2| {:.1e}, |b - 1/n(p)| {:.1e} (1/n(p) = {nb:.6})", worst[0], worst[1]));
    assert!(pass);
}

#[test]
fn c06_flat_transport() {
    let s = flat();
    let p = [1.0, 0.0, 0.0];
    let mut worst = 0.0f64;
    for w in [[0.0, 0.0], [0.5, 0.0], [-0.3, 0.6], [0.0, -0.9]] {
        let dir = HyperboloidDir::from_velocity(w).unwrap();
        let sol = solve_transport(&s, &p, &dir, &[1.0], 0.0, &TransportOptions { samples: 100, ..Default::default() }).unwrap();
        for (tau, a) in sol.scalar() {
            if tau >= 0.05 - 1e-12 {
                worst = worst.max((a - 1.0 / tau).abs());
            }
        }
    }
    let pass = worst <= 1e-8;
    report(6, "flat transport closed form", pass, format!("max |A - 1/tau| {worst:.1e} over tau in [0.05, 1]"));
    assert!(pass);
}

#[test]
fn c07_descent_consistency() {
    let o = quad(8);
    let gap = |s: &MetricSpec, f: &Field| {
        let g = build_cone_grid(s, &P, 0.0, &o.quadrature).unwrap();
        let r = evaluate_on_grid(s, &g, f, 1.0, &o).unwrap();
        let k = kirchhoff_on_grid(s, &g, f, 1.0, &o).unwrap();
        rel(k.total, 2.0 * r.right_side())
    };
    let gf = gap(&flat(), &Field::StaticGauss { amplitude: 1.0, width: 0.7, center: [0.2, -0.1] });
    let gc = gap(&lapse(0.05), &Field::Manufactured);
    let pass = gf <= 1e-6 && gc <= 1e-2;
    report(7, "descent consistency", pass, format!("flat gap {gf:.1e}, perturbed lapse gap {gc:.1e}"));
    assert!(pass);
}

#[test]
fn c08_curved_identity_verification() {
    let start = Instant::now();
    let s = lapse(0.05);
    let prod = RepresentationOptions::default();
    let r = evaluate_representation(&s, &P, 0.0, &Field::Manufactured, 1.0, &prod).unwrap();
    let truth = r.phi_p_true.unwrap();
    let err = r.rel_err.unwrap();
    let lit = rel(r.phi_p_literal, truth);
    let ns = [4usize, 6, 8];
    let errs: Vec<f64> =
        ns.iter().map(|&n| evaluate_representation(&s, &P, 0.0, &Field::Manufactured, 1.0, &quad(n)).unwrap().rel_err.unwrap()).collect();
    let orders: Vec<f64> =
        (0..2).map(|i| (errs[i] / errs[i + 1]).ln() / (ns[i + 1] as f64 / ns[i] as f64).ln()).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = r.variant == Variant::Corrected && err <= 5e-3 && orders.iter().all(|q| *q >= 1.0) && secs <= 600.0;
    report(
        8,
        "curved identity verification",
        pass,
        format!(
            "rel_err {err:.1e} at production resolution (literal reading {lit:.1e}); n = 4, 6, 8 errors {:.1e} {:.1e} {:.1e}, orders {:.1} {:.1}; {secs:.1}s",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    );
    assert!(pass);
}

#[test]
fn c09_injectivity_inequality() {
    let s = MetricSpec::new(
        Family::ConformallyFlat { eps: 0.3, shape: Shape::Gauss { width: 0.5, center: [0.0, 0.0] } },
        Domain { t: [-6.0, 6.0], x: [-8.0, 8.0], y: [-8.0, 8.0] },
        DerivMode::Analytic,
    )
    .unwrap();
    let r = estimate_injectivity(&s, &[4.0, 1.5, 0.0], -5.0, &InjectivityOptions::default()).unwrap();
    let pass = r.c_star.value <= r.i_tilde_star.value + r.cell;
    report(
        9,
        "injectivity inequality",
        pass,
        format!("c* {:.4} ({:?}) <= i~* {:.4} ({:?}) + cell {:.4}", r.c_star.value, r.c_star.flag, r.i_tilde_star.value, r.i_tilde_star.flag, r.cell),
    );
    assert!(pass);
}

#[test]
fn c10_epsilon_scaling() {
    let o = quad(8);
    let run = |eps: f64| evaluate_representation(&lapse(eps), &P, 0.0, &Field::Manufactured, 1.0, &o).unwrap();
    let (a, b) = (run(0.05), run(0.025));
    let (r2, r3) = (a.i2.abs() / b.i2.abs(), a.i3.abs() / b.i3.abs());
    let ok = |r: f64| (1.5..=2.5).contains(&r);
    let pass = ok(r2) && ok(r3);
    report(
        10,
        "epsilon scaling",
        pass,
        format!("|I2| {:.3e} -> {:.3e} (ratio {r2:.3}), |I3| {:.3e} -> {:.3e} (ratio {r3:.3})", a.i2.abs(), b.i2.abs(), a.i3.abs(), b.i3.abs()),
    );
    assert!(pass);
}
