//! Rays from a vertex: the exponential map and its inverse by shooting.
use descent::geodesic::{exp_map, shoot_to_target, HyperboloidDir};
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MetricSpec::new(
        Family::ConformallyFlat { eps: 0.1, shape: Shape::Gauss { width: 1.0, center: [0.3, 0.0] } },
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] },
        DerivMode::Analytic,
    )?;
    let p = [1.0, 0.0, 0.0];
    for (psi, theta) in [(0.0, 0.0), (0.4, 0.0), (0.8, 1.0), (1.2, 2.5)] {
        let dir = HyperboloidDir::from_polar(psi, theta);
        let (q, rho) = exp_map(&spec, &p, 0.0, &dir)?;
        let (back, rho2) = shoot_to_target(&spec, &p, &q)?;
        let w = (dir.velocity(), back.velocity());
        let err = (w.0[0] - w.1[0]).hypot(w.0[1] - w.1[1]);
        println!("psi {psi:.1} theta {theta:.1}: q = ({:.4}, {:.4}) rho {rho:.6} shot back |dw| {err:.1e} |drho| {:.1e}",
            q[1], q[2], (rho - rho2).abs());
    }
    Ok(())
}
