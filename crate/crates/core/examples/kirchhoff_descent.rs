//! The lifted (3+1) Kirchhoff formula against twice the (2+1) assembly on
//! the same cone grid.
use descent::field::Field;
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};
use descent::quadrature::{build_cone_grid, QuadratureOptions};
use descent::representation::{evaluate_on_grid, kirchhoff_on_grid, RepresentationOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dom = Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] };
    let p = [1.0, 0.1, 0.0];
    let opts = RepresentationOptions {
        quadrature: QuadratureOptions { n_tau: 8, n_psi: 8, n_theta: 12, h_max: 1.0 / 256.0 },
        ..Default::default()
    };
    for (spec, field) in [
        (MetricSpec::minkowski(dom), Field::StaticGauss { amplitude: 1.0, width: 0.7, center: [0.2, -0.1] }),
        (
            MetricSpec::new(Family::PerturbedLapse { eps: 0.05, shape: Shape::Linear }, dom, DerivMode::Analytic)?,
            Field::Manufactured,
        ),
    ] {
        let grid = build_cone_grid(&spec, &p, 0.0, &opts.quadrature)?;
        let r = evaluate_on_grid(&spec, &grid, &field, 1.0, &opts)?;
        let k = kirchhoff_on_grid(&spec, &grid, &field, 1.0, &opts)?;
        let gap = (k.total - 2.0 * r.right_side()).abs() / k.total.abs();
        println!("{:?}", spec.family);
        println!("  boundary {:.8} bulk {:.8} er {:.3e} {:.3e}", k.boundary, k.bulk, k.er[0], k.er[1]);
        println!("  lifted {:.10} vs 2 x planar {:.10}: gap {gap:.1e}", k.total, 2.0 * r.right_side());
        println!("  phi(p): lifted {:.10} planar {:.10}", k.phi_p_reconstructed, r.phi_p_reconstructed);
    }
    Ok(())
}
