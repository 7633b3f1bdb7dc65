//! The representation formula on a perturbed lapse with a manufactured
//! field: the four pieces, both readings of the formula and the error
//! under quadrature refinement.
use descent::field::Field;
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};
use descent::quadrature::QuadratureOptions;
use descent::representation::{evaluate_representation, RepresentationOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MetricSpec::new(
        Family::PerturbedLapse { eps: 0.05, shape: Shape::Gauss { width: 1.0, center: [0.3, 0.0] } },
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] },
        DerivMode::Analytic,
    )?;
    let p = [1.0, 0.1, 0.0];
    println!("{:>3} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10}", "n", "source", "I1", "I2", "I3", "rel_err", "literal");
    for n in [4, 6, 8, 12] {
        let opts = RepresentationOptions {
            quadrature: QuadratureOptions { n_tau: n, n_psi: n, n_theta: 3 * n / 2, h_max: 1.0 / 256.0 },
            ..Default::default()
        };
        let r = evaluate_representation(&spec, &p, 0.0, &Field::Manufactured, 1.0, &opts)?;
        let truth = r.phi_p_true.unwrap();
        println!(
            "{n:3} {:12.8} {:12.8} {:12.4e} {:12.4e} {:10.2e} {:10.2e}",
            r.source_term, r.i1, r.i2, r.i3, r.rel_err.unwrap(), ((r.phi_p_literal - truth) / truth).abs()
        );
    }
    Ok(())
}
