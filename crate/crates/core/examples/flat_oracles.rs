//! Gaussian data on flat space: the representation formula, the Poisson
//! formula and a leapfrog run agree. Pass a grid spacing divisor to refine
//! the leapfrog grid (default 128).
use descent::fdtd::{run_fdtd, FdtdOptions, WaveProblem};
use descent::field::Field;
use descent::metric::{Domain, MetricSpec};
use descent::quadrature::QuadratureOptions;
use descent::representation::{evaluate_representation, poisson_for_field, PoissonOptions, RepresentationOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(128.0);
    let spec = MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] });
    let field = Field::CauchyGauss { amplitude: 1.0, width: 0.5, center: [0.0, 0.0], t0: 0.0 };
    let p = [1.0, 0.0, 0.0];
    let opts = RepresentationOptions {
        quadrature: QuadratureOptions { n_tau: 4, n_psi: 40, n_theta: 16, h_max: 1.0 / 64.0 },
        ..Default::default()
    };
    let rep = evaluate_representation(&spec, &p, 0.0, &field, 1.0, &opts)?.phi_p_reconstructed;
    let poi = poisson_for_field(&spec, &field, &p, 0.0, &PoissonOptions::default())?;

    let phi0 = |x: [f64; 2]| field.cauchy_data(0.0, x).unwrap()[0];
    let zero = |_: [f64; 2]| 0.0;
    let src = |_: &[f64; 3]| 0.0;
    let fo = FdtdOptions { dx: 1.0 / n, half_width: [2.5, 2.5], ..Default::default() };
    let t = std::time::Instant::now();
    let run = run_fdtd(&spec, &WaveProblem { phi0: &phi0, phi1: &zero, source: &src, t0: 0.0 }, 1.0, &fo)?;
    let fd = run.probe(&p)?;
    println!("representation {rep:.12}\npoisson        {poi:.12}\nleapfrog       {fd:.12} (dx = 1/{n}, {:.1}s)", t.elapsed().as_secs_f64());
    println!("rel gaps: rep-poisson {:.1e}, rep-leapfrog {:.1e}", ((rep - poi) / poi).abs(), ((rep - fd) / fd).abs());
    Ok(())
}
