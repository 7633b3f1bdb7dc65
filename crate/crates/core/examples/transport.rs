//! The transport kernel along a ray: flat A = J / tau, and the ODE residual
//! on a curved background for both start modes.
use descent::geodesic::HyperboloidDir;
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};
use descent::transport::{ode_residual, solve_transport, InitMode, TransportOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dom = Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] };
    let p = [1.0, 0.0, 0.0];
    let dir = HyperboloidDir::from_velocity([0.4, -0.2])?;
    let opts = TransportOptions::default();

    let flat = solve_transport(&MetricSpec::minkowski(dom), &p, &dir, &[1.0], 0.0, &opts)?;
    let err = flat.scalar().iter().fold(0.0f64, |m, (t, a)| m.max((a - 1.0 / t).abs()));
    println!("flat: max |A - 1/tau| = {err:.2e}");

    let spec = MetricSpec::new(Family::PerturbedLapse { eps: 0.05, shape: Shape::Sine }, dom, DerivMode::Analytic)?;
    let reg = solve_transport(&spec, &p, &dir, &[1.0, -2.0], 0.0, &opts)?;
    let asy = solve_transport(&spec, &p, &dir, &[1.0], 0.0, &TransportOptions { init: InitMode::Asymptotic { tau_init: 1e-3 }, ..opts })?;
    let last = reg.samples.last().unwrap();
    println!("curved: tau A at tau = {:.2}: {:.8} (J = 1), {:.8} (J = -2)", last.tau, last.tau * last.a[0], last.tau * last.a[1]);
    println!("start modes differ by {:.1e}", (reg.samples.last().unwrap().a[0] - asy.samples.last().unwrap().a[0]).abs());
    println!("ODE residual {:.2e}", ode_residual(&spec, &reg, 1.0 / 512.0)?);
    Ok(())
}
