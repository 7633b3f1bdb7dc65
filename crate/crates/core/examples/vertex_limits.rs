//! Richardson limits at the vertex: rho tr k -> 2, b -> 1/n(p) and the
//! normalized lifted area -> 1.
use descent::geodesic::HyperboloidDir;
use descent::identities::verify_vertex_asymptotics;
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MetricSpec::new(
        Family::PerturbedLapse { eps: 0.05, shape: Shape::Constant },
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] },
        DerivMode::Analytic,
    )?;
    let p = [1.0, 0.2, 0.0];
    let dir = HyperboloidDir::from_velocity([0.3, 0.1])?;
    let taus: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let r = verify_vertex_asymptotics(&spec, &p, &dir, &taus)?;
    println!("rho tr k -> {:.8} (order {:.2})", r.rho_tr_k.limit, r.rho_tr_k.order);
    println!("b        -> {:.8} expected {:.8}", r.b.limit, r.expected_b);
    println!("area     -> {:.6}", r.area_ratio.limit);
    Ok(())
}
