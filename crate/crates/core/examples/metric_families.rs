//! Metric families, their jets and curvature, analytic against differenced.
use descent::metric::{riemann, Curvature, DerivMode, Domain, Family, MetricSpec, Shape};

fn max_riem(c: &Curvature<3>) -> f64 {
    c.riem.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dom = Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] };
    let q = [0.3, 0.4, -0.2];
    let families = [
        ("minkowski", Family::Minkowski),
        ("lapse linear", Family::PerturbedLapse { eps: 0.05, shape: Shape::Linear }),
        ("lapse gauss", Family::PerturbedLapse { eps: 0.05, shape: Shape::Gauss { width: 1.0, center: [0.0, 0.0] } }),
        ("conformal ripple", Family::ConformallyFlat { eps: 0.1, shape: Shape::Ripple }),
    ];
    println!("{:18} {:>8} {:>12} {:>12}", "family", "lapse", "max |Riem|", "fd gap");
    for (name, fam) in families {
        let a = MetricSpec::new(fam, dom, DerivMode::Analytic)?;
        let f = MetricSpec::new(fam, dom, DerivMode::FiniteDifference { h: 1e-4 })?;
        let (ra, rf) = (riemann(&a, &q)?, riemann(&f, &q)?);
        let gap = ra.riem.iter().flatten().flatten().flatten()
            .zip(rf.riem.iter().flatten().flatten().flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        println!("{name:18} {:8.4} {:12.4e} {:12.2e}", a.lapse(&q), max_riem(&ra), gap);
    }
    Ok(())
}
