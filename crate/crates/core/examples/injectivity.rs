//! Injectivity radii of the past cone of a vertex above a focusing bump.
use descent::injectivity::{estimate_injectivity, InjectivityOptions};
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dom = Domain { t: [-6.0, 6.0], x: [-8.0, 8.0], y: [-8.0, 8.0] };
    let p = [4.0, 1.5, 0.0];
    for eps in [0.0, 0.3] {
        let fam = Family::ConformallyFlat { eps, shape: Shape::Gauss { width: 0.5, center: [0.0, 0.0] } };
        let spec = MetricSpec::new(fam, dom, DerivMode::Analytic)?;
        let r = estimate_injectivity(&spec, &p, -5.0, &InjectivityOptions::default())?;
        println!("eps = {eps}");
        for (name, v) in [
            ("delta*", r.delta_star),
            ("i*", r.i_star),
            ("s~*", r.s_tilde_star),
            ("l~*", r.l_tilde_star),
            ("i~*", r.i_tilde_star),
            ("c*", r.c_star),
        ] {
            println!("  {name:7} {:8.4} {:?}", v.value, v.flag);
        }
        println!("  c* <= i~* + cell ({:.4}): {}", r.cell, r.c_star.value <= r.i_tilde_star.value + r.cell);
    }
    Ok(())
}
