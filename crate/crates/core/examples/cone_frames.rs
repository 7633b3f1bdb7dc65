//! Frames and connection coefficients on the past cone, then the identity
//! suite at random cone points.
use descent::frames::{cone_sample, frame_residuals, Caps};
use descent::geodesic::{trace_ray, RayOptions, VertexFrame};
use descent::identities::{random_ray_points, verify_identities_rays, IdentityOptions};
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dom = Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] };
    let p = [1.0, 0.0, 0.0];
    for spec in [
        MetricSpec::minkowski(dom),
        MetricSpec::new(Family::PerturbedLapse { eps: 0.05, shape: Shape::Linear }, dom, DerivMode::Analytic)?,
    ] {
        println!("{:?}", spec.family);
        let vf = VertexFrame::new(&spec, &p)?;
        let st = trace_ray(&spec, &vf, [0.3, 0.2], &[0.6], &RayOptions::default())?[0];
        let c = cone_sample(&spec, &vf, &st, &Caps::default())?;
        let (f, k) = (c.frame, c.coeffs);
        println!("  q = {:.4?} rho {:.5} b {:.6} r~ {:.5}", f.point, f.rho, 1.0 / f.b_inv, f.r_tilde);
        println!("  rho tr k {:.6} |k^|^2 {:.2e} tr pi {:.2e} frame residual {:.1e}",
            f.rho * k.tr_k, k.k_hat_sq, k.tr_pi, frame_residuals(&f, &c.g));
        println!("  tr chi {:.5} tr chibar {:.5}", k.tr_chi, k.tr_chibar);

        let opts = IdentityOptions::new(1.0, 32);
        let pts = random_ray_points(&spec, &p, 1.0, 20, 1, &opts.caps)?;
        let rep = verify_identities_rays(&spec, &p, &pts, &opts)?;
        let (id, v) = rep.max_residuals().into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        println!("  {} identity records, {} failures, worst {id} = {v:.2e}", rep.records.len(), rep.failures.len());
    }
    Ok(())
}
