//! Lorentzian distance on a grid: build, cache, reload and check the eikonal
//! equation with the per-node gradients.
use descent::metric::{DerivMode, Domain, Family, MetricSpec, Shape};
use descent::rho_field::{load_or_build, RhoField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MetricSpec::new(
        Family::PerturbedLapse { eps: 0.05, shape: Shape::Sine },
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] },
        DerivMode::Analytic,
    )?;
    let p = [1.0, 0.0, 0.0];
    let dir = std::env::temp_dir().join("descent-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("rho.bin");
    let _ = std::fs::remove_file(&path);
    let t = std::time::Instant::now();
    let f = load_or_build(&spec, &p, 0.0, [9, 33, 33], &path)?;
    println!("built {:?} grid, {} valid nodes in {:.2}s", f.shape, f.valid_count(), t.elapsed().as_secs_f64());
    let t = std::time::Instant::now();
    let g = load_or_build(&spec, &p, 0.0, [9, 33, 33], &path)?;
    let same = f.rho.iter().zip(&g.rho).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("reloaded in {:.3}s, bit-identical: {same}", t.elapsed().as_secs_f64());
    println!("eikonal residual with shooting gradients: {:.2e}", f.eikonal_residual_exact(&spec));
    let q = [0.5, 0.1, 0.2];
    println!("rho{q:?} = {:?}", f.interpolate(&q));
    let r = RhoField::read_cache(&path)?;
    println!("cached metric hash {:016x}", r.metric_hash);
    Ok(())
}
