//! Past null geodesics of the lifted spacetime `g + dz^2` from `(p, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::geodesic::VertexFrame;
use crate::metric::{christoffel, dot, MetricSpec, Point};

/// Which piece of the lifted cone a generator lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `z = 0`: the (2+1) null cone.
    #[serde(rename = "N-")]
    NullCone,
    /// `z = +rho`.
    #[serde(rename = "H+")]
    Upper,
    /// `z = -rho`.
    #[serde(rename = "H-")]
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedSample {
    pub tau: f64,
    /// `(t, x, y, z)`.
    pub x: [f64; 4],
    /// `d/dtau` of `x`; time component `-1`.
    pub v: [f64; 4],
    /// Lorentzian distance of the projected point along the projected ray.
    pub rho: f64,
    /// `a` with affine tangent `L~' = a^-1 L~`; equals `s' / n`.
    pub a_frak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullGeodesicRecord {
    /// Unit vector on the sphere: components on `e_1, e_2, d_z`.
    pub omega: [f64; 3],
    pub branch: Branch,
    pub samples: Vec<LiftedSample>,
    /// `max | |z| - rho |` over the samples.
    pub level_residual: f64,
    /// `max |g(v, v)|` of the projected tangent on `z = 0` generators, whose
    /// `rho` is kept at 0; zero on the sheets.
    pub null_drift: f64,
    pub exited: bool,
}

/// Points of the sphere on a latitude-longitude grid, poles excluded.
/// Latitude index is outer.
pub fn sphere_grid(n_lat: usize, n_lon: usize) -> Vec<[f64; 3]> {
    let mut v = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let b = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (i as f64 + 0.5) / n_lat as f64;
        for j in 0..n_lon {
            let th = std::f64::consts::TAU * j as f64 / n_lon as f64;
            v.push([b.cos() * th.cos(), b.cos() * th.sin(), b.sin()]);
        }
    }
    v
}

const NS: usize = 7;

struct Rhs<'a> {
    spec: &'a MetricSpec,
    tp: f64,
}

impl Rhs<'_> {
    // y = [x1, x2, u1, u2, z, log s', rho]
    fn eval(&self, tau: f64, y: &[f64; NS]) -> Result<[f64; NS]> {
        let q = [self.tp - tau, y[0], y[1]];
        if !self.spec.domain.contains(&q, 0.0) || y.iter().any(|v| !v.is_finite()) {
            return Err(DescentError::DomainExit { t: q[0] });
        }
        let jet = self.spec.jet(&q, 1)?;
        let gamma = christoffel(&jet)?.gamma;
        let xd = [-1.0, y[2], y[3]];
        let gxx: [f64; 3] = std::array::from_fn(|c| {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += gamma[c][a][b] * xd[a] * xd[b];
                }
            }
            s
        });
        let nn = -dot(&jet.g, &xd, &xd);
        Ok([
            y[2],
            y[3],
            -gxx[1] - gxx[0] * y[2],
            -gxx[2] - gxx[0] * y[3],
            0.0, // filled by caller: z' = omega3 s'
            -gxx[0],
            nn.max(0.0).sqrt(),
        ])
    }
}

fn step(rhs: &Rhs, om3: f64, tau: f64, y: &[f64; NS], h: f64) -> Result<[f64; NS]> {
    let f = |t: f64, y: &[f64; NS]| -> Result<[f64; NS]> {
        let mut d = rhs.eval(t, y)?;
        d[4] = om3 * y[5].exp();
        // the z = 0 generators project to null rays; integrating the root of
        // their drifting null condition would add sqrt of the truncation error
        if om3 == 0.0 {
            d[6] = 0.0;
        }
        Ok(d)
    };
    let k1 = f(tau, y)?;
    let add = |a: &[f64; NS], k: &[f64; NS], s: f64| -> [f64; NS] { std::array::from_fn(|i| a[i] + s * k[i]) };
    let k2 = f(tau + 0.5 * h, &add(y, &k1, 0.5 * h))?;
    let k3 = f(tau + 0.5 * h, &add(y, &k2, 0.5 * h))?;
    let k4 = f(tau + h, &add(y, &k3, h))?;
    Ok(std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
}

/// Traces one lifted null generator, keeping samples reached before a
/// domain exit.
pub fn lift_null_ray(
    spec: &MetricSpec,
    vf: &VertexFrame,
    omega: [f64; 3],
    taus: &[f64],
    h_max: f64,
) -> (NullGeodesicRecord, Option<DescentError>) {
    let nrm = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    let om = omega.map(|v| v / nrm);
    let branch = if om[2].abs() < 1e-14 {
        Branch::NullCone
    } else if om[2] > 0.0 {
        Branch::Upper
    } else {
        Branch::Lower
    };
    let om3 = if branch == Branch::NullCone { 0.0 } else { om[2] };
    let u0 = vf.initial_velocity([om[0], om[1]]);
    let mut y = [vf.p[1], vf.p[2], u0[0], u0[1], 0.0, vf.lapse.ln(), 0.0];
    let rhs = Rhs { spec, tp: vf.p[0] };
    let mut rec = NullGeodesicRecord { omega: om, branch, samples: Vec::new(), level_residual: 0.0, null_drift: 0.0, exited: false };
    let mut tau = 0.0;
    for &target in taus {
        let gap = target - tau;
        if gap > 0.0 {
            let m = (gap / h_max).ceil().max(1.0) as usize;
            let h = gap / m as f64;
            for k in 0..m {
                match step(&rhs, om3, tau + k as f64 * h, &y, h) {
                    Ok(v) => y = v,
                    Err(e) => {
                        rec.exited = true;
                        return (rec, Some(e));
                    }
                }
            }
        }
        tau = target;
        let q = [vf.p[0] - tau, y[0], y[1]];
        let sp = y[5].exp();
        let n = spec.lapse(&q);
        rec.samples.push(LiftedSample {
            tau,
            x: [q[0], y[0], y[1], y[4]],
            v: [-1.0, y[2], y[3], om[2] * sp],
            rho: y[6],
            a_frak: sp / n,
        });
        rec.level_residual = rec.level_residual.max((y[4].abs() - y[6]).abs());
        if branch == Branch::NullCone {
            let g = spec.jet_fast(&q).g;
            rec.null_drift = rec.null_drift.max(dot(&g, &[-1.0, y[2], y[3]], &[-1.0, y[2], y[3]]).abs());
        }
    }
    (rec, None)
}

/// Lifted null generators for each `omega`, sampled at `taus` (ascending).
pub fn lift_null_cone(
    spec: &MetricSpec,
    p: &Point,
    omegas: &[[f64; 3]],
    taus: &[f64],
    h_max: f64,
) -> Result<Vec<NullGeodesicRecord>> {
    let vf = VertexFrame::new(spec, p)?;
    omegas
        .iter()
        .map(|om| match lift_null_ray(spec, &vf, *om, taus, h_max) {
            (r, None) => Ok(r),
            (_, Some(e)) => Err(e),
        })
        .collect()
}

/// Branch implied by the samples: the sign pattern of `z` relative to
/// `rho`, within `tol`. A sheet needs some `|z| > tol`. `None` when the
/// samples fit no single branch.
pub fn classify_samples(rec: &NullGeodesicRecord, tol: f64) -> Option<Branch> {
    let lifted = rec.samples.iter().any(|s| s.x[3].abs() > tol);
    let fits = |b: Branch| {
        rec.samples.iter().all(|s| {
            let z = s.x[3];
            match b {
                Branch::NullCone => z.abs() <= tol && s.rho <= tol,
                Branch::Upper => lifted && (z - s.rho).abs() <= tol,
                Branch::Lower => lifted && (z + s.rho).abs() <= tol,
            }
        })
    };
    let c: Vec<Branch> = [Branch::NullCone, Branch::Upper, Branch::Lower].into_iter().filter(|b| fits(*b)).collect();
    (c.len() == 1).then(|| c[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Domain;

    #[test]
    fn flat_generators_lie_on_the_level_set() {
        let s = MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] });
        let p = [1.0, 0.0, 0.0];
        let taus = [0.25, 0.5, 1.0];
        let recs = lift_null_cone(&s, &p, &[[1.0, 0.0, 0.0], [0.6, 0.0, 0.8], [0.0, 0.6, -0.8]], &taus, 1.0 / 64.0)
            .unwrap();
        assert_eq!(recs[0].branch, Branch::NullCone);
        let last = recs[0].samples[2];
        assert!((last.x[1] - 1.0).abs() < 1e-14 && last.x[3] == 0.0);
        assert_eq!(recs[1].branch, Branch::Upper);
        let l = recs[1].samples[2];
        assert!((l.x[3] - 0.8).abs() < 1e-13 && (l.rho - 0.8).abs() < 1e-13);
        assert!((l.a_frak - 1.0).abs() < 1e-14);
        assert_eq!(classify_samples(&recs[2], 1e-10), Some(Branch::Lower));
    }
}
