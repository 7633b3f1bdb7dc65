//! Quadrature over the backward cone in geodesic-polar coordinates.
//!
//! A slice `t = t_p - tau` of the cone interior is the image of the unit
//! disk of initial velocities `w = sin(psi) (cos theta, sin theta)`. The
//! substitution `|w| = sin psi` absorbs the inverse square-root growth of
//! `tau / rho` at the null boundary, so Gauss-Legendre in `tau` and `psi`
//! and the trapezoid rule in `theta` converge spectrally.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::frames::{cone_sample, Caps, ConeSample};
use crate::geodesic::{trace_ray, RayOptions, VertexFrame};
use crate::metric::{dot, MetricSpec, Point};

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    let gl = gauss_quad::GaussLegendre::new(n)
        .map_err(|e| DescentError::Config(format!("Gauss-Legendre order {n}: {e}")))?;
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut v: Vec<(f64, f64)> = gl.as_node_weight_pairs().iter().map(|(x, w)| (m + h * x, h * w)).collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(v)
}

/// Derivative weights of the polynomial interpolant through `nodes`,
/// evaluated at `x`.
pub fn lagrange_derivative_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let lam: Vec<f64> = (0..n)
        .map(|j| 1.0 / (0..n).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product::<f64>())
        .collect();
    if let Some(i) = nodes.iter().position(|&v| v == x) {
        let mut w = vec![0.0; n];
        for j in (0..n).filter(|&j| j != i) {
            w[j] = lam[j] / lam[i] / (x - nodes[j]);
            w[i] -= w[j];
        }
        return w;
    }
    (0..n)
        .map(|j| {
            let ell: f64 = lam[j] * (0..n).filter(|&k| k != j).map(|k| x - nodes[k]).product::<f64>();
            ell * (0..n).filter(|&k| k != j).map(|k| 1.0 / (x - nodes[k])).sum::<f64>()
        })
        .collect()
}

/// Differentiation matrix of polynomial interpolation on `nodes`.
pub fn lagrange_diff_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    nodes.iter().map(|&x| lagrange_derivative_weights(nodes, x)).collect()
}

/// Differentiation matrix of trigonometric interpolation on `n` equispaced
/// points of `[0, 2 pi)`.
pub fn fourier_diff_matrix(n: usize) -> Vec<Vec<f64>> {
    let h = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let d = (i as f64 - j as f64) * h / 2.0;
                    let sgn = if (i as i64 - j as i64) % 2 == 0 { 1.0 } else { -1.0 };
                    if n.is_multiple_of(2) {
                        0.5 * sgn / d.tan()
                    } else {
                        0.5 * sgn / d.sin()
                    }
                })
                .collect()
        })
        .collect()
}

pub(crate) fn apply(m: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureOptions {
    pub n_tau: usize,
    pub n_psi: usize,
    pub n_theta: usize,
    /// Largest integrator step along each ray.
    pub h_max: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { n_tau: 16, n_psi: 16, n_theta: 24, h_max: 1.0 / 256.0 }
    }
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_tau < 2 || self.n_psi < 2 || self.n_theta < 4 || !(self.h_max > 0.0) {
            return Err(DescentError::Config(
                "quadrature needs n_tau, n_psi >= 2, n_theta >= 4 and h_max > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One node of the cone grid.
#[derive(Debug, Clone, Copy)]
pub struct ConeNode {
    pub sample: ConeSample,
    /// `d x / d(psi, theta)` on the slice.
    pub polar_jac: [[f64; 2]; 2],
    /// Weight of `d mu_Sigma` at the node, including the `psi` and `theta`
    /// quadrature weights but not the `tau` weight.
    pub area: f64,
    /// `d rho / d tau` along the ray.
    pub rho_dot: f64,
    /// `B(pi_combo)`, from differentiating along the ray.
    pub b_pi_combo: f64,
}

impl ConeNode {
    /// `(d_x f, d_y f)` on the slice from `(d_psi f, d_theta f)`.
    pub fn slice_gradient(&self, d_psi: f64, d_theta: f64) -> [f64; 2] {
        let k = &self.polar_jac;
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        // grad = K^-T (d_psi, d_theta)
        [(k[1][1] * d_psi - k[1][0] * d_theta) / det, (-k[0][1] * d_psi + k[0][0] * d_theta) / det]
    }
}

/// Geometry of the cone interior `t0 <= t < t_p` on a tensor grid.
#[derive(Debug, Clone)]
pub struct ConeGrid {
    pub vertex: Point,
    pub t0: f64,
    pub tau0: f64,
    pub lapse_p: f64,
    pub tau_nodes: Vec<(f64, f64)>,
    pub psi_nodes: Vec<(f64, f64)>,
    pub n_theta: usize,
    /// `interior[i_tau][i_psi * n_theta + i_theta]`.
    pub interior: Vec<Vec<ConeNode>>,
    /// Nodes on `t = t0`, same layout as one interior level.
    pub slice: Vec<ConeNode>,
    pub d_psi: Vec<Vec<f64>>,
    pub d_theta: Vec<Vec<f64>>,
}

impl ConeGrid {
    pub fn theta(&self, j: usize) -> f64 {
        std::f64::consts::TAU * j as f64 / self.n_theta as f64
    }

    /// Derivatives in `psi` and `theta` of a function given on one level.
    pub fn polar_derivatives(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (np, nt) = (self.psi_nodes.len(), self.n_theta);
        let mut dp = vec![0.0; np * nt];
        let mut dt = vec![0.0; np * nt];
        for j in 0..nt {
            let col: Vec<f64> = (0..np).map(|i| f[i * nt + j]).collect();
            for (i, v) in apply(&self.d_psi, &col).into_iter().enumerate() {
                dp[i * nt + j] = v;
            }
        }
        for i in 0..np {
            for (j, v) in apply(&self.d_theta, &f[i * nt..(i + 1) * nt]).into_iter().enumerate() {
                dt[i * nt + j] = v;
            }
        }
        (dp, dt)
    }

    /// `int n d mu_Sigma dt` over the grid; `pi tau0^3 / 3` in flat space.
    pub fn volume(&self) -> f64 {
        self.tau_nodes
            .iter()
            .zip(&self.interior)
            .map(|((_, wt), lvl)| wt * lvl.iter().map(|n| n.area * n.sample.frame.lapse).sum::<f64>())
            .sum()
    }
}

fn pi_combo_of(s: &ConeSample) -> f64 {
    s.coeffs.pi_combo
}

/// Traces the ray fan and evaluates the frame at every node.
pub fn build_cone_grid(spec: &MetricSpec, p: &Point, t0: f64, opts: &QuadratureOptions) -> Result<ConeGrid> {
    opts.validate()?;
    let tau0 = p[0] - t0;
    if !(tau0 > 0.0) {
        return Err(DescentError::Config("t0 must lie below the vertex".into()));
    }
    let vf = VertexFrame::new(spec, p)?;
    let tau_nodes = gauss_legendre(opts.n_tau, 0.0, tau0)?;
    let psi_nodes = gauss_legendre(opts.n_psi, 0.0, std::f64::consts::FRAC_PI_2)?;
    let nt = opts.n_theta;
    let mut taus: Vec<f64> = tau_nodes.iter().map(|v| v.0).collect();
    let tnodes = taus.clone();
    taus.push(tau0);
    let dtau = lagrange_diff_matrix(&tnodes);
    let dtau_end = lagrange_derivative_weights(&tnodes, tau0);
    let wth = std::f64::consts::TAU / nt as f64;
    let ro = RayOptions { h_max: opts.h_max.min(tau0 / 8.0) };
    let rays: Vec<Vec<ConeNode>> = (0..opts.n_psi * nt)
        .into_par_iter()
        .map(|k| -> Result<Vec<ConeNode>> {
            let (ip, it) = (k / nt, k % nt);
            let (psi, wp) = psi_nodes[ip];
            let th = wth * it as f64;
            let (sp, cp) = psi.sin_cos();
            let (st, ct) = th.sin_cos();
            let w = [sp * ct, sp * st];
            let pol = [[cp * ct, -sp * st], [cp * st, sp * ct]];
            let sts = trace_ray(spec, &vf, w, &taus, &ro)
                .map_err(|e| DescentError::QuadratureUnderResolved(format!("ray w = {w:?}: {e}")))?;
            let mut out = Vec::with_capacity(taus.len());
            for s in &sts {
                let c = cone_sample(spec, &vf, s, &Caps::default())?;
                let m = c.jac;
                let kj = [
                    [m[0][0] * pol[0][0] + m[0][1] * pol[1][0], m[0][0] * pol[0][1] + m[0][1] * pol[1][1]],
                    [m[1][0] * pol[0][0] + m[1][1] * pol[1][0], m[1][0] * pol[0][1] + m[1][1] * pol[1][1]],
                ];
                let sg = (c.g[1][1] * c.g[2][2] - c.g[1][2] * c.g[2][1]).sqrt();
                let rho_dot = (-dot(&c.g, &s.xd, &s.xd)).sqrt();
                out.push(ConeNode {
                    sample: c,
                    polar_jac: kj,
                    area: wp * wth * sp * cp * sg * c.jac_det.abs(),
                    rho_dot,
                    b_pi_combo: 0.0,
                });
            }
            let pc: Vec<f64> = out[..tnodes.len()].iter().map(|n| pi_combo_of(&n.sample)).collect();
            let dp = apply(&dtau, &pc);
            for (n, d) in out.iter_mut().zip(&dp) {
                n.b_pi_combo = d / n.rho_dot;
            }
            let de: f64 = dtau_end.iter().zip(&pc).map(|(a, b)| a * b).sum();
            let last = out.last_mut().expect("slice node");
            last.b_pi_combo = de / last.rho_dot;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let nr = rays.len();
    let interior = (0..tnodes.len()).map(|i| (0..nr).map(|k| rays[k][i]).collect()).collect();
    let slice = (0..nr).map(|k| rays[k][tnodes.len()]).collect();
    let psis: Vec<f64> = psi_nodes.iter().map(|v| v.0).collect();
    Ok(ConeGrid {
        vertex: *p,
        t0,
        tau0,
        lapse_p: vf.lapse,
        tau_nodes,
        psi_nodes,
        n_theta: nt,
        interior,
        slice,
        d_psi: lagrange_diff_matrix(&psis),
        d_theta: fourier_diff_matrix(nt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let q = gauss_legendre(5, 0.0, 2.0).unwrap();
        let s: f64 = q.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 2f64.powi(10) / 10.0).abs() < 1e-10);
        assert!(q.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn spectral_derivatives() {
        let nodes: Vec<f64> = gauss_legendre(8, 0.0, 1.5).unwrap().iter().map(|v| v.0).collect();
        let f: Vec<f64> = nodes.iter().map(|x| x.powi(5)).collect();
        for (x, d) in nodes.iter().zip(apply(&lagrange_diff_matrix(&nodes), &f)) {
            assert!((d - 5.0 * x.powi(4)).abs() < 1e-11);
        }
        let w: f64 = lagrange_derivative_weights(&nodes, 1.5).iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((w - 5.0 * 1.5f64.powi(4)).abs() < 1e-9);
        for n in [8, 9] {
            let th: Vec<f64> = (0..n).map(|j| std::f64::consts::TAU * j as f64 / n as f64).collect();
            let f: Vec<f64> = th.iter().map(|t| (2.0 * t).sin() + t.cos()).collect();
            for (t, d) in th.iter().zip(apply(&fourier_diff_matrix(n), &f)) {
                assert!((d - (2.0 * (2.0 * t).cos() - t.sin())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_cone_volume() {
        use crate::metric::Domain;
        let s = MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] });
        let g = build_cone_grid(&s, &[1.0, 0.2, 0.0], 0.0, &QuadratureOptions { n_tau: 4, n_psi: 10, n_theta: 8, h_max: 0.05 })
            .unwrap();
        let v = g.volume();
        assert!((v - std::f64::consts::PI / 3.0).abs() < 1e-12, "{v}");
        // polar gradient of x^1 is (1, 0)
        let lvl = &g.interior[2];
        let f: Vec<f64> = lvl.iter().map(|n| n.sample.frame.point[1]).collect();
        let (dp, dt) = g.polar_derivatives(&f);
        let gr = lvl[13].slice_gradient(dp[13], dt[13]);
        assert!((gr[0] - 1.0).abs() < 1e-8 && gr[1].abs() < 1e-8, "{gr:?}");
    }
}
