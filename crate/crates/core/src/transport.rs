//! Transport of the kernel `A` along timelike geodesics from the vertex,
//! with `tau A -> J` at the vertex.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::frames::{cone_sample, five_point, Caps, ConeSample};
use crate::geodesic::{trace_ray, HyperboloidDir, RayOptions, RayState, VertexFrame};
use crate::metric::{dot, MetricSpec, Point};

/// How the singular vertex condition is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    /// Integrate `log(tau A / J)`, whose rate is bounded at the vertex, from
    /// `tau = 0`.
    Regularized,
    /// Start at `tau_init` from `A = J / (n(p) b(tau_init) tau_init)` and
    /// apply one Richardson step against `tau_init / 2`.
    Asymptotic { tau_init: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOptions {
    /// Number of uniformly spaced samples down to `t0`.
    pub samples: usize,
    pub h_max: f64,
    pub init: InitMode,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { samples: 64, h_max: 1.0 / 256.0, init: InitMode::Regularized }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSample {
    pub tau: f64,
    pub rho: f64,
    /// One entry per component of `J`.
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSolution {
    pub dir: HyperboloidDir,
    pub vertex: Point,
    pub j: Vec<f64>,
    pub samples: Vec<TransportSample>,
    /// Zero in regularized mode.
    pub init_tau: f64,
}

impl TransportSolution {
    pub fn scalar(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.tau, s.a[0])).collect()
    }
}

/// `log(n(p) b)` at a ray state, i.e. minus the asymptotic `log(tau A/J)`.
fn log_nb(spec: &MetricSpec, vf: &VertexFrame, st: &RayState) -> f64 {
    let g = spec.jet_fast(&st.x).g;
    let rp = (-dot(&g, &st.xd, &st.xd)).sqrt();
    let n = (-g[0][0]).sqrt();
    // b^-1 = rho n / (rho' tau)
    let b_inv = st.rho * n / (rp * st.tau);
    (vf.lapse / b_inv).ln()
}

/// Offset added to the regularized `log(tau A/J)` for the chosen start.
fn start_shift(spec: &MetricSpec, vf: &VertexFrame, w: [f64; 2], t_init: f64, h: f64) -> Result<f64> {
    let st = trace_ray(spec, vf, w, &[t_init], &RayOptions { h_max: h.min(t_init / 8.0) })?[0];
    Ok(-st.log_ta - log_nb(spec, vf, &st))
}

fn kernel_values(j: &[f64], log_ta: f64, tau: f64) -> Vec<f64> {
    let s = log_ta.exp() / tau;
    j.iter().map(|v| v * s).collect()
}

/// Solves the transport equation along the geodesic from `p` in direction
/// `dir`, sampling `samples` points uniformly in `(0, p_t - t0]`.
///
/// Each component of `j` is propagated independently in the coordinate
/// frame; a single entry is the scalar case.
pub fn solve_transport(
    spec: &MetricSpec,
    p: &Point,
    dir: &HyperboloidDir,
    j: &[f64],
    t0: f64,
    opts: &TransportOptions,
) -> Result<TransportSolution> {
    let span = p[0] - t0;
    if !(span > 0.0) || opts.samples == 0 {
        return Err(DescentError::Config("transport needs t0 below the vertex and at least one sample".into()));
    }
    let vf = VertexFrame::new(spec, p)?;
    let w = dir.velocity();
    let taus: Vec<f64> = (1..=opts.samples).map(|i| span * i as f64 / opts.samples as f64).collect();
    let ro = RayOptions { h_max: opts.h_max };
    let sts = trace_ray(spec, &vf, w, &taus, &ro).map_err(|e| DescentError::CoefficientUnavailable(e.to_string()))?;
    let (shift, init_tau) = match opts.init {
        InitMode::Regularized => (0.0, 0.0),
        InitMode::Asymptotic { tau_init } => {
            if !(tau_init > 0.0 && tau_init < span) {
                return Err(DescentError::Config("tau_init must lie in (0, p_t - t0)".into()));
            }
            let s1 = start_shift(spec, &vf, w, tau_init, opts.h_max)?;
            let s2 = start_shift(spec, &vf, w, 0.5 * tau_init, opts.h_max)?;
            // Richardson on A itself: A = 2 A(tau_init/2) - A(tau_init)
            let r = 2.0 * s2.exp() - s1.exp();
            if !(r > 0.0) || !r.is_finite() {
                return Err(DescentError::ExtrapolationUnstable(format!("start factors {s1:e}, {s2:e}")));
            }
            (r.ln(), tau_init)
        }
    };
    let samples = sts
        .iter()
        .map(|s| TransportSample { tau: s.tau, rho: s.rho, a: kernel_values(j, s.log_ta + shift, s.tau) })
        .collect();
    Ok(TransportSolution { dir: *dir, vertex: *p, j: j.to_vec(), samples, init_tau })
}

/// Kernel and its derivative along `B` at `tau`, from a five-point stencil
/// of relative width `1e-3`. Returns the center cone sample too.
fn kernel_stencil(
    spec: &MetricSpec,
    sol: &TransportSolution,
    tau: f64,
    h_max: f64,
) -> Result<(ConeSample, f64, f64)> {
    let vf = VertexFrame::new(spec, &sol.vertex)?;
    let d = 1e-3 * tau;
    let taus = [tau - 2.0 * d, tau - d, tau, tau + d, tau + 2.0 * d];
    let sts = trace_ray(spec, &vf, sol.dir.velocity(), &taus, &RayOptions { h_max: h_max.min(d) })?;
    let a: Vec<f64> = sts.iter().map(|s| s.log_ta.exp() / s.tau).collect();
    let c = cone_sample(spec, &vf, &sts[2], &Caps::default())?;
    let rp = (-dot(&c.g, &sts[2].xd, &sts[2].xd)).sqrt();
    let da = five_point(&[a[0], a[1], a[2], a[3], a[4]], d) / rp;
    Ok((c, a[2], da))
}

/// Max relative residual of `D_B A + (tr k / 2 + (n^-1 b^-1 - 1)/rho) A` over
/// the interior samples (the first and last are skipped).
pub fn ode_residual(spec: &MetricSpec, sol: &TransportSolution, h_max: f64) -> Result<f64> {
    residual_over(spec, sol, h_max, |c, a, da| {
        let f = &c.frame;
        let coef = 0.5 * c.coeffs.tr_k + (f.b_inv / f.lapse - 1.0) / f.rho;
        (da + coef * a, da.abs().max((coef * a).abs()))
    })
}

/// Residual of the lifted equation `L~ A + (tr chi~ / 2 + (n^-1 - b)/tau) A`
/// along the lifted curve, with `L~ = (rho / (b^-1 tau)) (B + d_z)`.
pub fn verify_lifted_transport(spec: &MetricSpec, sol: &TransportSolution, h_max: f64) -> Result<f64> {
    if sol.j.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    residual_over(spec, sol, h_max, |c, a, da| {
        let f = &c.frame;
        let alpha = f.rho / (f.b_inv * f.tau);
        let coef = 0.5 * c.coeffs.tr_chi + (1.0 / f.lapse - 1.0 / f.b_inv) / f.tau;
        (alpha * da + coef * a, (alpha * da).abs().max((coef * a).abs()))
    })
}

fn residual_over(
    spec: &MetricSpec,
    sol: &TransportSolution,
    h_max: f64,
    f: impl Fn(&ConeSample, f64, f64) -> (f64, f64),
) -> Result<f64> {
    let n = sol.samples.len();
    if n < 3 {
        return Err(DescentError::InsufficientSamples);
    }
    let mut worst = 0.0f64;
    for s in &sol.samples[1..n - 1] {
        let (c, a, da) = kernel_stencil(spec, sol, s.tau, h_max)?;
        let (r, scale) = f(&c, a, da);
        worst = worst.max(r.abs() / scale.max(1e-300));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DerivMode, Domain, Family, Shape};

    fn dom() -> Domain {
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
    }

    fn lapse() -> MetricSpec {
        MetricSpec::new(
            Family::PerturbedLapse { eps: 0.05, shape: Shape::Gauss { width: 1.0, center: [0.0, 0.0] } },
            dom(),
            DerivMode::Analytic,
        )
        .unwrap()
    }

    #[test]
    fn flat_kernel_is_inverse_tau() {
        let s = MetricSpec::minkowski(dom());
        let d = HyperboloidDir::from_rapidity(0.7, 1.1);
        let sol = solve_transport(&s, &[1.0, 0.0, 0.0], &d, &[1.0], 0.0, &TransportOptions::default()).unwrap();
        for smp in &sol.samples {
            assert!((smp.a[0] - 1.0 / smp.tau).abs() < 1e-8);
        }
        let zero = solve_transport(&s, &[1.0, 0.0, 0.0], &d, &[0.0], 0.0, &TransportOptions::default()).unwrap();
        assert!(zero.samples.iter().all(|x| x.a[0] == 0.0));
        assert_eq!(verify_lifted_transport(&s, &zero, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn perturbed_lapse_residuals_and_start() {
        let s = lapse();
        let p = [1.0, 0.0, 0.0];
        let d = HyperboloidDir::from_polar(0.6, 0.3);
        let o = TransportOptions { samples: 8, ..Default::default() };
        let sol = solve_transport(&s, &p, &d, &[1.0], 0.0, &o).unwrap();
        assert!(ode_residual(&s, &sol, 1.0 / 256.0).unwrap() < 1e-6);
        assert!(verify_lifted_transport(&s, &sol, 1.0 / 256.0).unwrap() < 1e-6);
        // tau A -> J at the vertex
        let early = solve_transport(&s, &p, &d, &[1.0], 1.0 - 1e-4, &TransportOptions { samples: 1, ..o }).unwrap();
        assert!((early.samples[0].tau * early.samples[0].a[0] - 1.0).abs() < 1e-6);
        let asy = TransportOptions { init: InitMode::Asymptotic { tau_init: 1e-3 }, ..o };
        let sa = solve_transport(&s, &p, &d, &[1.0], 0.0, &asy).unwrap();
        let last = sol.samples.len() - 1;
        assert!((sa.samples[last].a[0] / sol.samples[last].a[0] - 1.0).abs() < 1e-6);
    }
}
