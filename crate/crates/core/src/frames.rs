//! Frames and connection coefficients at points of the chronological past,
//! read off a traced ray and its first variations.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::geodesic::{div_b, shoot_with_frame, RayOptions, RayState, VertexFrame};
use crate::metric::{
    christoffel_with_derivatives, dot, inverse_fast, riemann_from, Curvature, MetricSpec, Point, Tensor3,
};
use crate::rho_field::RhoField;

/// Frame quantities at a point `q`. Vectors are coordinate components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub point: Point,
    pub lapse: f64,
    pub tau: f64,
    pub rho: f64,
    pub b_inv: f64,
    pub r_tilde: f64,
    pub a_inv: f64,
    pub a_tilde_inv: f64,
    pub t: [f64; 3],
    pub b: [f64; 3],
    pub bbar: [f64; 3],
    pub n: [f64; 3],
    pub nbar: [f64; 3],
    pub e: [f64; 3],
}

/// (2+1) coefficients and their lifted (3+1) counterparts.
///
/// The lifted fields are filled from the closed forms relating them to the
/// (2+1) quantities; the identity suite recomputes them from definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionCoeffs {
    pub tr_k: f64,
    pub k_hat_sq: f64,
    pub k_nbar_nbar: f64,
    pub k_nbar_a: f64,
    pub k_a_nbar: f64,
    pub k_aa: f64,
    pub tr_pi: f64,
    pub pi_nn: f64,
    pub pi_na: f64,
    pub omega: f64,
    pub zetabar: f64,
    pub r_bb: f64,
    /// `Tr pi - (r~^2 / (b^-2 tau^2)) pi_NN`, the combination that recurs.
    pub pi_combo: f64,
    pub tr_chi: f64,
    pub tr_chibar: f64,
    pub tr_pi_tilde: f64,
    pub pi_tilde_nn: f64,
    pub omega_tilde: f64,
    pub zeta_tilde: [f64; 3],
    /// `mu_bar - omega tr chibar`; needs `B(pi_combo)`, see [`mu_bar_minus`].
    pub mu_bar_minus: Option<f64>,
}

/// Everything derivable from one ray state without differencing.
#[derive(Debug, Clone, Copy)]
pub struct ConeSample {
    pub state: RayState,
    pub frame: FrameBundle,
    pub coeffs: ConnectionCoeffs,
    pub g: [[f64; 3]; 3],
    pub gamma: Tensor3<3>,
    pub curvature: Curvature<3>,
    /// `D_B T` and `D_T T`.
    pub d_b_t: [f64; 3],
    pub d_t_t: [f64; 3],
    /// Spatial Jacobian `dx/dw` and its determinant.
    pub jac: [[f64; 2]; 2],
    pub jac_det: f64,
    /// `D_{dx_a} B` for the two velocity variations.
    pub db: [[f64; 3]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub rho: f64,
    pub r_tilde: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { rho: 0.0, r_tilde: 0.0 }
    }
}

/// `D_X V` for a coordinate field `V` with known directional derivative `dv = X(V)`.
pub fn covariant(gamma: &Tensor3<3>, x: &[f64; 3], v: &[f64; 3], dv: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|m| {
        let mut s = dv[m];
        for a in 0..3 {
            for b in 0..3 {
                s += gamma[m][a][b] * x[a] * v[b];
            }
        }
        s
    })
}

fn lin(a: f64, u: &[f64; 3], b: f64, v: &[f64; 3]) -> [f64; 3] {
    [a * u[0] + b * v[0], a * u[1] + b * v[1], a * u[2] + b * v[2]]
}

/// Frame and closed-form coefficients at the endpoint of a traced ray.
pub fn cone_sample(spec: &MetricSpec, vf: &VertexFrame, st: &RayState, caps: &Caps) -> Result<ConeSample> {
    let q = st.x;
    let jet = spec.jet(&q, 2)?;
    let g = jet.g;
    let ginv = inverse_fast(&g);
    let (gamma, dgamma) = christoffel_with_derivatives(&ginv, &jet).expect("order-2 jet");
    let curvature = Curvature { riem: riemann_from(&gamma, &dgamma), point: q };
    let tau = st.tau;
    let rho = st.rho;
    if !(rho > caps.rho) || !(rho > 0.0) {
        return Err(DescentError::VertexTooClose { rho });
    }
    let (tr_div, db, rp) = div_b(&g, &jet.dg, &gamma, &st.xd, &st.dx, &st.dxd);
    let _ = tr_div;
    let lapse = (-g[0][0]).sqrt();
    let t = [1.0 / lapse, 0.0, 0.0];
    let b = [st.xd[0] / rp, st.xd[1] / rp, st.xd[2] / rp];
    let c = dot(&g, &b, &t);
    let b_inv = rho * c / tau;
    let bsp = [0.0, b[1], b[2]];
    let a_inv = dot(&g, &bsp, &bsp).sqrt();
    let r_tilde = rho * a_inv;
    if !(r_tilde > caps.r_tilde) || !(a_inv > 0.0) {
        return Err(DescentError::ConeBoundaryTooClose { r_tilde });
    }
    let n = [0.0, b[1] / a_inv, b[2] / a_inv];
    // e = rotation of N by +90 degrees in (Sigma_t, g)
    let nl = [g[1][1] * n[1] + g[1][2] * n[2], g[2][1] * n[1] + g[2][2] * n[2]];
    let sg = (g[1][1] * g[2][2] - g[1][2] * g[2][1]).sqrt();
    let e = [0.0, -nl[1] / sg, nl[0] / sg];
    let nbar = lin(-a_inv, &t, c, &n);
    let bbar = lin(-c, &t, -a_inv, &n);

    let jac = [[st.dx[0][1], st.dx[1][1]], [st.dx[0][2], st.dx[1][2]]];
    let jac_det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let solve = |y: &[f64; 3]| -> [f64; 2] {
        [
            (jac[1][1] * y[1] - jac[0][1] * y[2]) / jac_det,
            (-jac[1][0] * y[1] + jac[0][0] * y[2]) / jac_det,
        ]
    };
    let d_of = |y: &[f64; 3]| -> [f64; 3] {
        let cf = solve(y);
        lin(cf[0], &db[0], cf[1], &db[1])
    };
    let dnb = d_of(&n);
    let deb = d_of(&e);
    let alpha = 1.0 / c;
    let k_nbar_nbar = alpha * alpha * dot(&g, &dnb, &n);
    let k_nbar_a = alpha * dot(&g, &dnb, &e);
    let k_a_nbar = alpha * dot(&g, &deb, &n);
    let k_aa = dot(&g, &deb, &e);
    let tr_k = k_nbar_nbar + k_aa;
    let dk = k_nbar_nbar - k_aa;
    let k_hat_sq = 0.5 * dk * dk + k_nbar_a * k_nbar_a + k_a_nbar * k_a_nbar;

    // pi_ij = -n^-1 g_jm G^m_i0
    let mut pi = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for m in 0..3 {
                s += g[j + 1][m] * gamma[m][i + 1][0];
            }
            pi[i][j] = -s / lapse;
        }
    }
    let pi_of = |u: &[f64; 3], v: &[f64; 3]| {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += pi[i][j] * u[i + 1] * v[j + 1];
            }
        }
        s
    };
    let mut tr_pi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            tr_pi += ginv[i + 1][j + 1] * pi[i][j];
        }
    }
    let pi_nn = pi_of(&n, &n);
    let pi_na = pi_of(&n, &e);

    // D_X T with T = n^-1 d_t: X(T^0) = -X(n)/n^2, X(n) = -X^m d_m g_00 / (2n)
    let d_t = |x: &[f64; 3]| -> [f64; 3] {
        let mut xn = 0.0;
        for m in 0..3 {
            xn -= x[m] * jet.dg[m][0][0] / (2.0 * lapse);
        }
        covariant(&gamma, x, &t, &[-xn / (lapse * lapse), 0.0, 0.0])
    };
    let d_b_t = d_t(&b);
    let d_t_t = d_t(&t);
    let bt2 = b_inv * b_inv * tau * tau;
    let omega = rho * r_tilde / bt2 * dot(&g, &d_b_t, &n);
    let zetabar = rho / r_tilde * dot(&g, &d_b_t, &e);
    let ric = curvature.ricci();
    let r_bb = dot(&ric, &b, &b);

    let pi_combo = tr_pi - r_tilde * r_tilde / bt2 * pi_nn;
    let tr_chi = alpha * tr_k;
    let ztil = lin(-r_tilde / (b_inv * tau) * zetabar, &e, -rho * rho / (b_inv * tau * r_tilde) * omega, &n);
    let coeffs = ConnectionCoeffs {
        tr_k,
        k_hat_sq,
        k_nbar_nbar,
        k_nbar_a,
        k_a_nbar,
        k_aa,
        tr_pi,
        pi_nn,
        pi_na,
        omega,
        zetabar,
        r_bb,
        pi_combo,
        tr_chi,
        tr_chibar: 2.0 * pi_combo - tr_chi,
        tr_pi_tilde: pi_combo,
        pi_tilde_nn: r_tilde * r_tilde / bt2 * pi_nn,
        omega_tilde: omega,
        zeta_tilde: ztil,
        mu_bar_minus: None,
    };
    let _ = vf;
    let frame = FrameBundle {
        point: q,
        lapse,
        tau,
        rho,
        b_inv,
        r_tilde,
        a_inv,
        a_tilde_inv: c,
        t,
        b,
        bbar,
        n,
        nbar,
        e,
    };
    Ok(ConeSample { state: *st, frame, coeffs, g, gamma, curvature, d_b_t, d_t_t, jac, jac_det, db })
}

/// `mu_bar - omega tr chibar` from the Raychaudhuri-substituted closed form,
/// given `B(pi_combo)`.
pub fn mu_bar_minus(c: &ConnectionCoeffs, f: &FrameBundle, b_of_pi_combo: f64) -> f64 {
    let alpha = f.rho / (f.b_inv * f.tau);
    2.0 * alpha * c.omega * c.tr_k
        + alpha * alpha * (c.r_bb + c.k_hat_sq)
        + 2.0 * alpha * (b_of_pi_combo + (0.5 * c.tr_k - c.omega / alpha) * c.pi_combo)
}

/// Fills the lifted part of the coefficients from the (2+1) part.
pub fn lifted_coeffs(c: &ConnectionCoeffs, f: &FrameBundle, b_of_pi_combo: Option<f64>) -> ConnectionCoeffs {
    let alpha = f.rho / (f.b_inv * f.tau);
    let bt2 = f.b_inv * f.b_inv * f.tau * f.tau;
    let mut out = *c;
    out.tr_chi = alpha * c.tr_k;
    out.tr_pi_tilde = c.tr_pi - f.r_tilde * f.r_tilde / bt2 * c.pi_nn;
    out.tr_chibar = 2.0 * out.tr_pi_tilde - out.tr_chi;
    out.pi_tilde_nn = f.r_tilde * f.r_tilde / bt2 * c.pi_nn;
    out.omega_tilde = c.omega;
    out.zeta_tilde = lin(
        -f.r_tilde / (f.b_inv * f.tau) * c.zetabar,
        &f.e,
        -f.rho * f.rho / (f.b_inv * f.tau * f.r_tilde) * c.omega,
        &f.n,
    );
    out.mu_bar_minus = b_of_pi_combo.map(|bp| mu_bar_minus(c, f, bp));
    out
}

/// Residuals of the algebraic frame relations, max-norm.
pub fn frame_residuals(f: &FrameBundle, g: &[[f64; 3]; 3]) -> f64 {
    let c = f.b_inv * f.tau / f.rho;
    let mut r = 0.0f64;
    let mut upd = |v: f64| r = r.max(v.abs());
    upd(dot(g, &f.b, &f.b) + 1.0);
    upd(dot(g, &f.bbar, &f.bbar) + 1.0);
    upd(dot(g, &f.b, &f.t) - c);
    upd((f.r_tilde * f.r_tilde - (c * c * f.rho * f.rho - f.rho * f.rho)) / (1.0 + c * c * f.rho * f.rho));
    upd(f.a_inv - f.r_tilde / f.rho);
    upd(dot(g, &f.e, &f.e) - 1.0);
    upd(dot(g, &f.e, &f.t));
    upd(dot(g, &f.e, &f.n));
    upd(dot(g, &f.n, &f.n) - 1.0);
    upd(dot(g, &f.nbar, &f.nbar) - 1.0);
    let fb1 = lin(-c, &f.t, f.a_inv, &f.n);
    let t1 = lin(-c, &f.b, f.r_tilde / f.rho, &f.nbar);
    for m in 0..3 {
        upd(fb1[m] - f.b[m]);
        upd(t1[m] - f.t[m]);
    }
    r
}

/// Frame at `q`, shooting from the vertex of `field` with a warm start from
/// the nearest converged node.
pub fn compute_frame(spec: &MetricSpec, field: &RhoField, q: &Point, caps: &Caps) -> Result<FrameBundle> {
    Ok(sample_at(spec, field, q, caps)?.frame)
}

/// Cone sample at `q` (frame plus closed-form coefficients).
pub fn sample_at(spec: &MetricSpec, field: &RhoField, q: &Point, caps: &Caps) -> Result<ConeSample> {
    let vf = VertexFrame::new(spec, &field.vertex)?;
    let tau = field.vertex[0] - q[0];
    let warm = field.nearest_velocity(q);
    let (_, _, st) = shoot_with_frame(spec, &vf, q, warm, &RayOptions { h_max: tau.abs().max(1e-3) / 256.0 })
        .map_err(|e| match e {
            DescentError::NoConvergence { .. } => DescentError::ConeBoundaryTooClose { r_tilde: 0.0 },
            other => other,
        })?;
    cone_sample(spec, &vf, &st, caps)
}

/// k- and pi-parts of the coefficients at `q`.
pub fn second_fundamental_forms(
    spec: &MetricSpec,
    field: &RhoField,
    q: &Point,
    caps: &Caps,
) -> Result<ConnectionCoeffs> {
    Ok(sample_at(spec, field, q, caps)?.coeffs)
}

/// `omega` and `zetabar_A` from their definitions by differencing along the
/// ray through `q`. Returns `InsufficientSamples` when the ray stencil
/// cannot be placed.
pub fn omega_zetabar(spec: &MetricSpec, vf: &VertexFrame, w: [f64; 2], tau: f64, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) || tau - 2.0 * h <= 0.0 {
        return Err(DescentError::InsufficientSamples);
    }
    let taus = [tau - 2.0 * h, tau - h, tau, tau + h, tau + 2.0 * h];
    let sts = crate::geodesic::trace_ray(spec, vf, w, &taus, &RayOptions { h_max: h.min(tau / 64.0) })?;
    let cs: Vec<ConeSample> =
        sts.iter().map(|s| cone_sample(spec, vf, s, &Caps::default())).collect::<Result<_>>()?;
    let d = |f: &dyn Fn(&ConeSample) -> f64| five_point(&[f(&cs[0]), f(&cs[1]), f(&cs[2]), f(&cs[3]), f(&cs[4])], h);
    let mid = &cs[2];
    let rp = (-dot(&mid.g, &mid.state.xd, &mid.state.xd)).sqrt();
    let omega = -d(&|c| c.frame.rho / (c.frame.b_inv * c.frame.tau)) / rp;
    let dn: [f64; 3] = std::array::from_fn(|m| d(&|c| c.frame.nbar[m]) / rp);
    let dbn = covariant(&mid.gamma, &mid.frame.b, &mid.frame.nbar, &dn);
    Ok((omega, dot(&mid.g, &dbn, &mid.frame.e)))
}

/// Fourth-order central first derivative on `[-2h, -h, 0, h, 2h]`.
pub fn five_point(f: &[f64; 5], h: f64) -> f64 {
    (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{trace_ray, HyperboloidDir};
    use crate::metric::{DerivMode, Domain, Family, Shape};

    fn dom() -> Domain {
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
    }

    fn sample(spec: &MetricSpec, psi: f64, theta: f64, tau: f64) -> ConeSample {
        let vf = VertexFrame::new(spec, &[1.0, 0.0, 0.0]).unwrap();
        let d = HyperboloidDir::from_polar(psi, theta);
        let st = trace_ray(spec, &vf, d.velocity(), &[tau], &RayOptions::default()).unwrap()[0];
        cone_sample(spec, &vf, &st, &Caps::default()).unwrap()
    }

    #[test]
    fn flat_frame_matches_closed_form() {
        // q = (0.5, 0.3, 0): tau 0.5, rho 0.4
        let s = MetricSpec::minkowski(dom());
        let psi = (0.6f64).asin();
        let c = sample(&s, psi, 0.0, 0.5);
        let f = c.frame;
        assert!((f.point[1] - 0.3).abs() < 1e-14);
        assert!((f.rho - 0.4).abs() < 1e-14);
        assert!((f.b_inv - 1.0).abs() < 1e-14);
        assert!((f.r_tilde - 0.3).abs() < 1e-14);
        assert!((f.a_inv - 0.75).abs() < 1e-14);
        assert!((f.b[0] + 1.25).abs() < 1e-14 && (f.b[1] - 0.75).abs() < 1e-14);
        assert!((c.coeffs.tr_k - 5.0).abs() < 1e-12);
        assert!(c.coeffs.k_hat_sq < 1e-20);
        assert!((c.coeffs.tr_chi - 4.0).abs() < 1e-12);
        assert!((c.coeffs.tr_chibar + 4.0).abs() < 1e-12);
        assert!(frame_residuals(&f, &c.g) < 1e-13);
    }

    #[test]
    fn static_lapse_has_no_pi() {
        let s = MetricSpec::new(
            Family::PerturbedLapse { eps: 0.05, shape: Shape::Gauss { width: 1.0, center: [0.0, 0.0] } },
            dom(),
            DerivMode::Analytic,
        )
        .unwrap();
        let c = sample(&s, 0.7, 0.4, 0.6);
        assert!(c.coeffs.tr_pi.abs() < 1e-15 && c.coeffs.pi_na.abs() < 1e-15);
        assert!(frame_residuals(&c.frame, &c.g) < 1e-12);
        // k computed from the variations is symmetric
        assert!((c.coeffs.k_nbar_a - c.coeffs.k_a_nbar).abs() < 1e-8);
    }
}
