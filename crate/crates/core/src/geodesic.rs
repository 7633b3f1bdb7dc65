//! Past-directed timelike and null geodesics from a vertex `p`.
//!
//! Two integrators live here. [`integrate_geodesic`] is a general adaptive
//! Dormand-Prince integrator in the affine parameter. [`trace_ray`] is the
//! workhorse of the cone geometry: fixed-step RK4 in `tau = t_p - t`, carrying
//! the first variations with respect to the initial velocity and the
//! logarithm of `tau * A / J` for the transport kernel.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::metric::{christoffel_with_derivatives, dot, inverse_fast, MetricSpec, Point};

/// Unit future hyperboloid direction `(V^0, V^1, V^2)` in an orthonormal
/// frame at the vertex.
///
/// The geodesic leaves `p` with tangent `-V^0 T + V^a e_a`, so that
/// `g(V, T) = V^0 > 0` for the past-directed vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperboloidDir {
    pub v: [f64; 3],
}

impl HyperboloidDir {
    pub fn from_velocity(w: [f64; 2]) -> Result<Self> {
        let s = w[0] * w[0] + w[1] * w[1];
        if !(s < 1.0) {
            return Err(DescentError::Config(format!("velocity {w:?} is not subluminal")));
        }
        let g = 1.0 / (1.0 - s).sqrt();
        Ok(HyperboloidDir { v: [g, g * w[0], g * w[1]] })
    }

    /// `w = sin(psi) (cos theta, sin theta)`; `psi` in `[0, pi/2)`.
    pub fn from_polar(psi: f64, theta: f64) -> Self {
        let c = psi.cos();
        let (st, ct) = theta.sin_cos();
        let s = psi.sin();
        HyperboloidDir { v: [1.0 / c, s * ct / c, s * st / c] }
    }

    pub fn from_rapidity(chi: f64, theta: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        HyperboloidDir { v: [chi.cosh(), chi.sinh() * ct, chi.sinh() * st] }
    }

    /// Coordinate velocity `V^a / V^0` in the vertex frame.
    pub fn velocity(&self) -> [f64; 2] {
        [self.v[1] / self.v[0], self.v[2] / self.v[0]]
    }

    pub fn hyperbolic_norm(&self) -> f64 {
        self.v[0] * self.v[0] - self.v[1] * self.v[1] - self.v[2] * self.v[2]
    }
}

/// Orthonormal frame `{T_p, e_1, e_2}` at the vertex; `e` holds spatial
/// coordinate components, built by Gram-Schmidt from `g_ij(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexFrame {
    pub p: Point,
    pub lapse: f64,
    pub e: [[f64; 2]; 2],
}

impl VertexFrame {
    pub fn new(spec: &MetricSpec, p: &Point) -> Result<Self> {
        let jet = spec.jet(p, 1)?;
        let h = [[jet.g[1][1], jet.g[1][2]], [jet.g[2][1], jet.g[2][2]]];
        let ip = |a: [f64; 2], b: [f64; 2]| {
            a[0] * b[0] * h[0][0] + a[0] * b[1] * h[0][1] + a[1] * b[0] * h[1][0] + a[1] * b[1] * h[1][1]
        };
        let e1 = [1.0 / h[0][0].sqrt(), 0.0];
        let mut e2 = [0.0, 1.0];
        let c = ip(e2, e1);
        e2 = [e2[0] - c * e1[0], e2[1] - c * e1[1]];
        let m = ip(e2, e2).sqrt();
        e2 = [e2[0] / m, e2[1] / m];
        Ok(VertexFrame { p: *p, lapse: spec.lapse(p), e: [e1, e2] })
    }

    /// Initial `d x^i / d tau` for the coordinate velocity `w`.
    pub fn initial_velocity(&self, w: [f64; 2]) -> [f64; 2] {
        let n = self.lapse;
        [
            n * (w[0] * self.e[0][0] + w[1] * self.e[1][0]),
            n * (w[0] * self.e[0][1] + w[1] * self.e[1][1]),
        ]
    }

    /// Past-directed coordinate tangent `-V^0 T + V^a e_a` of unit length.
    pub fn past_tangent(&self, dir: &HyperboloidDir) -> [f64; 3] {
        let [v0, v1, v2] = dir.v;
        [
            -v0 / self.lapse,
            v1 * self.e[0][0] + v2 * self.e[1][0],
            v1 * self.e[0][1] + v2 * self.e[1][1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeodesicKind {
    Timelike,
    Null,
}

/// One sample `(s, x, dx/ds)` of a geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSample {
    pub s: f64,
    pub x: Point,
    pub u: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub kind: GeodesicKind,
    pub samples: Vec<GeodesicSample>,
    pub affine_norm: f64,
    /// Set when integration stopped at the domain boundary.
    pub exited: bool,
}

impl GeodesicPath {
    pub fn last(&self) -> &GeodesicSample {
        self.samples.last().expect("paths hold at least the start sample")
    }

    /// Largest `|g(u,u) - affine_norm|` over the samples.
    pub fn norm_drift(&self, spec: &MetricSpec) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let g = spec.jet_fast(&s.x).g;
                (dot(&g, &s.u, &s.u) - self.affine_norm).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Proper length `int sqrt(-g(u,u)) ds`, by the trapezoid rule.
    pub fn proper_length(&self, spec: &MetricSpec) -> f64 {
        let f: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                let g = spec.jet_fast(&s.x).g;
                (-dot(&g, &s.u, &s.u)).max(0.0).sqrt()
            })
            .collect();
        let mut acc = 0.0;
        for k in 1..f.len() {
            acc += 0.5 * (f[k] + f[k - 1]) * (self.samples[k].s - self.samples[k - 1].s);
        }
        acc
    }
}

fn geodesic_rhs(spec: &MetricSpec, y: &[f64; 6]) -> Result<[f64; 6]> {
    let x = [y[0], y[1], y[2]];
    let jet = spec.jet(&x, 1)?;
    let gam = crate::metric::christoffel(&jet)?.gamma;
    let u = [y[3], y[4], y[5]];
    let mut out = [0.0; 6];
    for a in 0..3 {
        out[a] = u[a];
        let mut s = 0.0;
        for b in 0..3 {
            for c in 0..3 {
                s += gam[a][b][c] * u[b] * u[c];
            }
        }
        out[3 + a] = -s;
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dp_step(spec: &MetricSpec, y: &[f64; 6], h: f64) -> Result<([f64; 6], f64)> {
    let _ = DP_C;
    let mut k = [[0.0; 6]; 7];
    for stage in 0..7 {
        let mut ys = *y;
        for j in 0..stage {
            for i in 0..6 {
                ys[i] += h * DP_A[stage][j] * k[j][i];
            }
        }
        k[stage] = geodesic_rhs(spec, &ys)?;
    }
    let mut y5 = *y;
    let mut err = 0.0f64;
    for i in 0..6 {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for st in 0..7 {
            s5 += DP_B5[st] * k[st][i];
            s4 += DP_B4[st] * k[st][i];
        }
        y5[i] += h * s5;
        let sc = 1e-12 + 1e-11 * y[i].abs().max(y5[i].abs());
        err = err.max((h * (s5 - s4)).abs() / sc);
    }
    Ok((y5, err))
}

/// Integrates `x'' + G(x', x') = 0` from `start` with initial tangent `v0`
/// (any future or past orientation) until `t = t_stop` or the domain edge.
///
/// A domain exit returns the partial path with `exited = true`.
pub fn integrate_geodesic(spec: &MetricSpec, start: &Point, v0: &[f64; 3], t_stop: f64) -> Result<GeodesicPath> {
    let jet = spec.jet(start, 1)?;
    let norm = dot(&jet.g, v0, v0);
    let scale = v0.iter().map(|c| c * c).sum::<f64>();
    let kind = if norm.abs() <= 1e-10 * scale { GeodesicKind::Null } else { GeodesicKind::Timelike };
    if norm > 1e-10 * scale {
        return Err(DescentError::Config("spacelike initial tangent".into()));
    }
    if v0[0] == 0.0 || (t_stop - start[0]) * v0[0] < 0.0 {
        return Err(DescentError::NotReached { t: t_stop });
    }
    let mut y = [start[0], start[1], start[2], v0[0], v0[1], v0[2]];
    let mut s = 0.0;
    let mut samples = vec![GeodesicSample { s, x: *start, u: *v0 }];
    let span = (t_stop - start[0]).abs() / v0[0].abs();
    let mut h = span / 64.0;
    let h_min = span * 1e-14;
    let mut exited = false;
    loop {
        if (y[0] - t_stop).abs() <= 1e-13 * (1.0 + t_stop.abs()) {
            break;
        }
        let (mut yn, err) = match dp_step(spec, &y, h) {
            Ok(r) => r,
            Err(DescentError::OutOfDomain { .. }) => {
                if h <= h_min {
                    exited = true;
                    break;
                }
                h *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            if h < h_min {
                return Err(DescentError::StepFailure { at: s });
            }
            continue;
        }
        let mut hn = h;
        if (yn[0] - t_stop) * (y[0] - t_stop) < 0.0 {
            // overshoot: Newton on the step length using dt/ds
            for _ in 0..30 {
                let ds = (yn[0] - t_stop) / yn[3];
                hn -= ds;
                yn = dp_step(spec, &y, hn)?.0;
                if (yn[0] - t_stop).abs() < 1e-14 * (1.0 + t_stop.abs()) {
                    break;
                }
            }
            yn[0] = t_stop;
        }
        s += hn;
        y = yn;
        samples.push(GeodesicSample { s, x: [y[0], y[1], y[2]], u: [y[3], y[4], y[5]] });
        h = hn * (0.9 * err.max(1e-10).powf(-0.2)).min(4.0);
    }
    Ok(GeodesicPath { kind, samples, affine_norm: norm, exited })
}

/// State of a ray at one `tau`, with first variations in the initial
/// coordinate velocity `w = V^a / V^0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub tau: f64,
    pub x: Point,
    /// `dx/dtau`, with time component `-1`.
    pub xd: [f64; 3],
    pub rho: f64,
    /// `dx[a] = dx/dw_a` at fixed tau (time component 0).
    pub dx: [[f64; 3]; 2],
    pub dxd: [[f64; 3]; 2],
    /// `log(tau A / J)` for the scalar transport kernel.
    pub log_ta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayOptions {
    /// Largest RK4 step in tau.
    pub h_max: f64,
}

impl Default for RayOptions {
    fn default() -> Self {
        RayOptions { h_max: 1.0 / 64.0 }
    }
}

const NY: usize = 14;

/// Divergence of the unit tangent field `B` from the state, i.e. `tr k`.
///
/// Solves `W c = D_{dx_a} B` with `W = [B, dx_1, dx_2]`; the trace of the
/// map `Y -> D_Y B` in that basis is `c_1[1] + c_2[2]`.
pub(crate) fn div_b(
    g: &[[f64; 3]; 3],
    dg: &[[[f64; 3]; 3]; 3],
    gamma: &[[[f64; 3]; 3]; 3],
    xd: &[f64; 3],
    dx: &[[f64; 3]; 2],
    dxd: &[[f64; 3]; 2],
) -> (f64, [[f64; 3]; 2], f64) {
    let rp = (-dot(g, xd, xd)).sqrt();
    let b = [xd[0] / rp, xd[1] / rp, xd[2] / rp];
    let mut db = [[0.0; 3]; 2];
    for a in 0..2 {
        let mut dgxx = 0.0;
        for j in 1..3 {
            dgxx += dx[a][j] * dot(&dg[j], xd, xd);
        }
        let drp = -(dgxx + 2.0 * dot(g, xd, &dxd[a])) / (2.0 * rp);
        for m in 0..3 {
            let mut s = dxd[a][m] / rp - xd[m] * drp / (rp * rp);
            for u in 0..3 {
                for v in 0..3 {
                    s += gamma[m][u][v] * dx[a][u] * b[v];
                }
            }
            db[a][m] = s;
        }
    }
    let w = [[b[0], dx[0][0], dx[1][0]], [b[1], dx[0][1], dx[1][1]], [b[2], dx[0][2], dx[1][2]]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let dw = det3(&w);
    let mut tr = 0.0;
    for a in 0..2 {
        let mut m = w;
        for r in 0..3 {
            m[r][a + 1] = db[a][r];
        }
        tr += det3(&m) / dw;
    }
    (tr, db, rp)
}

struct RayRhs<'a> {
    spec: &'a MetricSpec,
    tp: f64,
    floor: f64,
    null: bool,
}

impl RayRhs<'_> {
    fn eval(&self, tau: f64, y: &[f64; NY]) -> Result<[f64; NY]> {
        let q = [self.tp - tau, y[0], y[1]];
        if !self.spec.domain.contains(&q, 0.0) || y.iter().any(|v| !v.is_finite()) {
            return Err(DescentError::DomainExit { t: q[0] });
        }
        let jet = self.spec.jet_fast(&q);
        let ginv = inverse_fast(&jet.g);
        let (gamma, dgamma) = christoffel_with_derivatives(&ginv, &jet).expect("analytic order-2 jet");
        let xd = [-1.0, y[2], y[3]];
        let quad = |m: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]| -> f64 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += m[i][j] * a[i] * b[j];
                }
            }
            s
        };
        let gxx: [f64; 3] = std::array::from_fn(|c| quad(&gamma[c], &xd, &xd));
        let mut out = [0.0; NY];
        out[0] = y[2];
        out[1] = y[3];
        out[2] = -gxx[1] - gxx[0] * y[2];
        out[3] = -gxx[2] - gxx[0] * y[3];
        let mut dx = [[0.0; 3]; 2];
        let mut dxd = [[0.0; 3]; 2];
        for a in 0..2 {
            dx[a] = [0.0, y[4 + 4 * a], y[5 + 4 * a]];
            dxd[a] = [0.0, y[6 + 4 * a], y[7 + 4 * a]];
            let dg: [f64; 3] = std::array::from_fn(|c| {
                let mut s = 2.0 * quad(&gamma[c], &xd, &dxd[a]);
                for j in 1..3 {
                    s += dx[a][j] * quad(&dgamma[j][c], &xd, &xd);
                }
                s
            });
            out[4 + 4 * a] = dxd[a][1];
            out[5 + 4 * a] = dxd[a][2];
            out[6 + 4 * a] = -dg[1] - dg[0] * y[2] - gxx[0] * dxd[a][1];
            out[7 + 4 * a] = -dg[2] - dg[0] * y[3] - gxx[0] * dxd[a][2];
        }
        let nn = -quad(&jet.g, &xd, &xd);
        // null rays keep rho = 0; their null condition only drifts at the
        // integrator's truncation level
        let rp = if self.null {
            0.0
        } else if nn > -1e-10 * (1.0 + y[2] * y[2] + y[3] * y[3]) {
            nn.max(0.0).sqrt()
        } else {
            f64::NAN
        };
        if !rp.is_finite() {
            return Err(DescentError::StepFailure { at: tau });
        }
        out[12] = rp;
        // log_ta has no meaning on (numerically) null rays
        out[13] = if tau <= self.floor || y[12] <= 0.0 || rp <= 1e-6 {
            0.0
        } else {
            let (trk, _, _) = div_b(&jet.g, &jet.dg, &gamma, &xd, &dx, &dxd);
            rp * (1.0 / y[12] - 0.5 * trk)
        };
        Ok(out)
    }
}

fn rk4(rhs: &RayRhs, tau: f64, y: &[f64; NY], h: f64) -> Result<[f64; NY]> {
    let k1 = rhs.eval(tau, y)?;
    let mut t = *y;
    for i in 0..NY {
        t[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = rhs.eval(tau + 0.5 * h, &t)?;
    for i in 0..NY {
        t[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = rhs.eval(tau + 0.5 * h, &t)?;
    for i in 0..NY {
        t[i] = y[i] + h * k3[i];
    }
    let k4 = rhs.eval(tau + h, &t)?;
    let mut out = *y;
    for i in 0..NY {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// Step from `tau` toward `target`. Steps grow geometrically from the
/// vertex, where the RK4 stages resolve the `1/rho - tr k / 2` cancellation
/// of the kernel rate only to first order, and are uniform beyond.
fn graded_step(tau: f64, target: f64, h_max: f64) -> f64 {
    let h = (0.05 * tau).clamp(1e-6 * h_max, h_max);
    let left = target - tau;
    if left <= h {
        left
    } else if left < 2.0 * h && h == h_max {
        0.5 * left
    } else {
        h
    }
}

/// Traces the ray with initial coordinate velocity `w` (`|w| <= 1`; the
/// unit circle gives null rays) and returns its state at each requested tau.
///
/// `taus` must be non-negative and ascending. The step sequence depends on
/// tau only, so results are smooth in `w`.
pub fn trace_ray(
    spec: &MetricSpec,
    frame: &VertexFrame,
    w: [f64; 2],
    taus: &[f64],
    opts: &RayOptions,
) -> Result<Vec<RayState>> {
    let (out, err) = trace_ray_partial(spec, frame, w, taus, opts);
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Like [`trace_ray`], but returns the samples reached before a failure
/// together with the failure.
pub fn trace_ray_partial(
    spec: &MetricSpec,
    frame: &VertexFrame,
    w: [f64; 2],
    taus: &[f64],
    opts: &RayOptions,
) -> (Vec<RayState>, Option<DescentError>) {
    let u0 = frame.initial_velocity(w);
    let n = frame.lapse;
    let mut y = [0.0; NY];
    y[0] = frame.p[1];
    y[1] = frame.p[2];
    y[2] = u0[0];
    y[3] = u0[1];
    for a in 0..2 {
        y[6 + 4 * a] = n * frame.e[a][0];
        y[7 + 4 * a] = n * frame.e[a][1];
    }
    let span = taus.last().copied().unwrap_or(0.0);
    let rhs = RayRhs { spec, tp: frame.p[0], floor: 1e-12 * span.max(1e-300), null: w[0].hypot(w[1]) >= 1.0 - 1e-12 };
    let mut out = Vec::with_capacity(taus.len());
    let mut tau = 0.0;
    for &target in taus {
        if target < tau {
            return (out, Some(DescentError::Config("ray sample times must ascend".into())));
        }
        while tau < target {
            let h = graded_step(tau, target, opts.h_max);
            match rk4(&rhs, tau, &y, h) {
                Ok(v) => y = v,
                Err(e) => return (out, Some(e)),
            }
            tau = if target - tau <= h { target } else { tau + h };
        }
        tau = target;
        out.push(RayState {
            tau,
            x: [frame.p[0] - tau, y[0], y[1]],
            xd: [-1.0, y[2], y[3]],
            rho: y[12],
            dx: [[0.0, y[4], y[5]], [0.0, y[8], y[9]]],
            dxd: [[0.0, y[6], y[7]], [0.0, y[10], y[11]]],
            log_ta: y[13],
        });
    }
    (out, None)
}

/// Spatial Jacobian `dx/dw` at fixed tau, `m[i][a] = d x^{i+1} / d w_a`.
pub fn ray_jacobian(s: &RayState) -> [[f64; 2]; 2] {
    [[s.dx[0][1], s.dx[1][1]], [s.dx[0][2], s.dx[1][2]]]
}

/// `exp_p(t, V)`: the point where the ray hits `Sigma_t`, and `rho` there.
pub fn exp_map(spec: &MetricSpec, p: &Point, t: f64, dir: &HyperboloidDir) -> Result<(Point, f64)> {
    let frame = VertexFrame::new(spec, p)?;
    let tau = p[0] - t;
    if !(tau > 0.0) {
        return Err(DescentError::NotReached { t });
    }
    let st = trace_ray(spec, &frame, dir.velocity(), &[tau], &RayOptions { h_max: tau / 256.0 })
        .map_err(|e| match e {
            DescentError::DomainExit { .. } => DescentError::NotReached { t },
            other => other,
        })?;
    Ok((st[0].x, st[0].rho))
}

/// Inverse exponential map by damped Newton on the velocity `w`.
pub fn shoot_to_target(spec: &MetricSpec, p: &Point, q: &Point) -> Result<(HyperboloidDir, f64)> {
    let frame = VertexFrame::new(spec, p)?;
    shoot_with_frame(spec, &frame, q, None, &RayOptions { h_max: (p[0] - q[0]).abs() / 128.0 })
        .map(|(w, rho, _)| (HyperboloidDir::from_velocity(w).expect("converged inside the disk"), rho))
}

/// Newton shooting with an optional warm start; returns `(w, rho, state)`.
pub(crate) fn shoot_with_frame(
    spec: &MetricSpec,
    frame: &VertexFrame,
    q: &Point,
    warm: Option<[f64; 2]>,
    opts: &RayOptions,
) -> Result<([f64; 2], f64, RayState)> {
    let tau = frame.p[0] - q[0];
    let fail = |res: f64| DescentError::NoConvergence { target: *q, residual: res };
    if !(tau > 0.0) {
        return Err(fail(f64::INFINITY));
    }
    let mut w = warm.unwrap_or_else(|| {
        // flat guess from the vertex frame
        let d = [q[1] - frame.p[1], q[2] - frame.p[2]];
        let n = frame.lapse;
        let m = [[n * frame.e[0][0], n * frame.e[1][0]], [n * frame.e[0][1], n * frame.e[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [(m[1][1] * d[0] - m[0][1] * d[1]) / (det * tau), (-m[1][0] * d[0] + m[0][0] * d[1]) / (det * tau)]
    });
    let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
    if r >= 0.999 {
        w = [w[0] * 0.99 / r, w[1] * 0.99 / r];
    }
    let scale = 1.0 + q[1].abs() + q[2].abs();
    let eval = |w: [f64; 2]| -> Result<(RayState, [f64; 2])> {
        let s = trace_ray(spec, frame, w, &[tau], opts)?[0];
        Ok((s, [s.x[1] - q[1], s.x[2] - q[2]]))
    };
    let (mut st, mut res) = eval(w).map_err(|_| fail(f64::INFINITY))?;
    let mut rn = res[0].hypot(res[1]);
    for _ in 0..60 {
        if rn <= 1e-13 * scale {
            let wn = w[0].hypot(w[1]);
            if wn >= 1.0 - 1e-10 || !(st.rho > 0.0) {
                return Err(fail(rn));
            }
            return Ok((w, st.rho, st));
        }
        let m = ray_jacobian(&st);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-14 {
            return Err(fail(rn));
        }
        let dw = [
            -(m[1][1] * res[0] - m[0][1] * res[1]) / det,
            -(-m[1][0] * res[0] + m[0][0] * res[1]) / det,
        ];
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..16 {
            let cand = [w[0] + lam * dw[0], w[1] + lam * dw[1]];
            let cn = cand[0].hypot(cand[1]);
            if cn < 1.0 {
                if let Ok((s2, r2)) = eval(cand) {
                    let n2 = r2[0].hypot(r2[1]);
                    if n2 < rn || n2 <= 1e-13 * scale {
                        w = cand;
                        st = s2;
                        res = r2;
                        rn = n2;
                        accepted = true;
                        break;
                    }
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(fail(rn));
        }
    }
    Err(fail(rn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DerivMode, Domain, Family, Shape};

    fn dom() -> Domain {
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
    }

    #[test]
    fn flat_trace_is_straight_with_boost_geometry() {
        let s = MetricSpec::minkowski(dom());
        let p = [1.0, 0.0, 0.0];
        let f = VertexFrame::new(&s, &p).unwrap();
        let chi: f64 = 0.3;
        let d = HyperboloidDir::from_rapidity(chi, 0.0);
        let st = trace_ray(&s, &f, d.velocity(), &[0.25, 0.5], &RayOptions::default()).unwrap();
        assert!((st[1].x[1] - 0.5 * chi.tanh()).abs() < 1e-14);
        assert!((st[1].rho - 0.5 / chi.cosh()).abs() < 1e-14);
        assert!(st[1].log_ta.abs() < 1e-13);
    }

    #[test]
    fn flat_exp_map_on_axis() {
        let s = MetricSpec::minkowski(dom());
        let (q, rho) = exp_map(&s, &[1.0, 0.0, 0.0], 0.25, &HyperboloidDir { v: [1.0, 0.0, 0.0] }).unwrap();
        assert!((q[0] - 0.25).abs() < 1e-15 && q[1].abs() < 1e-15);
        assert!((rho - 0.75).abs() < 1e-14);
    }

    #[test]
    fn flat_shooting_recovers_distance() {
        let s = MetricSpec::minkowski(dom());
        let (_, rho) = shoot_to_target(&s, &[1.0, 0.0, 0.0], &[0.5, 0.3, 0.0]).unwrap();
        assert!((rho - 0.4).abs() < 1e-12);
        assert!(matches!(
            shoot_to_target(&s, &[1.0, 0.0, 0.0], &[0.5, 0.5, 0.0]),
            Err(DescentError::NoConvergence { .. })
        ));
    }

    #[test]
    fn adaptive_integrator_flat_line() {
        let s = MetricSpec::minkowski(dom());
        let path = integrate_geodesic(&s, &[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], 0.0).unwrap();
        let e = path.last();
        assert!(e.x[0].abs() < 1e-13 && e.x[1].abs() < 1e-14);
        assert!((path.proper_length(&s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_lapse_norm_drift() {
        let s = MetricSpec::new(
            Family::PerturbedLapse { eps: 0.1, shape: Shape::Linear },
            dom(),
            DerivMode::Analytic,
        )
        .unwrap();
        let p = [1.0, 0.0, 0.0];
        let f = VertexFrame::new(&s, &p).unwrap();
        let v = f.past_tangent(&HyperboloidDir::from_rapidity(0.4, 1.0));
        let path = integrate_geodesic(&s, &p, &v, 0.0).unwrap();
        assert!(path.norm_drift(&s) < 1e-8);
        assert!((path.affine_norm + 1.0).abs() < 1e-12);
    }
}
