//! Zero-shift metric families `-n^2 dt^2 + g_ij dx^i dx^j` on a (2+1) box,
//! their jets, Christoffel symbols, Riemann tensor and the product lift
//! `g + dz^2` to (3+1).
//!
//! Index convention: `x^0 = t`, spatial indices 1 and 2, and in lifted
//! objects `z` is index 3. Curvature is stored as `riem[b][a][c][d]` for
//! `R_b^a_cd = d_d G^a_bc - d_c G^a_bd + G^a_de G^e_bc - G^a_ce G^e_bd`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DescentError, Result};

/// Spacetime point `(t, x^1, x^2)`.
pub type Point = [f64; 3];

pub type Mat<const D: usize> = [[f64; D]; D];
pub type Tensor3<const D: usize> = [[[f64; D]; D]; D];
pub type Tensor4<const D: usize> = [[[[f64; D]; D]; D]; D];

/// Scalar profile used to perturb the lapse or the conformal factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `1`; a constant lapse is flat space in rescaled time.
    Constant,
    /// `x^1`
    Linear,
    /// `sin x^1`
    Sine,
    /// `exp(-|x - center|^2 / width^2)`
    Gauss { width: f64, center: [f64; 2] },
    /// `sin(x^1) cos(t)`; the only time-dependent profile.
    Ripple,
}

impl Shape {
    /// Value, gradient in `(t, x^1, x^2)` and Hessian.
    pub fn eval(&self, q: &Point) -> (f64, [f64; 3], Mat<3>) {
        let [t, x, y] = *q;
        match *self {
            Shape::Constant => (1.0, [0.0; 3], [[0.0; 3]; 3]),
            Shape::Linear => (x, [0.0, 1.0, 0.0], [[0.0; 3]; 3]),
            Shape::Sine => {
                let (s, c) = x.sin_cos();
                let mut h = [[0.0; 3]; 3];
                h[1][1] = -s;
                (s, [0.0, c, 0.0], h)
            }
            Shape::Gauss { width, center } => {
                let w2 = width * width;
                let dx = [x - center[0], y - center[1]];
                let v = (-(dx[0] * dx[0] + dx[1] * dx[1]) / w2).exp();
                let mut g = [0.0; 3];
                let mut h = [[0.0; 3]; 3];
                for i in 0..2 {
                    g[i + 1] = -2.0 * dx[i] / w2 * v;
                    for j in 0..2 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i + 1][j + 1] = (4.0 * dx[i] * dx[j] / (w2 * w2) - 2.0 * delta / w2) * v;
                    }
                }
                (v, g, h)
            }
            Shape::Ripple => {
                let (sx, cx) = x.sin_cos();
                let (st, ct) = t.sin_cos();
                let mut h = [[0.0; 3]; 3];
                h[0][0] = -sx * ct;
                h[1][1] = -sx * ct;
                h[0][1] = -cx * st;
                h[1][0] = -cx * st;
                (sx * ct, [-sx * st, cx * ct, 0.0], h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Minkowski,
    /// `n = 1 + eps * shape`, `g_ij = delta_ij`.
    PerturbedLapse { eps: f64, shape: Shape },
    /// `n = 1`, `g_ij = exp(2 eps shape) delta_ij`.
    ConformallyFlat { eps: f64, shape: Shape },
}

/// Closed box `[t_min, t_max] x [x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t: [f64; 2],
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Domain {
    pub fn contains(&self, q: &Point, margin: f64) -> bool {
        let r = [self.t, self.x, self.y];
        (0..3).all(|i| q[i] >= r[i][0] - margin && q[i] <= r[i][1] + margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DerivMode {
    Analytic,
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub family: Family,
    pub domain: Domain,
    pub deriv_mode: DerivMode,
}

/// Metric components and derivatives at a point, `D = 3` for spacetime and
/// `D = 4` for the lifted metric.
///
/// `dg[c][a][b] = d_c g_ab`, `d2g[c][d][a][b] = d_c d_d g_ab`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const D: usize> {
    pub point: [f64; D],
    pub g: Mat<D>,
    pub dg: Tensor3<D>,
    pub d2g: Option<Tensor4<D>>,
}

pub type MetricJet = Jet<3>;

/// Christoffel symbols `gamma[c][a][b] = G^c_ab`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection<const D: usize> {
    pub gamma: Tensor3<D>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature<const D: usize> {
    pub riem: Tensor4<D>,
    pub point: [f64; D],
}

/// The product metric `g + dz^2` on `M x R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedMetricJet {
    pub base: MetricJet,
}

impl MetricSpec {
    pub fn new(family: Family, domain: Domain, deriv_mode: DerivMode) -> Result<Self> {
        if let DerivMode::FiniteDifference { h } = deriv_mode {
            if !(h > 0.0) {
                return Err(DescentError::Config(format!("finite-difference step must be positive, got {h}")));
            }
        }
        for i in 0..3 {
            let r = [domain.t, domain.x, domain.y][i];
            if !(r[1] > r[0]) {
                return Err(DescentError::Config(format!("empty domain interval on axis {i}")));
            }
        }
        let spec = MetricSpec { family, domain, deriv_mode };
        // sample the box and check the lapse and spatial metric
        let m = 9;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let f = |r: [f64; 2], k: usize| r[0] + (r[1] - r[0]) * k as f64 / (m - 1) as f64;
                    let q = [f(domain.t, a), f(domain.x, b), f(domain.y, c)];
                    let n = spec.lapse(&q);
                    if !(n > 0.0) {
                        return Err(DescentError::NonpositiveLapse { point: q, lapse: n });
                    }
                    let g = spec.spatial_metric(&q);
                    if !(g[0][0] > 0.0 && g[0][0] * g[1][1] - g[0][1] * g[1][0] > 0.0) {
                        return Err(DescentError::SingularMetric { point: q });
                    }
                }
            }
        }
        Ok(spec)
    }

    pub fn minkowski(domain: Domain) -> Self {
        MetricSpec { family: Family::Minkowski, domain, deriv_mode: DerivMode::Analytic }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.family, Family::Minkowski)
            || matches!(self.family, Family::PerturbedLapse { eps, .. } | Family::ConformallyFlat { eps, .. } if eps == 0.0)
    }

    /// Stable 64-bit digest of the metric description, used to key caches.
    pub fn hash64(&self) -> u64 {
        let text = serde_json::to_string(self).expect("metric spec serializes");
        let digest = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn lapse(&self, q: &Point) -> f64 {
        match self.family {
            Family::PerturbedLapse { eps, shape } => 1.0 + eps * shape.eval(q).0,
            _ => 1.0,
        }
    }

    pub fn spatial_metric(&self, q: &Point) -> [[f64; 2]; 2] {
        match self.family {
            Family::ConformallyFlat { eps, shape } => {
                let f = (2.0 * eps * shape.eval(q).0).exp();
                [[f, 0.0], [0.0, f]]
            }
            _ => [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    fn metric_values(&self, q: &Point) -> Mat<3> {
        let n = self.lapse(q);
        let s = self.spatial_metric(q);
        [[-n * n, 0.0, 0.0], [0.0, s[0][0], s[0][1]], [0.0, s[1][0], s[1][1]]]
    }

    /// Closed-form jet through second order.
    fn analytic_jet(&self, q: &Point) -> MetricJet {
        let mut dg = [[[0.0; 3]; 3]; 3];
        let mut d2g = [[[[0.0; 3]; 3]; 3]; 3];
        let g = self.metric_values(q);
        match self.family {
            Family::Minkowski => {}
            Family::PerturbedLapse { eps, shape } => {
                let (s, ds, hs) = shape.eval(q);
                let n = 1.0 + eps * s;
                for c in 0..3 {
                    dg[c][0][0] = -2.0 * n * eps * ds[c];
                    for d in 0..3 {
                        d2g[c][d][0][0] = -2.0 * (eps * ds[c] * eps * ds[d] + n * eps * hs[c][d]);
                    }
                }
            }
            Family::ConformallyFlat { eps, shape } => {
                let (s, ds, hs) = shape.eval(q);
                let f = (2.0 * eps * s).exp();
                for i in 1..3 {
                    for c in 0..3 {
                        dg[c][i][i] = 2.0 * eps * ds[c] * f;
                        for d in 0..3 {
                            d2g[c][d][i][i] = f * (4.0 * eps * eps * ds[c] * ds[d] + 2.0 * eps * hs[c][d]);
                        }
                    }
                }
            }
        }
        Jet { point: *q, g, dg, d2g: Some(d2g) }
    }

    fn fd_first(&self, q: &Point, h: f64) -> Tensor3<3> {
        let mut dg = [[[0.0; 3]; 3]; 3];
        for c in 0..3 {
            let mut qp = *q;
            let mut qm = *q;
            qp[c] += h;
            qm[c] -= h;
            let gp = self.metric_values(&qp);
            let gm = self.metric_values(&qm);
            for a in 0..3 {
                for b in 0..3 {
                    dg[c][a][b] = (gp[a][b] - gm[a][b]) / (2.0 * h);
                }
            }
        }
        dg
    }

    /// Metric jet at `q`; `order = 2` also fills `d2g`.
    pub fn jet(&self, q: &Point, order: u8) -> Result<MetricJet> {
        let stencil = match self.deriv_mode {
            DerivMode::Analytic => 0.0,
            DerivMode::FiniteDifference { h } => 2.0 * h,
        };
        if !self.domain.contains(q, stencil) || q.iter().any(|v| !v.is_finite()) {
            return Err(DescentError::OutOfDomain { point: *q });
        }
        let n = self.lapse(q);
        if !(n > 0.0) {
            return Err(DescentError::NonpositiveLapse { point: *q, lapse: n });
        }
        let mut jet = match self.deriv_mode {
            DerivMode::Analytic => self.analytic_jet(q),
            DerivMode::FiniteDifference { h } => {
                let dg = self.fd_first(q, h);
                let mut d2g = [[[[0.0; 3]; 3]; 3]; 3];
                for d in 0..3 {
                    let mut qp = *q;
                    let mut qm = *q;
                    qp[d] += h;
                    qm[d] -= h;
                    let dp = self.fd_first(&qp, h);
                    let dm = self.fd_first(&qm, h);
                    for c in 0..3 {
                        for a in 0..3 {
                            for b in 0..3 {
                                d2g[c][d][a][b] = (dp[c][a][b] - dm[c][a][b]) / (2.0 * h);
                            }
                        }
                    }
                }
                Jet { point: *q, g: self.metric_values(q), dg, d2g: Some(d2g) }
            }
        };
        if order < 2 {
            jet.d2g = None;
        }
        Ok(jet)
    }

    /// Unchecked analytic jet for hot loops; callers guarantee the domain.
    pub(crate) fn jet_fast(&self, q: &Point) -> MetricJet {
        match self.deriv_mode {
            DerivMode::Analytic => self.analytic_jet(q),
            DerivMode::FiniteDifference { .. } => self.jet(q, 2).unwrap_or_else(|_| self.analytic_jet(q)),
        }
    }
}

/// Free-function form of [`MetricSpec::jet`].
pub fn metric_jet(spec: &MetricSpec, q: &Point, order: u8) -> Result<MetricJet> {
    spec.jet(q, order)
}

pub fn inverse<const D: usize>(m: &Mat<D>) -> Option<Mat<D>> {
    let a = DMatrix::<f64>::from_fn(D, D, |i, j| m[i][j]);
    // reject ill-conditioned metrics before inverting
    let sv = a.clone().singular_values();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    if !(lo > 0.0) || hi / lo > 1e12 {
        return None;
    }
    let inv = a.try_inverse()?;
    let mut out = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            out[i][j] = inv[(i, j)];
        }
    }
    Some(out)
}

/// Inverse of the block metric `diag(-n^2, g_ij)`; no conditioning checks.
pub(crate) fn inverse_fast(g: &Mat<3>) -> Mat<3> {
    let det = g[1][1] * g[2][2] - g[1][2] * g[2][1];
    let mut inv = [[0.0; 3]; 3];
    inv[0][0] = 1.0 / g[0][0];
    inv[1][1] = g[2][2] / det;
    inv[2][2] = g[1][1] / det;
    inv[1][2] = -g[1][2] / det;
    inv[2][1] = -g[2][1] / det;
    inv
}

fn lowered<const D: usize>(dg: &Tensor3<D>) -> Tensor3<D> {
    // G_{e,ab} = 1/2 (d_a g_eb + d_b g_ae - d_e g_ab)
    let mut low = [[[0.0; D]; D]; D];
    for e in 0..D {
        for a in 0..D {
            for b in 0..D {
                low[e][a][b] = 0.5 * (dg[a][e][b] + dg[b][a][e] - dg[e][a][b]);
            }
        }
    }
    low
}

fn raise<const D: usize>(ginv: &Mat<D>, low: &Tensor3<D>) -> Tensor3<D> {
    let mut gamma = [[[0.0; D]; D]; D];
    for c in 0..D {
        for a in 0..D {
            for b in a..D {
                let mut s = 0.0;
                for e in 0..D {
                    s += ginv[c][e] * low[e][a][b];
                }
                gamma[c][a][b] = s;
                gamma[c][b][a] = s;
            }
        }
    }
    gamma
}

/// `G^a_bc = 1/2 g^{ae} (d_b g_ec + d_c g_be - d_e g_bc)`.
pub fn christoffel<const D: usize>(jet: &Jet<D>) -> Result<Connection<D>> {
    let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric {
        point: std::array::from_fn(|i| if i < 3 { jet.point[i] } else { 0.0 }),
    })?;
    Ok(Connection { gamma: raise(&ginv, &lowered(&jet.dg)) })
}

/// Christoffel symbols and their first derivatives, `dgamma[m][c][a][b] = d_m G^c_ab`.
pub fn christoffel_with_derivatives<const D: usize>(
    ginv: &Mat<D>,
    jet: &Jet<D>,
) -> Option<(Tensor3<D>, Tensor4<D>)> {
    let d2g = jet.d2g.as_ref()?;
    let low = lowered(&jet.dg);
    let gamma = raise(ginv, &low);
    let mut dgamma = [[[[0.0; D]; D]; D]; D];
    for m in 0..D {
        // d_m g^{ce} = -g^{cu} d_m g_uv g^{ve}
        let mut dginv = [[0.0; D]; D];
        for c in 0..D {
            for e in 0..D {
                let mut s = 0.0;
                for u in 0..D {
                    for v in 0..D {
                        s -= ginv[c][u] * jet.dg[m][u][v] * ginv[v][e];
                    }
                }
                dginv[c][e] = s;
            }
        }
        for c in 0..D {
            for a in 0..D {
                for b in a..D {
                    let mut s = 0.0;
                    for e in 0..D {
                        let dlow = 0.5 * (d2g[m][a][e][b] + d2g[m][b][a][e] - d2g[m][e][a][b]);
                        s += dginv[c][e] * low[e][a][b] + ginv[c][e] * dlow;
                    }
                    dgamma[m][c][a][b] = s;
                    dgamma[m][c][b][a] = s;
                }
            }
        }
    }
    Some((gamma, dgamma))
}

/// Coordinate Riemann tensor from `G` and `dG` in the layout of [`Curvature`].
pub fn riemann_from<const D: usize>(gamma: &Tensor3<D>, dgamma: &Tensor4<D>) -> Tensor4<D> {
    let mut r = [[[[0.0; D]; D]; D]; D];
    for b in 0..D {
        for a in 0..D {
            for c in 0..D {
                for d in 0..D {
                    let mut s = dgamma[d][a][b][c] - dgamma[c][a][b][d];
                    for e in 0..D {
                        s += gamma[a][d][e] * gamma[e][b][c] - gamma[a][c][e] * gamma[e][b][d];
                    }
                    r[b][a][c][d] = s;
                }
            }
        }
    }
    r
}

/// Riemann tensor at `q`. Uses the closed-form second derivatives when the
/// spec is analytic, central differences of the Christoffel symbols
/// otherwise.
pub fn riemann(spec: &MetricSpec, q: &Point) -> Result<Curvature<3>> {
    match spec.deriv_mode {
        DerivMode::Analytic => {
            let jet = spec.jet(q, 2)?;
            let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric { point: *q })?;
            let (gamma, dgamma) = christoffel_with_derivatives(&ginv, &jet).expect("order-2 jet");
            Ok(Curvature { riem: riemann_from(&gamma, &dgamma), point: *q })
        }
        DerivMode::FiniteDifference { h } => riemann_fd(spec, q, h),
    }
}

/// Riemann tensor with `dG` from central differences of step `h`.
pub fn riemann_fd(spec: &MetricSpec, q: &Point, h: f64) -> Result<Curvature<3>> {
    // stencil must stay interior
    if !spec.domain.contains(q, -2.0 * h) {
        return Err(DescentError::OutOfDomain { point: *q });
    }
    let gamma = christoffel(&spec.jet(q, 1)?)?.gamma;
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for m in 0..3 {
        let mut qp = *q;
        let mut qm = *q;
        qp[m] += h;
        qm[m] -= h;
        let gp = christoffel(&spec.jet(&qp, 1)?)?.gamma;
        let gm = christoffel(&spec.jet(&qm, 1)?)?.gamma;
        for c in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    dgamma[m][c][a][b] = (gp[c][a][b] - gm[c][a][b]) / (2.0 * h);
                }
            }
        }
    }
    Ok(Curvature { riem: riemann_from(&gamma, &dgamma), point: *q })
}

impl<const D: usize> Curvature<D> {
    /// `R_bd = R_b^a_da` (trace over the upper and last index).
    pub fn ricci(&self) -> Mat<D> {
        let mut ric = [[0.0; D]; D];
        for b in 0..D {
            for d in 0..D {
                let mut s = 0.0;
                for a in 0..D {
                    s += self.riem[b][a][d][a];
                }
                ric[b][d] = s;
            }
        }
        ric
    }

    /// `R_b^a_XY` for vectors X, Y.
    pub fn contract_last(&self, x: &[f64; D], y: &[f64; D]) -> Mat<D> {
        let mut out = [[0.0; D]; D];
        for b in 0..D {
            for a in 0..D {
                let mut s = 0.0;
                for c in 0..D {
                    for d in 0..D {
                        s += self.riem[b][a][c][d] * x[c] * y[d];
                    }
                }
                out[b][a] = s;
            }
        }
        out
    }
}

/// Lifts a spacetime jet to `g + dz^2`.
pub fn lift(jet: &MetricJet) -> LiftedMetricJet {
    LiftedMetricJet { base: *jet }
}

impl LiftedMetricJet {
    /// The 4x4 jet with `z` as index 3; every z slot is exactly constant.
    pub fn to_jet(&self) -> Jet<4> {
        let b = &self.base;
        let mut g = [[0.0; 4]; 4];
        let mut dg = [[[0.0; 4]; 4]; 4];
        let mut d2g = b.d2g.map(|_| [[[[0.0; 4]; 4]; 4]; 4]);
        g[3][3] = 1.0;
        for a in 0..3 {
            for c in 0..3 {
                g[a][c] = b.g[a][c];
                for m in 0..3 {
                    dg[m][a][c] = b.dg[m][a][c];
                    if let (Some(out), Some(src)) = (d2g.as_mut(), b.d2g.as_ref()) {
                        for k in 0..3 {
                            out[m][k][a][c] = src[m][k][a][c];
                        }
                    }
                }
            }
        }
        Jet { point: [b.point[0], b.point[1], b.point[2], 0.0], g, dg, d2g }
    }

    pub fn christoffel(&self) -> Result<Connection<4>> {
        christoffel(&self.to_jet())
    }

    /// Lifted curvature; needs an order-2 base jet.
    pub fn riemann(&self) -> Result<Curvature<4>> {
        let jet = self.to_jet();
        let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric { point: self.base.point })?;
        let (gamma, dgamma) = christoffel_with_derivatives(&ginv, &jet)
            .ok_or_else(|| DescentError::Config("lifted curvature needs an order-2 jet".into()))?;
        Ok(Curvature { riem: riemann_from(&gamma, &dgamma), point: jet.point })
    }
}

/// `(R*phi)_I = sum_i R_{mu_i}^a_{TN} phi_{mu_1..a..mu_l}` for a rank-`l`
/// covariant tensor stored row-major in `phi` (length `3^l`).
pub fn curvature_star_phi(
    curv: &Curvature<3>,
    t: &[f64; 3],
    n: &[f64; 3],
    rank: usize,
    phi: &[f64],
) -> Result<Vec<f64>> {
    let len = 3usize.pow(rank as u32);
    if phi.len() != len {
        return Err(DescentError::RankMismatch { expected: len, got: phi.len() });
    }
    if rank == 0 {
        return Ok(vec![0.0]);
    }
    let rtn = curv.contract_last(t, n);
    let mut out = vec![0.0; len];
    for (flat, o) in out.iter_mut().enumerate() {
        let idx = unflatten(flat, rank);
        let mut s = 0.0;
        for slot in 0..rank {
            for a in 0..3 {
                let mut j = idx.clone();
                j[slot] = a;
                s += rtn[idx[slot]][a] * phi[flatten(&j)];
            }
        }
        *o = s;
    }
    Ok(out)
}

fn unflatten(mut k: usize, rank: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = k % 3;
        k /= 3;
    }
    idx
}

fn flatten(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 3 + i)
}

/// `g(u, v)` for a 3x3 or 4x4 metric.
pub fn dot<const D: usize>(g: &Mat<D>, u: &[f64; D], v: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for a in 0..D {
        for b in 0..D {
            s += g[a][b] * u[a] * v[b];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> Domain {
        Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
    }

    fn spec(family: Family) -> MetricSpec {
        MetricSpec::new(family, dom(), DerivMode::Analytic).unwrap()
    }

    #[test]
    fn minkowski_jet_is_exact() {
        let s = MetricSpec::minkowski(dom());
        let j = s.jet(&[0.5, 0.1, -0.2], 2).unwrap();
        assert_eq!(j.g, [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(j.dg.iter().flatten().flatten().all(|v| *v == 0.0));
        let gam = christoffel(&j).unwrap();
        assert!(gam.gamma.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_lapse_jet_and_christoffel() {
        let s = spec(Family::PerturbedLapse { eps: 0.1, shape: Shape::Linear });
        let q = [0.0, 0.0, 0.0];
        let j = s.jet(&q, 1).unwrap();
        assert_eq!(j.g[0][0], -1.0);
        assert!((j.dg[1][0][0] + 0.2).abs() < 1e-15);
        // central-difference cross-check of d_1 g_00
        let h = 1e-4;
        let fd = (s.jet(&[0.0, h, 0.0], 1).unwrap().g[0][0] - s.jet(&[0.0, -h, 0.0], 1).unwrap().g[0][0]) / (2.0 * h);
        assert!((fd + 0.2).abs() < 1e-9);
        let gam = christoffel(&j).unwrap().gamma;
        assert!((gam[0][0][1] - 0.1).abs() < 1e-15);
        assert!((gam[1][0][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn conformal_sine_value() {
        let s = spec(Family::ConformallyFlat { eps: 0.05, shape: Shape::Sine });
        let j = s.jet(&[0.0, std::f64::consts::FRAC_PI_2, 0.0], 1).unwrap();
        assert!((j.g[1][1] - (0.1f64).exp()).abs() < 1e-14);
        assert!((j.g[1][1] - 1.10517).abs() < 1e-5);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let s = MetricSpec::minkowski(dom());
        assert!(matches!(s.jet(&[5.0, 0.0, 0.0], 1), Err(DescentError::OutOfDomain { .. })));
    }

    #[test]
    fn nonpositive_lapse_is_rejected() {
        let e = MetricSpec::new(
            Family::PerturbedLapse { eps: 1.0, shape: Shape::Linear },
            dom(),
            DerivMode::Analytic,
        );
        assert!(matches!(e, Err(DescentError::NonpositiveLapse { .. })));
    }

    #[test]
    fn lift_splits_christoffel_symbols() {
        let s = spec(Family::ConformallyFlat { eps: 0.2, shape: Shape::Ripple });
        let j = s.jet(&[0.3, 0.4, -0.1], 2).unwrap();
        let l = lift(&j);
        let lj = l.to_jet();
        assert_eq!(lj.g[3][3], 1.0);
        for a in 0..3 {
            assert_eq!(lj.g[3][a], 0.0);
            assert_eq!(lj.dg[3][a][a], 0.0);
        }
        let g3 = christoffel(&j).unwrap().gamma;
        let g4 = l.christoffel().unwrap().gamma;
        for c in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    if c == 3 || a == 3 || b == 3 {
                        assert_eq!(g4[c][a][b], 0.0);
                    } else {
                        assert!((g4[c][a][b] - g3[c][a][b]).abs() <= 1e-14 * (1.0 + g3[c][a][b].abs()));
                    }
                }
            }
        }
        let r4 = l.riemann().unwrap();
        for b in 0..4 {
            for a in 0..4 {
                for c in 0..4 {
                    assert_eq!(r4.riem[b][a][3][c], 0.0);
                }
            }
        }
    }

    #[test]
    fn star_phi_rank_zero_and_mismatch() {
        let c = Curvature { riem: [[[[0.3; 3]; 3]; 3]; 3], point: [0.0; 3] };
        assert_eq!(curvature_star_phi(&c, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 0, &[2.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            curvature_star_phi(&c, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 1, &[1.0]),
            Err(DescentError::RankMismatch { .. })
        ));
    }
}
