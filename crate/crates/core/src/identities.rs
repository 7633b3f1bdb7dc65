//! Residual checks of the frame and connection identities, each side
//! computed along an independent path, and the vertex limits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::frames::{cone_sample, five_point, mu_bar_minus, Caps, ConeSample};
use crate::geodesic::{shoot_with_frame, trace_ray, HyperboloidDir, RayOptions, VertexFrame};
use crate::metric::{dot, lift, MetricSpec, Point, Tensor3};
use crate::quadrature::gauss_legendre;
use crate::rho_field::RhoField;

/// Identity names, in report order.
pub const IDENTITY_IDS: [&str; 16] = [
    "zetabar_dbt",
    "omega_dbt",
    "b_inv_transport",
    "log_a_circle",
    "dtn_e",
    "llogb",
    "area_exp",
    "chib",
    "expansion_sum",
    "pi_nn_lift",
    "omega_lift",
    "torsion",
    "chibar_closed",
    "mubar",
    "raychaudhuri",
    "curvature_lift",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityOptions {
    /// RK4 step is `span / resolution`.
    pub resolution: usize,
    /// `p_t - t0`, fixing the step `h`.
    pub span: f64,
    /// Differencing step relative to `tau`; [`IdentityOptions::new`] ties it
    /// to the resolution so refinement shrinks both steps.
    pub rel_step: f64,
    pub caps: Caps,
}

impl IdentityOptions {
    pub fn new(span: f64, resolution: usize) -> Self {
        IdentityOptions { resolution, span, rel_step: 0.16 / resolution as f64, caps: Caps { rho: 0.1 * span, r_tilde: 0.05 * span } }
    }
}

/// A point of the past cone given by its ray: initial velocity and depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayPoint {
    pub w: [f64; 2],
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub identity: String,
    pub point: Point,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub records: Vec<IdentityRecord>,
    /// Points where the stencil could not be placed, with the reason.
    pub failures: Vec<(RayPoint, String)>,
}

impl IdentityReport {
    pub fn max_residuals(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            let e = m.entry(r.identity.clone()).or_insert(0.0f64);
            *e = e.max(r.residual);
        }
        m
    }

    pub fn worst(&self) -> f64 {
        self.records.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| DescentError::Io(e.to_string()))?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| DescentError::Io(e.to_string()))?;
        w.write_record(["identity", "t", "x", "y", "lhs", "rhs", "residual"]).map_err(|e| DescentError::Io(e.to_string()))?;
        for r in &self.records {
            w.write_record([
                r.identity.clone(),
                r.point[0].to_string(),
                r.point[1].to_string(),
                r.point[2].to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.residual.to_string(),
            ])
            .map_err(|e| DescentError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn relative_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs())
}

type V4 = [f64; 4];

fn dot4(g: &[[f64; 3]; 3], u: &V4, v: &V4) -> f64 {
    dot(g, &[u[0], u[1], u[2]], &[v[0], v[1], v[2]]) + u[3] * v[3]
}

/// Lifted frame at one sample.
struct Lifted {
    l: V4,
    lb: V4,
    e: V4,
    ee: V4,
    nt: V4,
    t: V4,
}

fn lifted(c: &ConeSample) -> Lifted {
    let f = &c.frame;
    let al = 1.0 / f.a_tilde_inv;
    let v = |x: &[f64; 3], z: f64, s: f64| [s * x[0], s * x[1], s * x[2], s * z];
    Lifted {
        l: v(&f.b, 1.0, al),
        lb: v(&f.bbar, -1.0, al),
        e: v(&f.e, 0.0, 1.0),
        ee: [-al * f.n[0], -al * f.n[1], -al * f.n[2], al * f.a_inv],
        nt: [al * f.a_inv * f.n[0], al * f.a_inv * f.n[1], al * f.a_inv * f.n[2], al],
        t: v(&f.t, 0.0, 1.0),
    }
}

/// Ray samples around one point: the center ray and two pairs of neighbor
/// rays on each side, each sampled at five depths.
struct Stencil {
    /// `rays[0]` is the center ray; `rays[1 + 4 d + i]` is offset `[-2,-1,1,2][i] s` along `dirs[d]`.
    rays: Vec<[ConeSample; 5]>,
    delta: f64,
    s: f64,
    dirs: [[f64; 2]; 2],
    gamma4: Vec<Tensor3<4>>,
}

const OFFS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// Across-ray step relative to the depth step.
const ACROSS: f64 = 0.25;

impl Stencil {
    fn build(spec: &MetricSpec, vf: &VertexFrame, pt: &RayPoint, opts: &IdentityOptions) -> Result<Self> {
        let delta = opts.rel_step * pt.tau;
        let taus: Vec<f64> = (0..5).map(|k| pt.tau + (k as f64 - 2.0) * delta).collect();
        let ro = RayOptions { h_max: opts.span / opts.resolution as f64 };
        let run = |w: [f64; 2], caps: &Caps| -> Result<[ConeSample; 5]> {
            let sts = trace_ray(spec, vf, w, &taus, &ro)?;
            let v: Vec<ConeSample> = sts.iter().map(|s| cone_sample(spec, vf, s, caps)).collect::<Result<_>>()?;
            v.try_into().map_err(|_| DescentError::InsufficientSamples)
        };
        let center = run(pt.w, &opts.caps)?;
        let c = &center[2];
        let inv = |y: &[f64; 3]| -> [f64; 2] {
            let j = &c.jac;
            [(j[1][1] * y[1] - j[0][1] * y[2]) / c.jac_det, (-j[1][0] * y[1] + j[0][0] * y[2]) / c.jac_det]
        };
        let dirs = [inv(&c.frame.n), inv(&c.frame.e)];
        let wn = pt.w[0].hypot(pt.w[1]);
        let mut s = ACROSS * delta;
        for d in &dirs {
            let len = d[0].hypot(d[1]);
            s = s.min(0.1 * (1.0 - wn) / len.max(1e-300));
        }
        let mut rays = vec![center];
        for d in &dirs {
            for o in OFFS {
                rays.push(run([pt.w[0] + o * s * d[0], pt.w[1] + o * s * d[1]], &Caps::default())?);
            }
        }
        let gamma4 = (0..5)
            .map(|k| {
                let jet = spec.jet(&rays[0][k].frame.point, 2)?;
                Ok(lift(&jet).christoffel()?.gamma)
            })
            .collect::<Result<_>>()?;
        Ok(Stencil { rays, delta, s, dirs, gamma4 })
    }

    fn c(&self, k: usize) -> &ConeSample {
        &self.rays[0][k]
    }

    fn rp(&self) -> f64 {
        let c = self.c(2);
        (-dot(&c.g, &c.state.xd, &c.state.xd)).sqrt()
    }

    /// `B(f)` at the center.
    fn along(&self, f: &dyn Fn(&ConeSample) -> f64) -> f64 {
        let v: [f64; 5] = std::array::from_fn(|k| f(&self.rays[0][k]));
        five_point(&v, self.delta) / self.rp()
    }

    /// Derivative along the spatial vector `M(k) dirs[d]` at depth `k`.
    fn across(&self, f: &dyn Fn(&ConeSample) -> f64, k: usize, d: usize) -> f64 {
        let r = |i: usize| f(&self.rays[1 + 4 * d + i][k]);
        five_point(&[r(0), r(1), f(&self.rays[0][k]), r(2), r(3)], self.s)
    }

    /// `X(f)` at depth `k`; a time component of `X` is only allowed at the center.
    fn deriv(&self, f: &dyn Fn(&ConeSample) -> f64, k: usize, x: &[f64; 3]) -> f64 {
        let c = self.c(k);
        let lam = x[0] / c.frame.b[0];
        let y = [0.0, x[1] - lam * c.frame.b[1], x[2] - lam * c.frame.b[2]];
        let mut out = 0.0;
        if lam != 0.0 {
            assert_eq!(k, 2, "time derivatives only at the center");
            out += lam * self.along(f);
        }
        // spatial basis Y_d = M dirs[d]
        let j = &c.jac;
        let yv: [[f64; 2]; 2] = std::array::from_fn(|d| {
            [j[0][0] * self.dirs[d][0] + j[0][1] * self.dirs[d][1], j[1][0] * self.dirs[d][0] + j[1][1] * self.dirs[d][1]]
        });
        let det = yv[0][0] * yv[1][1] - yv[1][0] * yv[0][1];
        let a = (y[1] * yv[1][1] - y[2] * yv[1][0]) / det;
        let b = (yv[0][0] * y[2] - yv[0][1] * y[1]) / det;
        if a != 0.0 {
            out += a * self.across(f, k, 0);
        }
        if b != 0.0 {
            out += b * self.across(f, k, 1);
        }
        out
    }

    /// `D_X V` in (M, g).
    fn cov3(&self, v: &dyn Fn(&ConeSample) -> [f64; 3], k: usize, x: &[f64; 3]) -> [f64; 3] {
        let dv: [f64; 3] = std::array::from_fn(|m| self.deriv(&|c| v(c)[m], k, x));
        crate::frames::covariant(&self.c(k).gamma, x, &v(self.c(k)), &dv)
    }

    /// `D~_X V` in the lifted spacetime; fields do not depend on `z`.
    fn cov4(&self, v: &dyn Fn(&ConeSample) -> V4, k: usize, x: &V4) -> V4 {
        let x3 = [x[0], x[1], x[2]];
        let v0 = v(self.c(k));
        let g = &self.gamma4[k];
        std::array::from_fn(|m| {
            let mut s = self.deriv(&|c| v(c)[m], k, &x3);
            for a in 0..4 {
                for b in 0..4 {
                    s += g[m][a][b] * x[a] * v0[b];
                }
            }
            s
        })
    }

    fn tr_chi(&self, k: usize) -> f64 {
        let lf = lifted(self.c(k));
        let g = &self.c(k).g;
        [lf.e, lf.ee].iter().map(|cv| dot4(g, &self.cov4(&|c| lifted(c).l, k, cv), cv)).sum()
    }

    fn tr_chibar(&self, k: usize) -> f64 {
        let lf = lifted(self.c(k));
        let g = &self.c(k).g;
        [lf.e, lf.ee].iter().map(|cv| dot4(g, &self.cov4(&|c| lifted(c).lb, k, cv), cv)).sum()
    }

    fn tr_pi_tilde(&self, k: usize) -> f64 {
        let lf = lifted(self.c(k));
        let g = &self.c(k).g;
        -[lf.e, lf.ee].iter().map(|cv| dot4(g, &self.cov4(&|c| lifted(c).t, k, cv), cv)).sum::<f64>()
    }
}

/// Evaluates all identities at one point; returns `(id, lhs, rhs, residual)`.
fn identities_at(spec: &MetricSpec, st: &Stencil) -> Result<Vec<(&'static str, f64, f64, f64)>> {
    let c = st.c(2);
    let f = &c.frame;
    let co = &c.coeffs;
    let g = &c.g;
    let al = 1.0 / f.a_tilde_inv;
    let bt = f.b_inv * f.tau;
    let mut out = Vec::with_capacity(16);
    let mut push = |id: &'static str, l: f64, r: f64| out.push((id, l, r, relative_residual(l, r)));

    let dbn = st.cov3(&|c| c.frame.nbar, 2, &f.b);
    push("zetabar_dbt", dot(g, &dbn, &f.e), co.zetabar);
    let omega_fd = -st.along(&|c| 1.0 / c.frame.a_tilde_inv);
    push("omega_dbt", omega_fd, co.omega);
    push(
        "b_inv_transport",
        st.along(&|c| c.frame.b_inv),
        f.b_inv / f.rho * (1.0 - f.b_inv / f.lapse) + f.b_inv * f.b_inv * f.tau / f.rho * co.omega,
    );
    push("log_a_circle", -st.deriv(&|c| c.frame.a_inv.ln(), 2, &f.e), bt / f.r_tilde * (co.pi_na - co.k_a_nbar));
    let dtn = st.cov3(&|c| c.frame.n, 2, &f.t);
    push("dtn_e", dot(g, &dtn, &f.e), co.k_nbar_a + bt / f.r_tilde * dot(g, &c.d_t_t, &f.e));
    push("llogb", -al * st.along(&|c| c.frame.b_inv.ln()), (1.0 / f.lapse - 1.0 / f.b_inv) / f.tau - co.omega);

    let lf = lifted(c);
    let tr_chi = st.tr_chi(2);
    let tr_chibar = st.tr_chibar(2);
    let tr_pit = st.tr_pi_tilde(2);
    push("area_exp", tr_chi, al * co.tr_k);
    push("chib", tr_pit, co.pi_combo);
    push("expansion_sum", tr_chibar + tr_chi, 2.0 * tr_pit);
    let dnt = st.cov4(&|c| lifted(c).t, 2, &lf.nt);
    push("pi_nn_lift", -dot4(g, &dnt, &lf.nt), f.r_tilde * f.r_tilde / (bt * bt) * co.pi_nn);
    let dllb = st.cov4(&|c| lifted(c).lb, 2, &lf.l);
    push("omega_lift", -0.5 * dot4(g, &dllb, &lf.l), co.omega);
    {
        // spatial-spacetime components of zeta~ = 1/2 sum_C g(D_L Lb, C) C
        let z: [f64; 3] = std::array::from_fn(|m| {
            0.5 * (dot4(g, &dllb, &lf.e) * lf.e[m] + dot4(g, &dllb, &lf.ee) * lf.ee[m])
        });
        let r: [f64; 3] = std::array::from_fn(|m| {
            -f.r_tilde / bt * co.zetabar * f.e[m] - f.rho * f.rho / (bt * f.r_tilde) * co.omega * f.n[m]
        });
        let m = (0..3).max_by(|&a, &b| (z[a] - r[a]).abs().total_cmp(&(z[b] - r[b]).abs())).unwrap();
        push("torsion", z[m], r[m]);
    }
    push("chibar_closed", tr_chibar, -al * co.tr_k + 2.0 * co.pi_combo);
    {
        let chib: [f64; 5] = std::array::from_fn(|k| st.tr_chibar(k));
        let l_chib = al * five_point(&chib, st.delta) / st.rp();
        let mu_bar = l_chib + 0.5 * tr_chi * tr_chibar;
        let bp = st.along(&|c| c.coeffs.pi_combo);
        push("mubar", mu_bar - co.omega * tr_chibar, mu_bar_minus(co, f, bp));
    }
    push("raychaudhuri", st.along(&|c| c.coeffs.tr_k) + 0.5 * co.tr_k * co.tr_k, -co.r_bb - co.k_hat_sq);
    {
        let r4 = lift(&spec.jet(&f.point, 2)?).riemann()?;
        let r3 = &c.curvature.riem;
        let (mut worst, mut pair) = (-1.0, (0.0, 0.0));
        for b in 0..3 {
            for a in 0..3 {
                let mut l = 0.0;
                for u in 0..4 {
                    for v in 0..4 {
                        l += 0.5 * r4.riem[b][a][u][v] * lf.l[u] * lf.lb[v];
                    }
                }
                let mut r = 0.0;
                for u in 0..3 {
                    for v in 0..3 {
                        r += f.r_tilde / bt * r3[b][a][u][v] * f.t[u] * f.n[v];
                    }
                }
                if (l - r).abs() > worst {
                    worst = (l - r).abs();
                    pair = (l, r);
                }
            }
        }
        push("curvature_lift", pair.0, pair.1);
    }
    Ok(out)
}

/// Runs the identity suite at each ray point.
pub fn verify_identities_rays(
    spec: &MetricSpec,
    p: &Point,
    points: &[RayPoint],
    opts: &IdentityOptions,
) -> Result<IdentityReport> {
    let vf = VertexFrame::new(spec, p)?;
    let mut rep = IdentityReport::default();
    for pt in points {
        match Stencil::build(spec, &vf, pt, opts).and_then(|s| {
            let q = s.c(2).frame.point;
            identities_at(spec, &s).map(|v| (q, v))
        }) {
            Ok((q, v)) => {
                for (id, lhs, rhs, residual) in v {
                    rep.records.push(IdentityRecord { identity: id.to_string(), point: q, lhs, rhs, residual });
                }
            }
            Err(e) => rep.failures.push((*pt, e.to_string())),
        }
    }
    Ok(rep)
}

/// Runs the identity suite at spacetime points of the past of the field's
/// vertex, locating each point's ray by shooting.
pub fn verify_identities(
    spec: &MetricSpec,
    field: &RhoField,
    qs: &[Point],
    opts: &IdentityOptions,
) -> Result<IdentityReport> {
    let vf = VertexFrame::new(spec, &field.vertex)?;
    let mut rays = Vec::with_capacity(qs.len());
    let mut fails = Vec::new();
    for q in qs {
        let tau = field.vertex[0] - q[0];
        let ro = RayOptions { h_max: opts.span / opts.resolution as f64 };
        match shoot_with_frame(spec, &vf, q, field.nearest_velocity(q), &ro) {
            Ok((w, _, _)) => rays.push(RayPoint { w, tau }),
            Err(e) => fails.push((RayPoint { w: [f64::NAN; 2], tau }, e.to_string())),
        }
    }
    let mut rep = verify_identities_rays(spec, &field.vertex, &rays, opts)?;
    rep.failures.extend(fails);
    Ok(rep)
}

/// Random ray points with `rho > caps.rho` and `r~ > caps.r_tilde`, drawn
/// with `|w| <= 0.9` and `tau` in `[0.2, 0.95] span`.
pub fn random_ray_points(
    spec: &MetricSpec,
    p: &Point,
    span: f64,
    count: usize,
    seed: u64,
    caps: &Caps,
) -> Result<Vec<RayPoint>> {
    let vf = VertexFrame::new(spec, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 50 * count + 100 {
            return Err(DescentError::InsufficientSamples);
        }
        let r = 0.9 * rng.gen::<f64>().sqrt();
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        let tau = span * rng.gen_range(0.2..0.95);
        let w = [r * th.cos(), r * th.sin()];
        let Ok(st) = trace_ray(spec, &vf, w, &[tau], &RayOptions { h_max: span / 64.0 }) else { continue };
        if cone_sample(spec, &vf, &st[0], caps).is_ok() {
            out.push(RayPoint { w, tau });
        }
    }
    Ok(out)
}

/// Max residual per identity at each resolution.
pub fn convergence_study(
    spec: &MetricSpec,
    p: &Point,
    points: &[RayPoint],
    span: f64,
    resolutions: &[usize],
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &res in resolutions {
        let rep = verify_identities_rays(spec, p, points, &IdentityOptions::new(span, res))?;
        if !rep.failures.is_empty() {
            return Err(DescentError::InsufficientSamples);
        }
        for (k, v) in rep.max_residuals() {
            out.entry(k).or_default().push(v);
        }
    }
    Ok(out)
}

/// Residuals below this are treated as converged to roundoff when judging
/// refinement ratios.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;

/// Whether each successive refinement reduced the residual by at least
/// `min_ratio`, ignoring steps that start below [`ROUNDOFF_FLOOR`].
pub fn converges(seq: &[f64], min_ratio: f64) -> bool {
    seq.windows(2).all(|w| w[0] < ROUNDOFF_FLOOR || w[0] / w[1].max(1e-300) >= min_ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub values: Vec<f64>,
    pub limit: f64,
    /// Observed order in `tau`; `NaN` when the sequence is already constant.
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexLimitReport {
    pub taus: Vec<f64>,
    pub rho_tr_k: Limit,
    pub b: Limit,
    /// `|S_t| / (4 pi n(p)^2 tau^2)`.
    pub area_ratio: Limit,
    pub expected_b: f64,
}

/// Richardson limit of a sequence sampled at geometrically decreasing `tau`
/// with ratio `q`.
pub fn richardson(values: &[f64], q: f64) -> Result<Limit> {
    let n = values.len();
    if n < 3 {
        return Err(DescentError::ExtrapolationUnstable("need three samples".into()));
    }
    let (a, b, c) = (values[n - 3], values[n - 2], values[n - 1]);
    let (d1, d2) = (b - a, c - b);
    let scale = c.abs().max(1.0);
    if d2.abs() <= 1e-13 * scale {
        return Ok(Limit { values: values.to_vec(), limit: c, order: f64::NAN });
    }
    let ratio = d1 / d2;
    if !(ratio > 1.0 + 1e-6) || !ratio.is_finite() {
        return Err(DescentError::ExtrapolationUnstable(format!("difference ratio {ratio}")));
    }
    let order = ratio.ln() / (1.0 / q).ln();
    Ok(Limit { values: values.to_vec(), limit: c + d2 / (ratio - 1.0), order })
}

/// Lifted area of `S_t` at depth `tau`: two sheets over the cone section,
/// with measure `c dmu_Sigma`, in geodesic-polar coordinates.
pub fn lifted_area(spec: &MetricSpec, vf: &VertexFrame, tau: f64, n_psi: usize, n_theta: usize) -> Result<f64> {
    let mut total = 0.0;
    let ro = RayOptions { h_max: tau / 64.0 };
    for (psi, wp) in gauss_legendre(n_psi, 0.0, std::f64::consts::FRAC_PI_2)? {
        for j in 0..n_theta {
            let th = std::f64::consts::TAU * (j as f64 + 0.5) / n_theta as f64;
            let w = [psi.sin() * th.cos(), psi.sin() * th.sin()];
            let st = trace_ray(spec, vf, w, &[tau], &ro)?[0];
            let c = cone_sample(spec, vf, &st, &Caps::default())?;
            let dpsi = [psi.cos() * th.cos(), psi.cos() * th.sin()];
            let dth = [-psi.sin() * th.sin(), psi.sin() * th.cos()];
            let m = &c.jac;
            let col = |d: [f64; 2]| [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]];
            let (u, v) = (col(dpsi), col(dth));
            let jac = (u[0] * v[1] - u[1] * v[0]).abs();
            let sg = (c.g[1][1] * c.g[2][2] - c.g[1][2] * c.g[2][1]).sqrt();
            total += 2.0 * wp * (std::f64::consts::TAU / n_theta as f64) * c.frame.a_tilde_inv * sg * jac;
        }
    }
    Ok(total)
}

/// Limits of `rho tr k`, `b` and the normalized lifted area along the ray
/// `dir` as `tau -> 0`, from a geometrically decreasing `taus`.
pub fn verify_vertex_asymptotics(
    spec: &MetricSpec,
    p: &Point,
    dir: &HyperboloidDir,
    taus: &[f64],
) -> Result<VertexLimitReport> {
    if taus.len() < 3 || taus.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
        return Err(DescentError::ExtrapolationUnstable("tau sequence must decrease toward 0".into()));
    }
    let q = taus[1] / taus[0];
    if taus.windows(2).any(|w| ((w[1] / w[0]) - q).abs() > 1e-9) {
        return Err(DescentError::ExtrapolationUnstable("tau sequence must be geometric".into()));
    }
    let vf = VertexFrame::new(spec, p)?;
    let mut rtk = Vec::new();
    let mut bb = Vec::new();
    let mut area = Vec::new();
    for &tau in taus {
        let st = trace_ray(spec, &vf, dir.velocity(), &[tau], &RayOptions { h_max: tau / 64.0 })?[0];
        let c = cone_sample(spec, &vf, &st, &Caps::default())?;
        rtk.push(c.frame.rho * c.coeffs.tr_k);
        bb.push(1.0 / c.frame.b_inv);
        let a = lifted_area(spec, &vf, tau, 16, 24)?;
        area.push(a / (4.0 * std::f64::consts::PI * vf.lapse * vf.lapse * tau * tau));
    }
    let mut taus_r = taus.to_vec();
    taus_r.reverse();
    Ok(VertexLimitReport {
        taus: taus.to_vec(),
        rho_tr_k: richardson(&rtk, q)?,
        b: richardson(&bb, q)?,
        area_ratio: richardson(&area, q)?,
        expected_b: 1.0 / vf.lapse,
    })
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
    fn flat_identities_hold_to_roundoff() {
        let s = MetricSpec::minkowski(dom());
        let p = [1.0, 0.0, 0.0];
        let o = IdentityOptions::new(1.0, 128);
        let pts = random_ray_points(&s, &p, 1.0, 4, 7, &o.caps).unwrap();
        let rep = verify_identities_rays(&s, &p, &pts, &o).unwrap();
        assert!(rep.failures.is_empty());
        for (k, v) in rep.max_residuals() {
            assert!(v <= 1e-8, "{k}: {v:e}");
        }
    }

    #[test]
    fn perturbed_lapse_identities_are_small() {
        let s = lapse();
        let p = [1.0, 0.0, 0.0];
        let o = IdentityOptions::new(1.0, 32);
        let pts = random_ray_points(&s, &p, 1.0, 3, 11, &o.caps).unwrap();
        let rep = verify_identities_rays(&s, &p, &pts, &o).unwrap();
        for (k, v) in rep.max_residuals() {
            assert!(v <= 5e-4, "{k}: {v:e}");
        }
    }

    #[test]
    fn time_dependent_metric_exercises_pi_terms() {
        let s = MetricSpec::new(Family::ConformallyFlat { eps: 0.1, shape: Shape::Ripple }, dom(), DerivMode::Analytic)
            .unwrap();
        let p = [1.0, 0.0, 0.0];
        let o = IdentityOptions::new(1.0, 128);
        let pts = random_ray_points(&s, &p, 1.0, 2, 5, &o.caps).unwrap();
        let rep = verify_identities_rays(&s, &p, &pts, &o).unwrap();
        assert!(rep.records.iter().any(|r| r.identity == "chib" && r.rhs.abs() > 1e-3));
        for (k, v) in rep.max_residuals() {
            assert!(v <= 1e-8, "{k}: {v:e}");
        }
    }

    #[test]
    fn richardson_recovers_linear_limit() {
        let v: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|t| 3.0 + 2.0 * t + 0.1 * t * t).collect();
        let l = richardson(&v, 0.5).unwrap();
        assert!((l.limit - 3.0).abs() < 1e-3);
        assert!(matches!(richardson(&[1.0, 2.0, 4.0], 0.5), Err(DescentError::ExtrapolationUnstable(_))));
    }
}
