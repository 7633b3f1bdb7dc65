//! The (2+1) representation formula, its lifted (3+1) Kirchhoff form, and
//! the flat Poisson formula, evaluated on the cone grid for scalar fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::field::{Field, FieldJet, SourceMode};
use crate::frames::mu_bar_minus;
use crate::injectivity::{estimate_injectivity, InjectivityOptions, RadiusFlag};
use crate::metric::{MetricSpec, Point, Tensor3};
use crate::quadrature::{build_cone_grid, gauss_legendre, ConeGrid, ConeNode, QuadratureOptions};

/// Which reading of the formulas is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// As displayed: left sides `2 pi n(p) <phi, J>` and `4 pi n(p) <phi, J>`,
    /// slice integrands weighted by `A`, and the angular gradient term of
    /// `I_2` acting on `b A`.
    Literal,
    /// Left sides `2 pi <phi, J>` and `4 pi <phi, J>`, slice integrands
    /// weighted by `b A`, and the gradient term acting on `n b A`. With
    /// `A = (a / b) J A'` for the affinely transported `A'` this is the
    /// classical Kirchhoff formula, and `d mu = n d mu_S dt` puts `n` under
    /// the angular integration by parts. Both readings agree on flat space.
    Corrected,
}

impl Variant {
    fn factor(self, lapse_p: f64) -> f64 {
        match self {
            Variant::Literal => lapse_p,
            Variant::Corrected => 1.0,
        }
    }

    fn lapse_inside(self, lapse: f64) -> f64 {
        match self {
            Variant::Literal => 1.0,
            Variant::Corrected => lapse,
        }
    }

    fn slice_weight(self, b_inv: f64) -> f64 {
        match self {
            Variant::Literal => 1.0,
            Variant::Corrected => 1.0 / b_inv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationOptions {
    pub quadrature: QuadratureOptions,
    pub source: SourceMode,
    pub variant: Variant,
    /// Run the injectivity scan and refuse slices beyond `c*`.
    pub check_injectivity: bool,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        RepresentationOptions {
            quadrature: QuadratureOptions::default(),
            source: SourceMode::Analytic,
            variant: Variant::Corrected,
            check_injectivity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDiagnostics {
    pub n_tau: usize,
    pub n_psi: usize,
    pub n_theta: usize,
    /// `int n d mu dt` over the grid.
    pub volume: f64,
    /// Relative size of the top angular mode of `b A` on the slices.
    pub fan_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub vertex: Point,
    pub t0: f64,
    pub j: f64,
    pub lapse_p: f64,
    pub source_term: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// The two displayed integrals of each of `I_2` and `I_3`.
    pub i2_parts: [f64; 2],
    pub i3_parts: [f64; 2],
    pub variant: Variant,
    pub phi_p_reconstructed: f64,
    pub phi_p_literal: f64,
    pub phi_p_corrected: f64,
    pub phi_p_true: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub diagnostics: QuadratureDiagnostics,
}

impl RepresentationReport {
    /// `-source + I1 + I2 + I3`, the right side of the formula.
    pub fn right_side(&self) -> f64 {
        self.source_term + self.i1 + self.i2 + self.i3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffReport {
    /// `-int_{S_t0} (D_Lbar phi + tr chibar phi / 2) A`.
    pub boundary: f64,
    /// `-int Box phi A b d mu`.
    pub bulk: f64,
    /// The two integrals of the error term.
    pub er: [f64; 2],
    pub total: f64,
    pub variant: Variant,
    pub phi_p_reconstructed: f64,
}

fn hess_along(j: &FieldJet, gamma: &Tensor3<3>, x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let mut h = j.hess[a][b];
            for c in 0..3 {
                h -= gamma[c][a][b] * j.grad[c];
            }
            s += h * x[a] * y[b];
        }
    }
    s
}

fn kernel(node: &ConeNode, j: f64) -> f64 {
    j * node.sample.state.log_ta.exp() / node.sample.state.tau
}

/// `e(f)` and `N(f)` at every node of a level for `f = b A` (literal) or
/// `f = n b A` (corrected), and the relative top angular mode of `f`.
fn fan_derivatives(grid: &ConeGrid, lvl: &[ConeNode], j: f64, v: Variant) -> (Vec<f64>, Vec<f64>, f64) {
    let f: Vec<f64> = lvl.iter().map(|n| kernel(n, j) / n.sample.frame.b_inv * v.lapse_inside(n.sample.frame.lapse)).collect();
    let (dp, dt) = grid.polar_derivatives(&f);
    let mut de = Vec::with_capacity(f.len());
    let mut dn = Vec::with_capacity(f.len());
    for (k, n) in lvl.iter().enumerate() {
        let gr = n.slice_gradient(dp[k], dt[k]);
        let fr = &n.sample.frame;
        de.push(fr.e[1] * gr[0] + fr.e[2] * gr[1]);
        dn.push(fr.n[1] * gr[0] + fr.n[2] * gr[1]);
    }
    let nt = grid.n_theta;
    let mut tail = 0.0f64;
    for ring in f.chunks(nt) {
        let mean = ring.iter().sum::<f64>() / nt as f64;
        let alt = ring.iter().enumerate().map(|(i, v)| if i % 2 == 0 { *v } else { -v }).sum::<f64>() / nt as f64;
        if mean.abs() > 0.0 {
            tail = tail.max(alt.abs() / mean.abs());
        }
    }
    (de, dn, tail)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DescentError::QuadratureUnderResolved(format!("{what} is not finite")))
    }
}

fn check_slice(spec: &MetricSpec, p: &Point, t0: f64) -> Result<()> {
    let rep = estimate_injectivity(spec, p, t0, &InjectivityOptions { n_depth: 32, ..Default::default() })?;
    let tau0 = p[0] - t0;
    if rep.c_star.flag != RadiusFlag::DomainBound && rep.c_star.value < tau0 {
        return Err(DescentError::InjectivityViolated { depth: tau0, c_star: rep.c_star.value });
    }
    Ok(())
}

/// Per-level sums: source, I2 parts, I3 parts, for both variants
/// (`[literal, corrected]`); only the second I2 part differs.
fn level_sums(
    spec: &MetricSpec,
    grid: &ConeGrid,
    field: &Field,
    j: f64,
    mode: SourceMode,
    lvl: &[ConeNode],
) -> Result<([f64; 6], f64)> {
    let mut s = [0.0; 6];
    let (de, dn, tail) = fan_derivatives(grid, lvl, j, Variant::Literal);
    let (dec, dnc, _) = fan_derivatives(grid, lvl, j, Variant::Corrected);
    for (k, node) in lvl.iter().enumerate() {
        let (fr, c) = (&node.sample.frame, &node.sample.coeffs);
        let a = kernel(node, j);
        let w = node.area * fr.lapse;
        let bb = 1.0 / fr.b_inv;
        let (tau, rho, rt) = (fr.tau, fr.rho, fr.r_tilde);
        let src = field.source(spec, &fr.point, mode)?;
        s[0] -= w * src * a * tau / rho;
        if j == 0.0 {
            continue;
        }
        let phi = field.jet(&fr.point)?;
        let (ephi, nphi) = (phi.along(&fr.e), phi.along(&fr.n));
        let nn = rho * rho * bb * bb / (tau * tau);
        s[1] -= 2.0 * w * bb * a * (rt / rho * c.zetabar * ephi + rho / rt * c.omega * nphi);
        s[2] -= w * fr.b_inv * tau / rho * (de[k] * ephi + nn * dn[k] * nphi);
        s[5] -= node.area * fr.b_inv * tau / rho * (dec[k] * ephi + nn * dnc[k] * nphi);
        s[3] += w * bb * a * phi.value * (c.omega * c.tr_k + 0.5 * rho * bb / tau * (c.r_bb + c.k_hat_sq));
        s[4] += w
            * bb
            * a
            * phi.value
            * (node.b_pi_combo + (0.5 * c.tr_k - fr.b_inv * tau * c.omega / rho) * c.pi_combo);
    }
    Ok((s, tail))
}

/// `I_1` on the slice `t0` from the jet of the field there.
fn slice_term(grid: &ConeGrid, field: &Field, j: f64, v: Variant) -> Result<f64> {
    let mut s = 0.0;
    for node in &grid.slice {
        let (fr, c) = (&node.sample.frame, &node.sample.coeffs);
        let phi = field.jet(&fr.point)?;
        let a = kernel(node, j);
        let inner = -phi.along(&fr.bbar) + 0.5 * phi.value * (c.tr_k - 2.0 * fr.tau * fr.b_inv / fr.rho * c.pi_combo);
        s += node.area * inner * a * v.slice_weight(fr.b_inv);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
struct Pieces {
    i1: f64,
    i2_parts: [f64; 2],
    phi: f64,
}

/// Evaluates the four pieces of the formula on a prepared grid.
pub fn evaluate_on_grid(
    spec: &MetricSpec,
    grid: &ConeGrid,
    field: &Field,
    j: f64,
    opts: &RepresentationOptions,
) -> Result<RepresentationReport> {
    if !field.has_interior() && !spec.is_flat() {
        return Err(DescentError::CoefficientUnavailable(
            "a data-only field can be represented only on a flat background".into(),
        ));
    }
    // on flat space the interior terms vanish identically; data-only fields
    // skip them since phi is unknown there
    let interior_j = if field.has_interior() { j } else { 0.0 };
    let per: Vec<([f64; 6], f64)> = grid
        .interior
        .par_iter()
        .map(|lvl| level_sums(spec, grid, field, interior_j, opts.source, lvl))
        .collect::<Result<_>>()?;
    let mut s = [0.0; 6];
    let mut tail = 0.0f64;
    for ((_, wt), (v, t)) in grid.tau_nodes.iter().zip(&per) {
        for i in 0..6 {
            s[i] += wt * v[i];
        }
        tail = tail.max(*t);
    }
    let source_term = finite(s[0], "source term")?;
    let i3_parts = [finite(s[3], "I3")?, finite(s[4], "I3")?];
    let i3 = i3_parts[0] + i3_parts[1];
    let pieces = |v: Variant| -> Result<Pieces> {
        let i1 = finite(slice_term(grid, field, j, v)?, "I1")?;
        let i2b = if v == Variant::Literal { s[2] } else { s[5] };
        let i2_parts = [finite(s[1], "I2")?, finite(i2b, "I2")?];
        let rhs = source_term + i1 + i2_parts[0] + i2_parts[1] + i3;
        Ok(Pieces { i1, i2_parts, phi: rhs / (2.0 * std::f64::consts::PI * v.factor(grid.lapse_p) * j) })
    };
    let (lit, cor) = (pieces(Variant::Literal)?, pieces(Variant::Corrected)?);
    let chosen = if opts.variant == Variant::Literal { lit } else { cor };
    let (i1, i2_parts, rec) = (chosen.i1, chosen.i2_parts, chosen.phi);
    let i2 = i2_parts[0] + i2_parts[1];
    let (lit, cor) = (lit.phi, cor.phi);
    let truth = if field.has_interior() { Some(field.value(&grid.vertex)?) } else { None };
    let abs_err = truth.map(|t| (rec - t).abs());
    let rel_err = truth.map(|t| (rec - t).abs() / t.abs().max(1e-300));
    Ok(RepresentationReport {
        vertex: grid.vertex,
        t0: grid.t0,
        j,
        lapse_p: grid.lapse_p,
        source_term,
        i1,
        i2,
        i3,
        i2_parts,
        i3_parts,
        variant: opts.variant,
        phi_p_reconstructed: rec,
        phi_p_literal: lit,
        phi_p_corrected: cor,
        phi_p_true: truth,
        abs_err,
        rel_err,
        diagnostics: QuadratureDiagnostics {
            n_tau: grid.tau_nodes.len(),
            n_psi: grid.psi_nodes.len(),
            n_theta: grid.n_theta,
            volume: grid.volume(),
            fan_tail: tail,
        },
    })
}

/// Builds the cone grid and evaluates the formula for `field` with a scalar `J`.
pub fn evaluate_representation(
    spec: &MetricSpec,
    p: &Point,
    t0: f64,
    field: &Field,
    j: f64,
    opts: &RepresentationOptions,
) -> Result<RepresentationReport> {
    if j == 0.0 {
        return Err(DescentError::Config("J = 0 leaves phi(p) undetermined".into()));
    }
    if opts.check_injectivity {
        check_slice(spec, p, t0)?;
    }
    let grid = build_cone_grid(spec, p, t0, &opts.quadrature)?;
    evaluate_on_grid(spec, &grid, field, j, opts)
}

/// The lifted Kirchhoff formula on a prepared grid. Both graph sheets
/// `z = +rho` and `z = -rho` contribute equally for `z`-independent fields,
/// so each integral is twice the one over the upper sheet.
pub fn kirchhoff_on_grid(
    spec: &MetricSpec,
    grid: &ConeGrid,
    field: &Field,
    j: f64,
    opts: &RepresentationOptions,
) -> Result<KirchhoffReport> {
    if !field.has_interior() {
        return Err(DescentError::CoefficientUnavailable(
            "the lifted formula needs the field on the whole cone".into(),
        ));
    }
    let per: Vec<[f64; 3]> = grid
        .interior
        .par_iter()
        .map(|lvl| -> Result<[f64; 3]> {
            let mut s = [0.0; 3];
            for node in lvl {
                let (fr, c) = (&node.sample.frame, &node.sample.coeffs);
                let a = kernel(node, j);
                let w = 2.0 * node.area * fr.lapse * fr.a_tilde_inv / fr.b_inv;
                let src = field.source(spec, &fr.point, opts.source)?;
                s[0] -= w * src * a;
                let phi = field.jet(&fr.point)?;
                let alpha = 1.0 / fr.a_tilde_inv;
                let gamma = &node.sample.gamma;
                let (bphi, bbphi) = (phi.along(&fr.b), phi.along(&fr.bbar));
                let lap = hess_along(&phi, gamma, &fr.e, &fr.e)
                    + alpha * alpha * hess_along(&phi, gamma, &fr.n, &fr.n)
                    + 0.5 * c.tr_chibar * alpha * bphi
                    + 0.5 * c.tr_chi * alpha * bbphi;
                let zeta = c.zeta_tilde[0] * phi.grad[0] + c.zeta_tilde[1] * phi.grad[1] + c.zeta_tilde[2] * phi.grad[2];
                s[1] += w * a * (2.0 * zeta + lap);
                s[2] += 0.5 * w * a * mu_bar_minus(c, fr, node.b_pi_combo) * phi.value;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut s = [0.0; 3];
    for ((_, wt), v) in grid.tau_nodes.iter().zip(&per) {
        for i in 0..3 {
            s[i] += wt * v[i];
        }
    }
    let mut boundary = 0.0;
    for node in &grid.slice {
        let (fr, c) = (&node.sample.frame, &node.sample.coeffs);
        let phi = field.jet(&fr.point)?;
        let alpha = 1.0 / fr.a_tilde_inv;
        boundary -= 2.0
            * node.area
            * fr.a_tilde_inv
            * opts.variant.slice_weight(fr.b_inv)
            * (alpha * phi.along(&fr.bbar) + 0.5 * c.tr_chibar * phi.value)
            * kernel(node, j);
    }
    let boundary = finite(boundary, "Kirchhoff boundary term")?;
    let bulk = finite(s[0], "Kirchhoff bulk term")?;
    let er = [finite(s[1], "error term")?, finite(s[2], "error term")?];
    let total = boundary + bulk + er[0] + er[1];
    Ok(KirchhoffReport {
        boundary,
        bulk,
        er,
        total,
        variant: opts.variant,
        phi_p_reconstructed: total / (4.0 * std::f64::consts::PI * opts.variant.factor(grid.lapse_p) * j),
    })
}

/// Builds the grid and evaluates the lifted Kirchhoff formula.
pub fn eval_kirchhoff_3p1(
    spec: &MetricSpec,
    p: &Point,
    t0: f64,
    field: &Field,
    j: f64,
    opts: &RepresentationOptions,
) -> Result<KirchhoffReport> {
    if opts.check_injectivity {
        check_slice(spec, p, t0)?;
    }
    let grid = build_cone_grid(spec, p, t0, &opts.quadrature)?;
    kirchhoff_on_grid(spec, &grid, field, j, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonOptions {
    pub n_tau: usize,
    pub n_psi: usize,
    pub n_theta: usize,
    /// Relative agreement demanded between the full and a coarser radial
    /// rule; `None` skips the check.
    pub budget: Option<f64>,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions { n_tau: 24, n_psi: 48, n_theta: 64, budget: Some(1e-8) }
    }
}

/// The flat (2+1) Poisson formula for data on `t = t0`:
/// `data(x) = (phi, d_x phi, d_y phi, d_t phi)` and source `F(t, x)`.
pub fn poisson_closed_form(
    data: &dyn Fn([f64; 2]) -> [f64; 4],
    source: &dyn Fn(&Point) -> f64,
    p: &Point,
    t0: f64,
    opts: &PoissonOptions,
) -> Result<f64> {
    let tau0 = p[0] - t0;
    if !(tau0 > 0.0) {
        return Err(DescentError::Config("poisson needs t0 below the vertex".into()));
    }
    let eval = |n_psi: usize| -> Result<f64> {
        let psi = gauss_legendre(n_psi, 0.0, std::f64::consts::FRAC_PI_2)?;
        let nt = opts.n_theta;
        let wth = std::f64::consts::TAU / nt as f64;
        // r = tau sin psi turns dx / sqrt(tau^2 - r^2) into tau sin psi dpsi dtheta
        let disk = |tau: f64, f: &dyn Fn([f64; 2], [f64; 2], f64) -> f64| -> f64 {
            let mut s = 0.0;
            for &(ps, wp) in &psi {
                let (sp, _) = ps.sin_cos();
                for k in 0..nt {
                    let (st, ct) = (wth * k as f64).sin_cos();
                    let d = [tau * sp * ct, tau * sp * st];
                    s += wp * wth * tau * sp * f([p[1] + d[0], p[2] + d[1]], d, tau);
                }
            }
            s
        };
        let bnd = disk(tau0, &|x, d, _| {
            let v = data(x);
            tau0 * v[3] + d[0] * v[1] + d[1] * v[2] + v[0]
        }) / tau0;
        let mut src = 0.0;
        for (tau, wt) in gauss_legendre(opts.n_tau, 0.0, tau0)? {
            src += wt * disk(tau, &|x, _, _| source(&[p[0] - tau, x[0], x[1]]));
        }
        Ok((bnd - src) / (2.0 * std::f64::consts::PI))
    };
    let v = eval(opts.n_psi)?;
    if let Some(b) = opts.budget {
        let coarse = eval((2 * opts.n_psi).div_ceil(3).max(2))?;
        if (v - coarse).abs() > b * v.abs().max(1e-300) {
            return Err(DescentError::QuadratureUnderResolved(format!(
                "poisson radial rule changes by {:e} between {} and {} nodes",
                (v - coarse).abs(),
                (2 * opts.n_psi).div_ceil(3),
                opts.n_psi
            )));
        }
    }
    Ok(v)
}

/// [`poisson_closed_form`] with the data and source of a field.
pub fn poisson_for_field(spec: &MetricSpec, field: &Field, p: &Point, t0: f64, opts: &PoissonOptions) -> Result<f64> {
    if !spec.is_flat() {
        return Err(DescentError::Config("the Poisson formula needs the Minkowski metric".into()));
    }
    let data = |x: [f64; 2]| field.cauchy_data(t0, x).unwrap_or([f64::NAN; 4]);
    let source = |q: &Point| field.source(spec, q, SourceMode::Analytic).unwrap_or(f64::NAN);
    let v = poisson_closed_form(&data, &source, p, t0, opts)?;
    finite(v, "poisson value")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Domain;

    fn flat() -> MetricSpec {
        MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] })
    }

    fn small() -> RepresentationOptions {
        RepresentationOptions {
            quadrature: QuadratureOptions { n_tau: 8, n_psi: 12, n_theta: 16, h_max: 1.0 / 64.0 },
            ..Default::default()
        }
    }

    #[test]
    fn flat_constant_pieces() {
        let s = flat();
        let p = [1.0, 0.0, 0.0];
        let one = Field::Constant { value: 1.0 };
        let r = evaluate_representation(&s, &p, 0.0, &one, 1.0, &small()).unwrap();
        assert!((r.i1 - 2.0 * std::f64::consts::PI).abs() < 1e-8, "{r:?}");
        assert!(r.i2.abs() < 1e-10 && r.i3.abs() < 1e-10 && r.source_term == 0.0);
        assert!((r.phi_p_reconstructed - 1.0).abs() < 1e-8);
        let k = eval_kirchhoff_3p1(&s, &p, 0.0, &one, 1.0, &small()).unwrap();
        assert!((k.total - 4.0 * std::f64::consts::PI).abs() < 1e-8, "{k:?}");
    }

    #[test]
    fn flat_unit_source_term() {
        // F = 1: -int int (1/tau)(tau/rho) = -int_0^1 2 pi tau dtau = -pi
        let s = flat();
        let p = [1.0, 0.0, 0.0];
        let g = build_cone_grid(&s, &p, 0.0, &small().quadrature).unwrap();
        let mut src = 0.0;
        for ((_, wt), lvl) in g.tau_nodes.iter().zip(&g.interior) {
            for n in lvl {
                src -= wt * n.area * kernel(n, 1.0) * n.sample.frame.tau / n.sample.frame.rho;
            }
        }
        assert!((src + std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn poisson_constants_and_linears() {
        let s = flat();
        let p = [0.8, 0.1, 0.0];
        let o = PoissonOptions::default();
        assert!((poisson_for_field(&s, &Field::Constant { value: 1.0 }, &p, 0.0, &o).unwrap() - 1.0).abs() < 1e-12);
        let t = Field::Affine { coef: [1.0, 0.0, 0.0], offset: 0.0 };
        assert!((poisson_for_field(&s, &t, &p, 0.0, &o).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_lapse_separates_the_variants() {
        // n = 1.5 is Minkowski in rescaled time, so the corrected reading is exact
        let dom = Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] };
        let fam = crate::metric::Family::PerturbedLapse { eps: 0.5, shape: crate::metric::Shape::Constant };
        let s = MetricSpec::new(fam, dom, crate::metric::DerivMode::Analytic).unwrap();
        let r = evaluate_representation(&s, &[1.0, 0.1, 0.0], 0.0, &Field::Manufactured, 1.0, &small()).unwrap();
        let t = r.phi_p_true.unwrap();
        assert!((r.phi_p_corrected - t).abs() < 1e-7 * t.abs(), "{r:?}");
        assert!((r.phi_p_literal - t).abs() > 0.1 * t.abs());
        assert_eq!(r.phi_p_reconstructed, r.phi_p_corrected);
    }

    #[test]
    fn flat_kirchhoff_is_twice_the_planar_assembly() {
        let s = flat();
        let p = [1.0, 0.1, 0.0];
        let g = build_cone_grid(&s, &p, 0.0, &small().quadrature).unwrap();
        let f = Field::StaticGauss { amplitude: 1.0, width: 0.7, center: [0.2, -0.1] };
        let r = evaluate_on_grid(&s, &g, &f, 1.0, &small()).unwrap();
        let k = kirchhoff_on_grid(&s, &g, &f, 1.0, &small()).unwrap();
        assert!((k.total - 2.0 * r.right_side()).abs() < 1e-6 * k.total.abs());
        assert!(r.i2.abs() < 1e-10 && r.i3.abs() < 1e-10);
        assert!(r.rel_err.unwrap() < 1e-6, "{r:?}");
    }

    #[test]
    fn flat_gaussian_data_matches_poisson() {
        let s = flat();
        let p = [1.0, 0.0, 0.0];
        let f = Field::CauchyGauss { amplitude: 1.0, width: 0.5, center: [0.0, 0.0], t0: 0.0 };
        let o = RepresentationOptions {
            quadrature: QuadratureOptions { n_tau: 4, n_psi: 40, n_theta: 16, h_max: 1.0 / 64.0 },
            ..Default::default()
        };
        let r = evaluate_representation(&s, &p, 0.0, &f, 1.0, &o).unwrap();
        let pf = poisson_for_field(&s, &f, &p, 0.0, &PoissonOptions::default()).unwrap();
        assert!(r.phi_p_true.is_none());
        assert!((r.phi_p_reconstructed - pf).abs() < 1e-8 * pf.abs(), "{} {pf}", r.phi_p_reconstructed);
        assert!(kirchhoff_on_grid(&s, &build_cone_grid(&s, &p, 0.0, &o.quadrature).unwrap(), &f, 1.0, &o).is_err());
    }

    #[test]
    fn zero_kernel_is_rejected() {
        let e = evaluate_representation(&flat(), &[1.0, 0.0, 0.0], 0.0, &Field::Manufactured, 0.0, &small());
        assert!(matches!(e, Err(DescentError::Config(_))));
    }
}
