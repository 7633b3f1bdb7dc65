//! Leapfrog solver for scalar `Box_g phi = F` on zero-shift metrics, and a
//! discrete d'Alembertian; the independent oracle for the integral formulas.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::metric::{christoffel, inverse, MetricSpec, Point};
use crate::rho_field::{near_inside, null_sections};

/// `g^ab d_a d_b phi - g^ab G^c_ab d_c phi` with second-order central
/// differences of step `h`; the metric enters analytically.
pub fn boxg_apply(spec: &MetricSpec, phi: impl Fn(&Point) -> f64, q: &Point, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(DescentError::Config("stencil step must be positive".into()));
    }
    if !spec.domain.contains(q, -h) {
        return Err(DescentError::OutOfDomain { point: *q });
    }
    let jet = spec.jet(q, 1)?;
    let gamma = christoffel(&jet)?.gamma;
    let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric { point: *q })?;
    let at = |da: [f64; 3]| phi(&[q[0] + da[0], q[1] + da[1], q[2] + da[2]]);
    let unit = |a: usize, s: f64| {
        let mut v = [0.0; 3];
        v[a] = s;
        v
    };
    let f0 = phi(q);
    let mut d1 = [0.0; 3];
    let mut d2 = [[0.0; 3]; 3];
    for a in 0..3 {
        let (fp, fm) = (at(unit(a, h)), at(unit(a, -h)));
        d1[a] = (fp - fm) / (2.0 * h);
        d2[a][a] = (fp - 2.0 * f0 + fm) / (h * h);
        for b in 0..a {
            let mut v = [0.0; 3];
            let mut corner = |sa: f64, sb: f64| {
                v = [0.0; 3];
                v[a] = sa * h;
                v[b] = sb * h;
                at(v)
            };
            let m = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
            d2[a][b] = m;
            d2[b][a] = m;
        }
    }
    let mut s = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            let mut v = d2[a][b];
            for c in 0..3 {
                v -= gamma[c][a][b] * d1[c];
            }
            s += ginv[a][b] * v;
        }
    }
    if !s.is_finite() {
        return Err(DescentError::OutOfDomain { point: *q });
    }
    Ok(s)
}

/// Uniform spatial grid with two time levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub origin: [f64; 2],
    pub dx: f64,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub dt: f64,
    pub phi: Vec<f64>,
    pub phi_prev: Vec<f64>,
}

impl GridState {
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dx]
    }

    /// Bilinear interpolation of the current level.
    pub fn sample(&self, x: [f64; 2]) -> Option<f64> {
        let fx = (x[0] - self.origin[0]) / self.dx;
        let fy = (x[1] - self.origin[1]) / self.dx;
        if !(fx >= 0.0 && fy >= 0.0) || fx > (self.nx - 1) as f64 || fy > (self.ny - 1) as f64 {
            return None;
        }
        let (i, j) = ((fx.floor() as usize).min(self.nx - 2), (fy.floor() as usize).min(self.ny - 2));
        let (u, v) = (fx - i as f64, fy - j as f64);
        let p = |a: usize, b: usize| self.phi[a * self.ny + b];
        Some((1.0 - u) * (1.0 - v) * p(i, j) + u * (1.0 - v) * p(i + 1, j) + (1.0 - u) * v * p(i, j + 1) + u * v * p(i + 1, j + 1))
    }

    /// Discrete energy `sum (d_t phi)^2 + |grad phi|^2` (flat weights).
    pub fn energy(&self) -> f64 {
        let mut e = 0.0;
        for i in 0..self.nx - 1 {
            for j in 0..self.ny - 1 {
                let k = i * self.ny + j;
                let pt = (self.phi[k] - self.phi_prev[k]) / self.dt;
                let px = (self.phi[k + self.ny] - self.phi[k]) / self.dx;
                let py = (self.phi[k + 1] - self.phi[k]) / self.dx;
                e += pt * pt + px * px + py * py;
            }
        }
        e * self.dx * self.dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdtdOptions {
    pub center: [f64; 2],
    /// Half-widths of the box around `center`.
    pub half_width: [f64; 2],
    pub dx: f64,
    pub cfl: f64,
    pub sponge_cells: usize,
    /// Peak damping rate of the sponge.
    pub sponge_strength: f64,
    /// Number of evenly spaced snapshots kept, the final state included.
    pub snapshots: usize,
}

impl Default for FdtdOptions {
    fn default() -> Self {
        FdtdOptions {
            center: [0.0, 0.0],
            half_width: [1.5, 1.5],
            dx: 1.0 / 64.0,
            cfl: 0.5,
            sponge_cells: 10,
            sponge_strength: 40.0,
            snapshots: 1,
        }
    }
}

/// Cauchy data and source: `(phi, d_t phi)` at `t0` and `F(t, x)`.
pub struct WaveProblem<'a> {
    pub phi0: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    pub phi1: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    pub source: &'a (dyn Fn(&Point) -> f64 + Sync),
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtdRun {
    pub history: Vec<GridState>,
    pub t0: f64,
    pub cfl_ratio: f64,
    pub max_speed: f64,
    pub center: [f64; 2],
    /// Max-norm distance from the box center to the sponge.
    pub clean_radius: f64,
}

impl FdtdRun {
    pub fn last(&self) -> &GridState {
        self.history.last().expect("at least the final state")
    }

    /// Value at `q = (t, x)` from the final state, after checking that no
    /// signal from the sponge can have reached `x`.
    pub fn probe(&self, q: &Point) -> Result<f64> {
        let s = self.last();
        if (s.t - q[0]).abs() > 1e-9 * (1.0 + q[0].abs()) {
            return Err(DescentError::Config(format!("probe time {} differs from final time {}", q[0], s.t)));
        }
        self.check_margin([q[1], q[2]])?;
        s.sample([q[1], q[2]]).ok_or(DescentError::OutOfDomain { point: *q })
    }

    pub fn check_margin(&self, x: [f64; 2]) -> Result<()> {
        let travel = self.max_speed * (self.last().t - self.t0);
        let r = (x[0] - self.center[0]).abs().max((x[1] - self.center[1]).abs());
        if self.clean_radius - r < travel {
            return Err(DescentError::MarginContamination(format!(
                "probe lies {:.4} inside the sponge edge but signals travel {:.4}",
                self.clean_radius - r,
                travel
            )));
        }
        Ok(())
    }
}

fn is_static(spec: &MetricSpec) -> bool {
    use crate::metric::{Family, Shape};
    !matches!(
        spec.family,
        Family::PerturbedLapse { shape: Shape::Ripple, .. } | Family::ConformallyFlat { shape: Shape::Ripple, .. }
    )
}

/// Per-cell coefficients of `d_t^2 phi = c11 phi_xx + c12 phi_xy + c22 phi_yy
/// - b0 phi_t - b1 phi_x - b2 phi_y - n2 F`.
#[derive(Debug, Clone, Copy, Default)]
struct Coef {
    c11: f64,
    c12: f64,
    c22: f64,
    b0: f64,
    b1: f64,
    b2: f64,
    n2: f64,
    speed: f64,
}

fn coef_at(spec: &MetricSpec, q: &Point) -> Result<Coef> {
    let jet = spec.jet(q, 1)?;
    let gamma = christoffel(&jet)?.gamma;
    let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric { point: *q })?;
    let mut gc = [0.0; 3];
    for (c, v) in gc.iter_mut().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                *v += ginv[a][b] * gamma[c][a][b];
            }
        }
    }
    let n2 = -jet.g[0][0];
    let (a, b, d): (f64, f64, f64) = (ginv[1][1], ginv[1][2], ginv[2][2]);
    let lmax = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
    Ok(Coef {
        c11: n2 * a,
        c12: 2.0 * n2 * b,
        c22: n2 * d,
        b0: n2 * gc[0],
        b1: n2 * gc[1],
        b2: n2 * gc[2],
        n2,
        speed: (n2 * lmax).sqrt(),
    })
}

/// Leapfrog integration from `t0` to `t_end` with a quartic sponge of
/// `sponge_cells` cells and homogeneous Dirichlet values on the outer ring.
pub fn run_fdtd(spec: &MetricSpec, prob: &WaveProblem, t_end: f64, opts: &FdtdOptions) -> Result<FdtdRun> {
    use rayon::prelude::*;
    if !(t_end > prob.t0) || !(opts.dx > 0.0) || opts.snapshots == 0 {
        return Err(DescentError::Config("fdtd needs t_end > t0, dx > 0 and one snapshot".into()));
    }
    let nx = (2.0 * opts.half_width[0] / opts.dx).round() as usize + 1;
    let ny = (2.0 * opts.half_width[1] / opts.dx).round() as usize + 1;
    let w = opts.sponge_cells;
    if nx < 2 * w + 3 || ny < 2 * w + 3 {
        return Err(DescentError::Config("fdtd box is narrower than its sponge".into()));
    }
    let origin = [opts.center[0] - opts.half_width[0], opts.center[1] - opts.half_width[1]];
    let dx = opts.dx;
    let node = |k: usize| [origin[0] + (k / ny) as f64 * dx, origin[1] + (k % ny) as f64 * dx];
    let fill = |t: f64| -> Result<Vec<Coef>> {
        (0..nx * ny).into_par_iter().map(|k| {
            let x = node(k);
            coef_at(spec, &[t, x[0], x[1]])
        }).collect()
    };
    let fixed = is_static(spec);
    let mut coef = fill(prob.t0)?;
    let mut speed = coef.iter().map(|c| c.speed).fold(0.0, f64::max);
    if !fixed {
        for s in 1..=4 {
            let t = prob.t0 + (t_end - prob.t0) * s as f64 / 4.0;
            speed = speed.max(fill(t)?.iter().map(|c| c.speed).fold(0.0, f64::max));
        }
    }
    let dt_max = opts.cfl * dx / speed;
    let steps = ((t_end - prob.t0) / dt_max).ceil().max(1.0) as usize;
    let dt = (t_end - prob.t0) / steps as f64;
    let ratio = dt * speed / dx;
    if ratio > 0.5 + 1e-12 {
        return Err(DescentError::CflViolation { ratio, limit: 0.5 });
    }
    let sigma: Vec<f64> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            let depth = [i, nx - 1 - i, j, ny - 1 - j].into_iter().min().unwrap();
            if depth >= w {
                0.0
            } else {
                opts.sponge_strength * ((w - depth) as f64 / w as f64).powi(4)
            }
        })
        .collect();
    let boundary = |k: usize| {
        let (i, j) = (k / ny, k % ny);
        i == 0 || j == 0 || i == nx - 1 || j == ny - 1
    };
    let lap = |phi: &[f64], k: usize, c: &Coef| -> f64 {
        let (e, wv, n, s) = (phi[k + ny], phi[k - ny], phi[k + 1], phi[k - 1]);
        let pxx = (e - 2.0 * phi[k] + wv) / (dx * dx);
        let pyy = (n - 2.0 * phi[k] + s) / (dx * dx);
        let pxy = (phi[k + ny + 1] - phi[k + ny - 1] - phi[k - ny + 1] + phi[k - ny - 1]) / (4.0 * dx * dx);
        let px = (e - wv) / (2.0 * dx);
        let py = (n - s) / (2.0 * dx);
        c.c11 * pxx + c.c12 * pxy + c.c22 * pyy - c.b1 * px - c.b2 * py
    };
    let f_at = |t: f64| -> Vec<f64> {
        (0..nx * ny).into_par_iter().map(|k| {
            let x = node(k);
            (prob.source)(&[t, x[0], x[1]])
        }).collect()
    };

    let phi0: Vec<f64> = (0..nx * ny).map(|k| if boundary(k) { 0.0 } else { (prob.phi0)(node(k)) }).collect();
    let phi1: Vec<f64> = (0..nx * ny).map(|k| if boundary(k) { 0.0 } else { (prob.phi1)(node(k)) }).collect();
    let f0 = f_at(prob.t0);
    let mut prev = phi0.clone();
    let mut cur: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            if boundary(k) {
                return 0.0;
            }
            let c = &coef[k];
            let acc = lap(&phi0, k, c) - (c.b0 + sigma[k]) * phi1[k] - c.n2 * f0[k];
            phi0[k] + dt * phi1[k] + 0.5 * dt * dt * acc
        })
        .collect();
    let every = (steps as f64 / opts.snapshots as f64).max(1.0);
    let mut history = Vec::with_capacity(opts.snapshots);
    let mut next_snap = 1usize;
    let mut snap = |n_done: usize, cur: &Vec<f64>, prev: &Vec<f64>, history: &mut Vec<GridState>| {
        if n_done as f64 + 1e-9 >= every * next_snap as f64 || n_done == steps {
            history.push(GridState {
                origin,
                dx,
                nx,
                ny,
                t: prob.t0 + n_done as f64 * dt,
                dt,
                phi: cur.clone(),
                phi_prev: prev.clone(),
            });
            next_snap += 1;
        }
    };
    snap(1, &cur, &prev, &mut history);
    for n_done in 1..steps {
        let t = prob.t0 + n_done as f64 * dt;
        if !fixed {
            coef = fill(t)?;
        }
        let f = f_at(t);
        let next: Vec<f64> = (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                if boundary(k) {
                    return 0.0;
                }
                let c = &coef[k];
                let beta = 0.5 * dt * (c.b0 + sigma[k]);
                (2.0 * cur[k] - (1.0 - beta) * prev[k] + dt * dt * (lap(&cur, k, c) - c.n2 * f[k])) / (1.0 + beta)
            })
            .collect();
        prev = std::mem::replace(&mut cur, next);
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(DescentError::StepFailure { at: t });
        }
        snap(n_done + 1, &cur, &prev, &mut history);
    }
    if history.last().map(|s| (s.t - t_end).abs() > 1e-9 * (1.0 + t_end.abs())).unwrap_or(true) {
        history.push(GridState { origin, dx, nx, ny, t: t_end, dt, phi: cur, phi_prev: prev });
    }
    let clean = (opts.half_width[0].min(opts.half_width[1])) - w as f64 * dx;
    Ok(FdtdRun { history, t0: prob.t0, cfl_ratio: ratio, max_speed: speed, center: opts.center, clean_radius: clean })
}

/// Grid nodes inside the section of the causal past of `p` on `t0`,
/// enlarged by `margin`.
pub fn dependency_mask(spec: &MetricSpec, p: &Point, t0: f64, grid: &GridState, margin: f64) -> Result<Vec<bool>> {
    let sec = null_sections(spec, p, &[p[0] - t0])?.remove(0);
    Ok((0..grid.nx * grid.ny).map(|k| near_inside(&sec, grid.node(k / grid.ny, k % grid.ny), margin)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DerivMode, Domain, Family, Shape};

    fn dom() -> Domain {
        Domain { t: [-1.0, 3.0], x: [-3.0, 3.0], y: [-3.0, 3.0] }
    }

    #[test]
    fn box_of_polynomials() {
        let s = MetricSpec::minkowski(dom());
        let q = [0.5, 0.1, -0.2];
        let b = boxg_apply(&s, |x| x[0] * x[0], &q, 1e-3).unwrap();
        assert!((b + 2.0).abs() < 1e-6);
        assert!(boxg_apply(&s, |x| x[0] + x[1], &q, 1e-3).unwrap().abs() < 1e-9);
        assert!(matches!(boxg_apply(&s, |x| x[0], &[3.0, 0.0, 0.0], 1e-3), Err(DescentError::OutOfDomain { .. })));
    }

    #[test]
    fn static_lapse_box_of_sin_t() {
        // static lapse: G^0_00 = G^0_ij = 0, so Box sin t = sin t / n^2
        let eps = 0.1;
        let s = MetricSpec::new(Family::PerturbedLapse { eps, shape: Shape::Linear }, dom(), DerivMode::Analytic).unwrap();
        let q = [0.7, 0.4, 0.2];
        let n = 1.0 + eps * q[1];
        let b = boxg_apply(&s, |x| x[0].sin(), &q, 1e-3).unwrap();
        assert!((b - q[0].sin() / (n * n)).abs() < 1e-6);
    }

    #[test]
    fn constants_stay_constant() {
        let s = MetricSpec::minkowski(dom());
        let prob = WaveProblem { phi0: &|_| 1.0, phi1: &|_| 0.0, source: &|_| 0.0, t0: 0.0 };
        let o = FdtdOptions { dx: 1.0 / 32.0, sponge_strength: 0.0, ..Default::default() };
        let run = run_fdtd(&s, &prob, 0.5, &o).unwrap();
        // away from the Dirichlet ring the field is untouched
        assert!((run.probe(&[0.5, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-13);
        assert!(matches!(run.probe(&[0.5, 1.3, 0.0]), Err(DescentError::MarginContamination(_))));
    }
}
