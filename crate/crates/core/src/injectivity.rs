//! Numerical estimates of the injectivity radii of the timelike
//! exponential map, the (2+1) null cone and the lifted null cone.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geodesic::{ray_jacobian, trace_ray_partial, RayOptions, VertexFrame};
use crate::metric::{MetricSpec, Point};
use crate::null_cone::{lift_null_ray, sphere_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusFlag {
    JacobianDegeneracy,
    Crossing,
    DomainBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radius {
    pub value: f64,
    pub flag: RadiusFlag,
}

impl Radius {
    fn bound(v: f64) -> Self {
        Radius { value: v, flag: RadiusFlag::DomainBound }
    }

    fn min(self, o: Radius) -> Radius {
        if o.value < self.value {
            o
        } else {
            self
        }
    }

    fn hit(&mut self, v: f64, flag: RadiusFlag) {
        if v < self.value {
            *self = Radius { value: v, flag };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub delta_star: Radius,
    pub i_star: Radius,
    pub s_tilde_star: Radius,
    pub l_tilde_star: Radius,
    pub i_tilde_star: Radius,
    pub c_star: Radius,
    /// Depth spacing of the scan; the natural slack of any comparison.
    pub cell: f64,
    /// The estimates certify local degeneracy and sampled crossings only,
    /// not global injectivity.
    pub sampled_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectivityOptions {
    pub n_depth: usize,
    /// Timelike fan: radial levels in `|w|` and angles.
    pub n_radial: usize,
    pub n_angle: usize,
    /// Null generators of the (2+1) cone.
    pub n_null: usize,
    /// Lifted sphere grid.
    pub n_lat: usize,
    pub n_lon: usize,
    /// Relative determinant below which the map counts as degenerate.
    pub degeneracy: f64,
}

impl Default for InjectivityOptions {
    fn default() -> Self {
        InjectivityOptions {
            n_depth: 64,
            n_radial: 12,
            n_angle: 32,
            n_null: 128,
            n_lat: 16,
            n_lon: 32,
            degeneracy: 1e-8,
        }
    }
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let sub = |u: [f64; 2], v: [f64; 2]| [u[0] - v[0], u[1] - v[1]];
    let d1 = cross2(sub(b, a), sub(c, a));
    let d2 = cross2(sub(b, a), sub(d, a));
    let d3 = cross2(sub(d, c), sub(a, c));
    let d4 = cross2(sub(d, c), sub(b, c));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether a closed polygon has two crossing non-adjacent edges, using a
/// spatial hash with cells twice the longest edge.
fn polygon_self_intersects(pts: &[[f64; 2]]) -> bool {
    let n = pts.len();
    let mut cell = 0.0f64;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        cell = cell.max((b[0] - a[0]).hypot(b[1] - a[1]));
    }
    let cell = 2.0 * cell.max(1e-300);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    for i in 0..n {
        grid.entry(key(pts[i])).or_default().push(i);
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (kx, ky) = key(a);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in v {
                        let gap = (i as i64 - j as i64).rem_euclid(n as i64);
                        if gap <= 1 || gap >= n as i64 - 1 || j < i {
                            continue;
                        }
                        if segments_cross(a, b, pts[j], pts[(j + 1) % n]) {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

/// Scans the fans down to `t_floor` and reports the first depth at which
/// each map degenerates or folds; radii default to the depth actually
/// covered, flagged as domain bounds.
pub fn estimate_injectivity(
    spec: &MetricSpec,
    p: &Point,
    t_floor: f64,
    opts: &InjectivityOptions,
) -> Result<InjectivityReport> {
    let vf = VertexFrame::new(spec, p)?;
    let span = p[0] - t_floor;
    let nd = opts.n_depth.max(2);
    let cell = span / nd as f64;
    let taus: Vec<f64> = (1..=nd).map(|k| cell * k as f64).collect();
    let ro = RayOptions { h_max: (cell / 4.0).min(span / 128.0) };
    let e_det = (vf.e[0][0] * vf.e[1][1] - vf.e[1][0] * vf.e[0][1]).abs();
    let norm = vf.lapse * vf.lapse * e_det;
    let mut reach = span;

    // timelike fan: Jacobian of w -> x and triangle orientation
    let mut delta = Radius::bound(span);
    let nr = opts.n_radial.max(2);
    let na = opts.n_angle.max(3);
    let mut fan: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(nr * na); nd];
    let mut fan_w: Vec<[f64; 2]> = Vec::with_capacity(nr * na);
    for i in 0..nr {
        let r = 0.999 * (i as f64 + 1.0) / nr as f64;
        for j in 0..na {
            let th = std::f64::consts::TAU * j as f64 / na as f64;
            let w = [r * th.cos(), r * th.sin()];
            fan_w.push(w);
            let (sts, err) = trace_ray_partial(spec, &vf, w, &taus, &ro);
            if err.is_some() {
                reach = reach.min(sts.last().map_or(0.0, |s| s.tau));
            }
            let mut prev: Option<(f64, f64)> = None;
            for (k, s) in sts.iter().enumerate() {
                let m = ray_jacobian(s);
                let d = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / (s.tau * s.tau * norm);
                if d <= opts.degeneracy && prev.is_some_and(|(_, d0)| d0 > opts.degeneracy) {
                    let (t0, d0) = prev.unwrap();
                    delta.hit(t0 + (s.tau - t0) * (d0 - opts.degeneracy) / (d0 - d), RadiusFlag::JacobianDegeneracy);
                } else if d <= opts.degeneracy && prev.is_none() {
                    delta.hit(s.tau, RadiusFlag::JacobianDegeneracy);
                }
                prev = Some((s.tau, d));
                fan[k].push([s.x[1], s.x[2]]);
            }
        }
    }
    // folds of the fan image: orientation flips of grid triangles
    for (k, pts) in fan.iter().enumerate() {
        if pts.len() != nr * na {
            continue;
        }
        let id = |i: usize, j: usize| i * na + (j % na);
        for i in 0..nr - 1 {
            for j in 0..na {
                let (a, b, c) = (id(i, j), id(i + 1, j), id(i, j + 1));
                let img = cross2(
                    [pts[b][0] - pts[a][0], pts[b][1] - pts[a][1]],
                    [pts[c][0] - pts[a][0], pts[c][1] - pts[a][1]],
                );
                let pre = cross2(
                    [fan_w[b][0] - fan_w[a][0], fan_w[b][1] - fan_w[a][1]],
                    [fan_w[c][0] - fan_w[a][0], fan_w[c][1] - fan_w[a][1]],
                );
                if img * pre.signum() * e_det.signum() <= 0.0 {
                    delta.hit(taus[k], RadiusFlag::JacobianDegeneracy);
                }
            }
        }
    }

    // (2+1) null cone: caustics (tangent collapse or reversal) and crossings
    let mut i_star = Radius::bound(span);
    let nn = opts.n_null.max(8);
    let mut sections: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(nn); nd];
    let mut tangents: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(nn); nd];
    for j in 0..nn {
        let th = std::f64::consts::TAU * j as f64 / nn as f64;
        let (sts, err) = trace_ray_partial(spec, &vf, [th.cos(), th.sin()], &taus, &ro);
        if err.is_some() {
            reach = reach.min(sts.last().map_or(0.0, |s| s.tau));
        }
        for (k, s) in sts.iter().enumerate() {
            let m = ray_jacobian(s);
            let d = [-th.sin(), th.cos()];
            let t = [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]];
            sections[k].push([s.x[1], s.x[2]]);
            tangents[k].push(t);
        }
    }
    for k in 0..nd {
        if sections[k].len() != nn {
            continue;
        }
        let tau = taus[k];
        let scale = tau * vf.lapse;
        let tg = &tangents[k];
        let collapsed = tg.iter().any(|t| t[0].hypot(t[1]) / scale <= opts.degeneracy);
        let reversed = (0..nn).any(|j| {
            let (a, b) = (tg[j], tg[(j + 1) % nn]);
            a[0] * b[0] + a[1] * b[1] <= 0.0
        });
        if collapsed || reversed {
            i_star.hit(tau, RadiusFlag::JacobianDegeneracy);
        } else if polygon_self_intersects(&sections[k]) {
            i_star.hit(tau, RadiusFlag::Crossing);
        }
    }

    // lifted null cone over the sphere
    let mut s_tilde = Radius::bound(span);
    let mut l_tilde = Radius::bound(span);
    let (nl, no) = (opts.n_lat.max(4), opts.n_lon.max(8));
    let omegas = sphere_grid(nl, no);
    let mut lifted: Vec<Vec<[f64; 3]>> = vec![Vec::with_capacity(nl * no); nd];
    for om in &omegas {
        let (rec, err) = lift_null_ray(spec, &vf, *om, &taus, ro.h_max);
        if err.is_some() {
            reach = reach.min(rec.samples.last().map_or(0.0, |s| s.tau));
        }
        for (k, s) in rec.samples.iter().enumerate() {
            lifted[k].push([s.x[1], s.x[2], s.x[3]]);
        }
    }
    let dlat = std::f64::consts::PI / nl as f64;
    let dlon = std::f64::consts::TAU / no as f64;
    for k in 0..nd {
        let pts = &lifted[k];
        if pts.len() != nl * no {
            continue;
        }
        let tau = taus[k];
        let id = |i: usize, j: usize| i * no + (j % no);
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let mut degenerate = false;
        for i in 1..nl - 1 {
            let b = -std::f64::consts::FRAC_PI_2 + dlat * (i as f64 + 0.5);
            for j in 0..no {
                let du = sub(pts[id(i + 1, j)], pts[id(i - 1, j)]).map(|v| v / (2.0 * dlat));
                let dv = sub(pts[id(i, j + 1)], pts[id(i, j + no - 1)]).map(|v| v / (2.0 * dlon));
                let x = sub(pts[id(i, j)], [p[1], p[2], 0.0]);
                let det = du[0] * (dv[1] * x[2] - dv[2] * x[1]) - du[1] * (dv[0] * x[2] - dv[2] * x[0])
                    + du[2] * (dv[0] * x[1] - dv[1] * x[0]);
                // flat value tau^3 cos(lat), orientation negative for this chart
                let rel = -det / (tau.powi(3) * vf.lapse.powi(3) * e_det * b.cos());
                if rel <= opts.degeneracy {
                    degenerate = true;
                }
            }
        }
        if degenerate {
            s_tilde.hit(tau, RadiusFlag::JacobianDegeneracy);
        }
        // crossings: grid-distant samples closer than a quarter of the local spacing
        let spacing = tau * vf.lapse * dlat.min(dlon * 0.5);
        let cellw = 2.0 * spacing;
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let key = |q: [f64; 3]| {
            ((q[0] / cellw).floor() as i64, (q[1] / cellw).floor() as i64, (q[2] / cellw).floor() as i64)
        };
        for (n, q) in pts.iter().enumerate() {
            grid.entry(key(*q)).or_default().push(n);
        }
        let mut crossing = false;
        'pts: for (n, q) in pts.iter().enumerate() {
            let (ki, kj, kk) = key(*q);
            let (i0, j0) = (n / no, n % no);
            for a in -1..=1 {
                for b in -1..=1 {
                    for c in -1..=1 {
                        let Some(v) = grid.get(&(ki + a, kj + b, kk + c)) else { continue };
                        for &m in v {
                            if m <= n {
                                continue;
                            }
                            let (i1, j1) = (m / no, m % no);
                            let dj = (j0 as i64 - j1 as i64).rem_euclid(no as i64).min((j1 as i64 - j0 as i64).rem_euclid(no as i64));
                            let di = (i0 as i64 - i1 as i64).abs();
                            // rows next to the poles bunch up in longitude
                            let polar = i0 == 0 || i0 == nl - 1 || i1 == 0 || i1 == nl - 1;
                            if di <= 2 && (dj <= 2 || polar) {
                                continue;
                            }
                            let d = sub(*q, pts[m]);
                            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                            let local = tau * vf.lapse * dlat * 0.25 * ((i0 as f64 + 0.5) * dlat).sin().abs().max(0.2);
                            if dist < local {
                                crossing = true;
                                break 'pts;
                            }
                        }
                    }
                }
            }
        }
        if crossing {
            l_tilde.hit(tau, RadiusFlag::Crossing);
        }
    }

    for r in [&mut delta, &mut i_star, &mut s_tilde, &mut l_tilde] {
        if r.value > reach {
            *r = Radius::bound(reach);
        }
    }
    Ok(InjectivityReport {
        delta_star: delta,
        i_star,
        s_tilde_star: s_tilde,
        l_tilde_star: l_tilde,
        i_tilde_star: s_tilde.min(l_tilde),
        c_star: delta.min(i_star),
        cell,
        sampled_only: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Domain;

    #[test]
    fn flat_radii_are_domain_bounds() {
        let s = MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] });
        let o = InjectivityOptions { n_depth: 8, n_radial: 4, n_angle: 12, n_null: 32, n_lat: 8, n_lon: 16, ..Default::default() };
        let r = estimate_injectivity(&s, &[1.0, 0.0, 0.0], 0.0, &o).unwrap();
        for x in [r.delta_star, r.i_star, r.s_tilde_star, r.l_tilde_star, r.c_star, r.i_tilde_star] {
            assert_eq!(x.flag, RadiusFlag::DomainBound);
            assert!((x.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polygon_crossing_detection() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(!polygon_self_intersects(&sq));
        let bow = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(polygon_self_intersects(&bow));
    }
}
