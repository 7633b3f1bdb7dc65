//! The time function `rho` on a grid over the past of a vertex.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DescentError, Result};
use crate::geodesic::{shoot_with_frame, trace_ray, RayOptions, RayState, VertexFrame};
use crate::metric::{inverse_fast, MetricSpec, Point};

const MAGIC: &[u8; 4] = b"RHOF";
const VERSION: u32 = 1;

/// Grid values of `rho` over `[t0, t_p] x box`, where the box is the reach
/// of the null cone. Nodes outside the cone (or where shooting failed) hold
/// `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoField {
    pub vertex: Point,
    pub t0: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// `(nt, nx, ny)`, including endpoints.
    pub shape: [usize; 3],
    pub metric_hash: u64,
    pub rho: Vec<f64>,
    /// `d rho = -B_flat`, exact from the converged ray.
    pub grad: Vec<[f64; 3]>,
    /// Initial velocity of the ray reaching each node.
    pub w: Vec<[f64; 2]>,
}

impl RhoField {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    pub fn spacing(&self) -> [f64; 3] {
        let d = |a: f64, b: f64, n: usize| (b - a) / (n.max(2) - 1) as f64;
        [
            d(self.t0, self.vertex[0], self.shape[0]),
            d(self.x_range[0], self.x_range[1], self.shape[1]),
            d(self.y_range[0], self.y_range[1], self.shape[2]),
        ]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        let h = self.spacing();
        [self.t0 + i as f64 * h[0], self.x_range[0] + j as f64 * h[1], self.y_range[0] + k as f64 * h[2]]
    }

    fn locate(&self, q: &Point) -> Option<([usize; 3], [f64; 3])> {
        let h = self.spacing();
        let o = [self.t0, self.x_range[0], self.y_range[0]];
        let mut id = [0; 3];
        let mut fr = [0.0; 3];
        for a in 0..3 {
            let s = (q[a] - o[a]) / h[a];
            if !(s >= -1e-12) || s > (self.shape[a] - 1) as f64 + 1e-12 {
                return None;
            }
            let i = (s.floor() as usize).min(self.shape[a] - 2);
            id[a] = i;
            fr[a] = s - i as f64;
        }
        Some((id, fr))
    }

    /// Trilinear interpolation; `None` off the grid or next to invalid nodes.
    pub fn interpolate(&self, q: &Point) -> Option<f64> {
        let (id, fr) = self.locate(q)?;
        let mut acc = 0.0;
        for c in 0..8 {
            let o = [c >> 2 & 1, c >> 1 & 1, c & 1];
            let v = self.rho[self.index(id[0] + o[0], id[1] + o[1], id[2] + o[2])];
            if !v.is_finite() {
                return None;
            }
            let wt: f64 = (0..3).map(|a| if o[a] == 1 { fr[a] } else { 1.0 - fr[a] }).product();
            acc += wt * v;
        }
        Some(acc)
    }

    /// Velocity stored at the nearest valid node, as a shooting warm start.
    pub fn nearest_velocity(&self, q: &Point) -> Option<[f64; 2]> {
        let (id, fr) = self.locate(q)?;
        let i = [0, 1, 2].map(|a| id[a] + (fr[a] > 0.5) as usize);
        let n = self.index(i[0], i[1], i[2]);
        if !self.rho[n].is_finite() {
            return None;
        }
        // rescale to this point's tau; w ~ displacement / tau
        let tn = self.vertex[0] - self.node(i[0], i[1], i[2])[0];
        let tq = self.vertex[0] - q[0];
        let s = if tq > 0.0 { tn / tq } else { 1.0 };
        let w = [self.w[n][0] * s, self.w[n][1] * s];
        (w[0].hypot(w[1]) < 0.99).then_some(w)
    }

    /// Number of nodes where `rho` is defined.
    pub fn valid_count(&self) -> usize {
        self.rho.iter().filter(|v| v.is_finite()).count()
    }

    /// Central-difference gradient of the grid values at an interior node.
    pub fn grid_gradient(&self, i: usize, j: usize, k: usize) -> Option<[f64; 3]> {
        let s = self.shape;
        if i == 0 || j == 0 || k == 0 || i + 1 >= s[0] || j + 1 >= s[1] || k + 1 >= s[2] {
            return None;
        }
        let h = self.spacing();
        let f = |a: usize, b: usize, c: usize| {
            let v = self.rho[self.index(a, b, c)];
            v.is_finite().then_some(v)
        };
        Some([
            (f(i + 1, j, k)? - f(i - 1, j, k)?) / (2.0 * h[0]),
            (f(i, j + 1, k)? - f(i, j - 1, k)?) / (2.0 * h[1]),
            (f(i, j, k + 1)? - f(i, j, k - 1)?) / (2.0 * h[2]),
        ])
    }

    /// Eikonal residual `|g^-1(d rho, d rho) + 1|` from grid differences, over
    /// interior nodes with `rho > rho_cap` whose stencil is valid.
    /// Returns `(max, count)`.
    pub fn eikonal_residual(&self, spec: &MetricSpec, rho_cap: f64) -> (f64, usize) {
        let mut worst = 0.0f64;
        let mut count = 0;
        for i in 0..self.shape[0] {
            for j in 0..self.shape[1] {
                for k in 0..self.shape[2] {
                    let r = self.rho[self.index(i, j, k)];
                    if !(r > rho_cap) {
                        continue;
                    }
                    if let Some(d) = self.grid_gradient(i, j, k) {
                        let q = self.node(i, j, k);
                        let gi = inverse_fast(&spec.jet_fast(&q).g);
                        let mut s = 1.0;
                        for a in 0..3 {
                            for b in 0..3 {
                                s += gi[a][b] * d[a] * d[b];
                            }
                        }
                        worst = worst.max(s.abs());
                        count += 1;
                    }
                }
            }
        }
        (worst, count)
    }

    /// Same residual using the exact per-node gradient.
    pub fn eikonal_residual_exact(&self, spec: &MetricSpec) -> f64 {
        let mut worst = 0.0f64;
        for (n, d) in self.grad.iter().enumerate() {
            if !self.rho[n].is_finite() || self.rho[n] == 0.0 {
                continue;
            }
            let i = n / (self.shape[1] * self.shape[2]);
            let j = (n / self.shape[2]) % self.shape[1];
            let k = n % self.shape[2];
            let gi = inverse_fast(&spec.jet_fast(&self.node(i, j, k)).g);
            let mut s = 1.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += gi[a][b] * d[a] * d[b];
                }
            }
            worst = worst.max(s.abs());
        }
        worst
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + self.rho.len() * 48);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.metric_hash.to_le_bytes());
        for v in self.vertex.iter().chain(&[self.t0]).chain(&self.x_range).chain(&self.y_range) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for s in self.shape {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for (n, r) in self.rho.iter().enumerate() {
            buf.extend_from_slice(&r.to_le_bytes());
            for v in self.grad[n].iter().chain(&self.w[n]) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = |m: &str| DescentError::Io(format!("{}: {m}", path.display()));
        if buf.len() < 16 || &buf[0..4] != MAGIC {
            return Err(bad("not a rho-field cache"));
        }
        let mut off = 4;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = buf.get(off..off + n).ok_or_else(|| bad("truncated"))?;
            off += n;
            Ok(s)
        };
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad("unsupported cache version"));
        }
        let metric_hash = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut f = || -> Result<f64> { Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())) };
        let hdr: Vec<f64> = (0..8).map(|_| f()).collect::<Result<_>>()?;
        let mut shape = [0usize; 3];
        for s in shape.iter_mut() {
            *s = f()?.to_bits() as usize;
        }
        let total = shape.iter().product::<usize>();
        if total == 0 || total > 1 << 28 {
            return Err(bad("implausible shape"));
        }
        let mut rho = Vec::with_capacity(total);
        let mut grad = Vec::with_capacity(total);
        let mut w = Vec::with_capacity(total);
        for _ in 0..total {
            rho.push(f()?);
            grad.push([f()?, f()?, f()?]);
            w.push([f()?, f()?]);
        }
        Ok(RhoField {
            vertex: [hdr[0], hdr[1], hdr[2]],
            t0: hdr[3],
            x_range: [hdr[4], hdr[5]],
            y_range: [hdr[6], hdr[7]],
            shape,
            metric_hash,
            rho,
            grad,
            w,
        })
    }
}

/// Sections of the null cone of `p` by the slices `p_t - taus[i]`, as
/// closed polygons from a fan of null rays.
pub fn null_sections(spec: &MetricSpec, p: &Point, taus: &[f64]) -> Result<Vec<Vec<[f64; 2]>>> {
    let vf = VertexFrame::new(spec, p)?;
    let span = taus.last().copied().unwrap_or(0.0);
    let m = 96;
    let mut out = vec![Vec::with_capacity(m); taus.len()];
    for k in 0..m {
        let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let sts = trace_ray(spec, &vf, [th.cos(), th.sin()], taus, &RayOptions { h_max: span.max(1e-9) / 128.0 })?;
        for (i, s) in sts.iter().enumerate() {
            out[i].push([s.x[1], s.x[2]]);
        }
    }
    Ok(out)
}

/// Box containing the null cone of `p` down to `t0`.
pub fn null_reach(spec: &MetricSpec, p: &Point, t0: f64) -> Result<([f64; 2], [f64; 2])> {
    let tau = p[0] - t0;
    let taus: Vec<f64> = (1..=16).map(|i| tau * i as f64 / 16.0).collect();
    let mut xr = [p[1], p[1]];
    let mut yr = [p[2], p[2]];
    for sec in null_sections(spec, p, &taus)? {
        for q in sec {
            xr = [xr[0].min(q[0]), xr[1].max(q[0])];
            yr = [yr[0].min(q[1]), yr[1].max(q[1])];
        }
    }
    let pad = 0.02 * (xr[1] - xr[0]).max(yr[1] - yr[0]);
    Ok(([xr[0] - pad, xr[1] + pad], [yr[0] - pad, yr[1] + pad]))
}

/// Whether `q` is inside the polygon or within `tol` of its boundary.
pub(crate) fn near_inside(poly: &[[f64; 2]], q: [f64; 2], tol: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > q[1]) != (b[1] > q[1]) && q[0] < a[0] + (q[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]) {
            inside = !inside;
        }
        let d = [b[0] - a[0], b[1] - a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let s = if l2 > 0.0 { (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
        if (q[0] - a[0] - s * d[0]).hypot(q[1] - a[1] - s * d[1]) < tol {
            return true;
        }
    }
    inside
}

fn gradient_of(spec: &MetricSpec, st: &RayState) -> [f64; 3] {
    let g = spec.jet_fast(&st.x).g;
    let mut nrm = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            nrm -= g[a][b] * st.xd[a] * st.xd[b];
        }
    }
    let rp = nrm.sqrt();
    std::array::from_fn(|m| -(0..3).map(|a| g[m][a] * st.xd[a] / rp).sum::<f64>())
}

/// Solves for `rho` at every node of an `(nt, nx, ny)` grid over
/// `[t0, t_p] x reach` by Newton shooting, warm-started slice to slice.
pub fn build_rho_field(spec: &MetricSpec, p: &Point, t0: f64, shape: [usize; 3]) -> Result<RhoField> {
    if shape.iter().any(|&s| s < 3) {
        return Err(DescentError::Config("rho grid needs at least 3 nodes per axis".into()));
    }
    if !(t0 < p[0]) {
        return Err(DescentError::Config("t0 must lie below the vertex".into()));
    }
    let vf = VertexFrame::new(spec, p)?;
    let (x_range, y_range) = null_reach(spec, p, t0)?;
    let total = shape.iter().product();
    let mut field = RhoField {
        vertex: *p,
        t0,
        x_range,
        y_range,
        shape,
        metric_hash: spec.hash64(),
        rho: vec![f64::NAN; total],
        grad: vec![[f64::NAN; 3]; total],
        w: vec![[f64::NAN; 2]; total],
    };
    let mut any_near_vertex = false;
    let taus: Vec<f64> = (0..shape[0]).map(|i| (p[0] - field.node(i, 0, 0)[0]).max(0.0)).rev().collect();
    let sections = null_sections(spec, p, &taus)?;
    let hs = field.spacing();
    let tol = 0.05 * hs[1].min(hs[2]);
    // top slice first; t index nt-1 is the vertex slice
    for i in (0..shape[0]).rev() {
        let sec = &sections[shape[0] - 1 - i];
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                let q = field.node(i, j, k);
                let n = field.index(i, j, k);
                let tau = p[0] - q[0];
                if tau <= 1e-14 {
                    if (q[1] - p[1]).abs() < 1e-12 && (q[2] - p[2]).abs() < 1e-12 {
                        field.rho[n] = 0.0;
                        field.w[n] = [0.0, 0.0];
                    }
                    continue;
                }
                if !near_inside(sec, [q[1], q[2]], tol) {
                    continue;
                }
                let up = field.index(i + 1, j, k);
                let warm = if i + 1 < shape[0] && field.rho[up].is_finite() {
                    let tu = p[0] - field.node(i + 1, j, k)[0];
                    let s = if tau > 0.0 { tu / tau } else { 1.0 };
                    Some([field.w[up][0] * s, field.w[up][1] * s])
                } else {
                    None
                };
                let opts = RayOptions { h_max: tau / 64.0 };
                if let Ok((w, rho, st)) = shoot_with_frame(spec, &vf, &q, warm, &opts) {
                    field.rho[n] = rho;
                    field.w[n] = w;
                    field.grad[n] = gradient_of(spec, &st);
                    if i + 2 >= shape[0] {
                        any_near_vertex = true;
                    }
                }
            }
        }
    }
    if !any_near_vertex && shape[1] * shape[2] > 0 {
        // the slice just below the vertex always contains the axis node when
        // the vertex is on the grid; otherwise accept the first valid slice
        if field.valid_count() <= 1 {
            return Err(DescentError::VertexUnresolved);
        }
    }
    Ok(field)
}

/// Loads a cached field when its metric hash, vertex and shape match, and
/// rebuilds (and rewrites) it otherwise.
pub fn load_or_build(spec: &MetricSpec, p: &Point, t0: f64, shape: [usize; 3], path: &Path) -> Result<RhoField> {
    if let Ok(f) = RhoField::read_cache(path) {
        if f.metric_hash == spec.hash64() && f.vertex == *p && f.t0 == t0 && f.shape == shape {
            return Ok(f);
        }
    }
    let f = build_rho_field(spec, p, t0, shape)?;
    f.write_cache(path)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Domain;

    fn flat() -> MetricSpec {
        MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] })
    }

    #[test]
    fn flat_field_matches_closed_form() {
        let s = flat();
        let p = [1.0, 0.0, 0.0];
        let f = build_rho_field(&s, &p, 0.0, [5, 9, 9]).unwrap();
        assert!((f.x_range[1] - 1.04).abs() < 1e-9);
        let mut checked = 0;
        for i in 0..5 {
            for j in 0..9 {
                for k in 0..9 {
                    let q = f.node(i, j, k);
                    let tau: f64 = 1.0 - q[0];
                    let r2 = q[1] * q[1] + q[2] * q[2];
                    let v = f.rho[f.index(i, j, k)];
                    if tau * tau - r2 > 1e-3 {
                        assert!((v - (tau * tau - r2).sqrt()).abs() < 1e-12, "{q:?}");
                        checked += 1;
                    } else if tau * tau < r2 {
                        assert!(v.is_nan());
                    }
                }
            }
        }
        assert!(checked > 20);
        assert!(f.eikonal_residual_exact(&s) < 1e-12);
    }

    #[test]
    fn cache_roundtrip_and_rejects_garbage() {
        let s = flat();
        let f = build_rho_field(&s, &[1.0, 0.0, 0.0], 0.5, [3, 5, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.bin");
        f.write_cache(&path).unwrap();
        let g = RhoField::read_cache(&path).unwrap();
        assert_eq!(f.shape, g.shape);
        assert_eq!(f.metric_hash, g.metric_hash);
        for (a, b) in f.rho.iter().zip(&g.rho) {
            assert!(a.to_bits() == b.to_bits());
        }
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(RhoField::read_cache(&path), Err(DescentError::Io(_))));
    }
}
