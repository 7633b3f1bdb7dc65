//! Scalar test fields: closed-form solutions, manufactured fields and
//! Cauchy-data-only pulses.

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::metric::{christoffel, inverse, Mat, MetricSpec, Point};

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldJet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: Mat<3>,
}

impl FieldJet {
    pub fn along(&self, v: &[f64; 3]) -> f64 {
        self.grad[0] * v[0] + self.grad[1] * v[1] + self.grad[2] * v[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Constant { value: f64 },
    /// `offset + coef . (t, x^1, x^2)`.
    Affine { coef: [f64; 3], offset: f64 },
    /// `sin(t) exp(-|x|^2)`.
    Manufactured,
    /// Static `amplitude exp(-|x - center|^2 / width^2)`, with its own source.
    StaticGauss { amplitude: f64, width: f64, center: [f64; 2] },
    /// Data `phi = amplitude exp(-|x - center|^2 / width^2)`, `d_t phi = 0`
    /// on `t = t0` and `F = 0`; the field is unknown off the data slice.
    CauchyGauss { amplitude: f64, width: f64, center: [f64; 2], t0: f64 },
}

/// How `F = Box_g phi` is produced for fields known in the interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SourceMode {
    Analytic,
    /// Second-order central differences of step `h` (see `fdtd::boxg_apply`).
    Stencil { h: f64 },
}

fn gauss_jet(amp: f64, width: f64, c: [f64; 2], q: &Point) -> FieldJet {
    let w2 = width * width;
    let d = [q[1] - c[0], q[2] - c[1]];
    let v = amp * (-(d[0] * d[0] + d[1] * d[1]) / w2).exp();
    let mut j = FieldJet { value: v, ..Default::default() };
    for i in 0..2 {
        j.grad[i + 1] = -2.0 * d[i] / w2 * v;
        for k in 0..2 {
            let delta = if i == k { 1.0 } else { 0.0 };
            j.hess[i + 1][k + 1] = (4.0 * d[i] * d[k] / (w2 * w2) - 2.0 * delta / w2) * v;
        }
    }
    j
}

impl Field {
    /// Whether the field is known away from a data slice.
    pub fn has_interior(&self) -> bool {
        !matches!(self, Field::CauchyGauss { .. })
    }

    pub fn jet(&self, q: &Point) -> Result<FieldJet> {
        let [t, x, y] = *q;
        Ok(match *self {
            Field::Constant { value } => FieldJet { value, ..Default::default() },
            Field::Affine { coef, offset } => FieldJet {
                value: offset + coef[0] * t + coef[1] * x + coef[2] * y,
                grad: coef,
                hess: [[0.0; 3]; 3],
            },
            Field::Manufactured => {
                let e = (-(x * x + y * y)).exp();
                let (s, c) = t.sin_cos();
                let mut h = [[0.0; 3]; 3];
                h[0][0] = -s * e;
                h[0][1] = -2.0 * x * c * e;
                h[0][2] = -2.0 * y * c * e;
                h[1][1] = s * e * (4.0 * x * x - 2.0);
                h[2][2] = s * e * (4.0 * y * y - 2.0);
                h[1][2] = 4.0 * x * y * s * e;
                h[1][0] = h[0][1];
                h[2][0] = h[0][2];
                h[2][1] = h[1][2];
                FieldJet { value: s * e, grad: [c * e, -2.0 * x * s * e, -2.0 * y * s * e], hess: h }
            }
            Field::StaticGauss { amplitude, width, center } => gauss_jet(amplitude, width, center, q),
            Field::CauchyGauss { amplitude, width, center, t0 } => {
                if (t - t0).abs() > 1e-12 * (1.0 + t0.abs()) {
                    return Err(DescentError::CoefficientUnavailable(format!(
                        "field is known only on the data slice t = {t0}"
                    )));
                }
                gauss_jet(amplitude, width, center, q)
            }
        })
    }

    pub fn value(&self, q: &Point) -> Result<f64> {
        Ok(self.jet(q)?.value)
    }

    /// `F = Box_g phi` at `q`.
    pub fn source(&self, spec: &MetricSpec, q: &Point, mode: SourceMode) -> Result<f64> {
        if !self.has_interior() {
            return Ok(0.0);
        }
        match mode {
            SourceMode::Analytic => box_analytic(spec, q, &self.jet(q)?),
            SourceMode::Stencil { h } => {
                crate::fdtd::boxg_apply(spec, |x: &Point| self.jet(x).map(|j| j.value).unwrap_or(f64::NAN), q, h)
            }
        }
    }

    /// `(phi, d_x phi, d_y phi, d_t phi)` on the slice `t`.
    pub fn cauchy_data(&self, t: f64, x: [f64; 2]) -> Result<[f64; 4]> {
        let j = self.jet(&[t, x[0], x[1]])?;
        Ok([j.value, j.grad[1], j.grad[2], j.grad[0]])
    }
}

/// `g^ab (d_a d_b phi - G^c_ab d_c phi)` from an exact jet.
pub fn box_analytic(spec: &MetricSpec, q: &Point, j: &FieldJet) -> Result<f64> {
    let jet = spec.jet(q, 1)?;
    let gamma = christoffel(&jet)?.gamma;
    let ginv = inverse(&jet.g).ok_or(DescentError::SingularMetric { point: *q })?;
    let mut s = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let mut h = j.hess[a][b];
            for c in 0..3 {
                h -= gamma[c][a][b] * j.grad[c];
            }
            s += ginv[a][b] * h;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Domain;

    #[test]
    fn manufactured_jet_matches_differences() {
        let f = Field::Manufactured;
        let q = [0.4, 0.3, -0.2];
        let j = f.jet(&q).unwrap();
        let h = 1e-5;
        for a in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[a] += h;
            qm[a] -= h;
            let (jp, jm) = (f.jet(&qp).unwrap(), f.jet(&qm).unwrap());
            assert!(((jp.value - jm.value) / (2.0 * h) - j.grad[a]).abs() < 1e-9);
            for b in 0..3 {
                assert!(((jp.grad[b] - jm.grad[b]) / (2.0 * h) - j.hess[a][b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_box_of_simple_fields() {
        let s = MetricSpec::minkowski(Domain { t: [-1.0, 2.0], x: [-3.0, 3.0], y: [-3.0, 3.0] });
        let q = [0.5, 0.1, -0.2];
        let aff = Field::Affine { coef: [1.0, 1.0, 0.0], offset: 0.0 };
        assert_eq!(aff.source(&s, &q, SourceMode::Analytic).unwrap(), 0.0);
        let m = Field::Manufactured.source(&s, &q, SourceMode::Analytic).unwrap();
        let j = Field::Manufactured.jet(&q).unwrap();
        assert!((m - (-j.hess[0][0] + j.hess[1][1] + j.hess[2][2])).abs() < 1e-15);
        let c = Field::CauchyGauss { amplitude: 1.0, width: 0.5, center: [0.0, 0.0], t0: 0.0 };
        assert!(c.jet(&q).is_err());
        assert_eq!(c.source(&s, &q, SourceMode::Analytic).unwrap(), 0.0);
    }
}
