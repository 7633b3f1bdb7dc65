//! Run configuration, read from TOML. See the README for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DescentError, Result};
use crate::fdtd::FdtdOptions;
use crate::field::{Field, SourceMode};
use crate::injectivity::InjectivityOptions;
use crate::metric::{MetricSpec, Point};
use crate::quadrature::QuadratureOptions;
use crate::representation::{PoissonOptions, RepresentationOptions, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_eik: f64,
    pub tol_id: f64,
    pub tol_tr: f64,
    pub tol_quad: f64,
    pub tol_curv: f64,
    /// Relative error of the reconstructed value against a known field.
    pub tol_rep: f64,
    /// Pairwise relative agreement of independent evaluations.
    pub tol_oracle: f64,
    /// Relative gap between the lifted formula and twice the planar one.
    pub tol_descent: f64,
    /// Vertex limits of `rho tr k` and `b`.
    pub tol_vertex: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_eik: 1e-4,
            tol_id: 5e-4,
            tol_tr: 1e-6,
            tol_quad: 1e-6,
            tol_curv: 1e-6,
            tol_rep: 5e-3,
            tol_oracle: 1e-3,
            tol_descent: 1e-2,
            tol_vertex: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// `(nt, nx, ny)` of the cached rho grid.
    pub rho_grid: [usize; 3],
    pub quadrature: QuadratureOptions,
    pub poisson: PoissonOptions,
    pub fdtd: FdtdOptions,
    /// RK4 steps per unit span in the identity suite.
    pub identities: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            rho_grid: [9, 33, 33],
            quadrature: QuadratureOptions::default(),
            poisson: PoissonOptions::default(),
            fdtd: FdtdOptions::default(),
            identities: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentSection {
    pub variant: Variant,
    pub source: SourceMode,
    pub check_injectivity: bool,
    pub kirchhoff: bool,
}

impl Default for RepresentSection {
    fn default() -> Self {
        RepresentSection {
            variant: Variant::Corrected,
            source: SourceMode::Analytic,
            check_injectivity: false,
            kirchhoff: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitySection {
    /// Random cone points per run.
    pub points: usize,
    /// Also rerun at double resolution and require the residuals to fall by
    /// this factor (0 disables the check).
    pub min_ratio: f64,
}

impl Default for IdentitySection {
    fn default() -> Self {
        IdentitySection { points: 200, min_ratio: 1.8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectivitySection {
    /// Lowest slice scanned; defaults to `t0`.
    pub t_floor: Option<f64>,
    pub options: InjectivityOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), cache_dir: PathBuf::from("cache") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: MetricSpec,
    pub vertex: Point,
    pub t0: f64,
    #[serde(default = "default_field")]
    pub field: Field,
    /// Scalar `J` at the vertex.
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub represent: RepresentSection,
    #[serde(default)]
    pub identities: IdentitySection,
    #[serde(default)]
    pub injectivity: InjectivitySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_field() -> Field {
    Field::Manufactured
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| DescentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DescentError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fails for values TOML cannot hold, such as a seed above `i64::MAX`.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DescentError::Config(e.to_string()))
    }

    /// The metric rebuilt through its checked constructor.
    pub fn spec(&self) -> Result<MetricSpec> {
        MetricSpec::new(self.metric.family, self.metric.domain, self.metric.deriv_mode)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DescentError::Config(m));
        self.spec()?;
        if !self.metric.domain.contains(&self.vertex, 0.0) {
            return bad(format!("vertex {:?} lies outside the domain", self.vertex));
        }
        if !(self.t0 < self.vertex[0]) {
            return bad(format!("t0 = {} must lie below the vertex time {}", self.t0, self.vertex[0]));
        }
        if self.t0 < self.metric.domain.t[0] {
            return bad(format!("t0 = {} lies below the domain", self.t0));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_eik", t.tol_eik),
            ("tol_id", t.tol_id),
            ("tol_tr", t.tol_tr),
            ("tol_quad", t.tol_quad),
            ("tol_curv", t.tol_curv),
            ("tol_rep", t.tol_rep),
            ("tol_oracle", t.tol_oracle),
            ("tol_descent", t.tol_descent),
            ("tol_vertex", t.tol_vertex),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        let r = &self.resolution;
        r.quadrature.validate()?;
        if r.rho_grid.iter().any(|&n| n < 3) {
            return bad("rho_grid needs at least 3 nodes per axis".into());
        }
        if r.identities < 4 {
            return bad("identity resolution must be at least 4".into());
        }
        if r.poisson.n_tau < 2 || r.poisson.n_psi < 2 || r.poisson.n_theta < 4 {
            return bad("poisson rule needs n_tau, n_psi >= 2 and n_theta >= 4".into());
        }
        if !(r.fdtd.dx > 0.0) || !(r.fdtd.cfl > 0.0) || r.fdtd.half_width.iter().any(|h| !(*h > 0.0)) {
            return bad("fdtd needs positive dx, cfl and half widths".into());
        }
        if self.j == 0.0 || !self.j.is_finite() {
            return bad("j must be finite and nonzero".into());
        }
        if let Some(tf) = self.injectivity.t_floor {
            if !(tf < self.vertex[0]) || tf < self.metric.domain.t[0] {
                return bad(format!("t_floor = {tf} must lie in the domain below the vertex"));
            }
        }
        if self.identities.points == 0 {
            return bad("identities.points must be positive".into());
        }
        Ok(())
    }

    pub fn representation_options(&self) -> RepresentationOptions {
        RepresentationOptions {
            quadrature: self.resolution.quadrature,
            source: self.represent.source,
            variant: self.represent.variant,
            check_injectivity: self.represent.check_injectivity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
vertex = [1.0, 0.0, 0.0]
t0 = 0.0

[metric]
deriv_mode = { mode = "analytic" }
family = { family = "perturbed_lapse", eps = 0.05, shape = { kind = "linear" } }
domain = { t = [-1.0, 2.0], x = [-3.0, 3.0], y = [-3.0, 3.0] }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml(MIN).unwrap();
        assert_eq!(c.field, Field::Manufactured);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.resolution.quadrature.n_psi, 16);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_tables_and_rejections() {
        let c = RunConfig::from_toml(&format!("{MIN}\n[resolution.quadrature]\nn_tau = 8\n")).unwrap();
        assert_eq!((c.resolution.quadrature.n_tau, c.resolution.quadrature.n_theta), (8, 24));
        let bad_t0 = MIN.replace("t0 = 0.0", "t0 = 1.5");
        assert!(matches!(RunConfig::from_toml(&bad_t0), Err(DescentError::Config(_))));
        let typo = format!("{MIN}\n[tolerances]\ntol_idd = 1.0\n");
        assert!(matches!(RunConfig::from_toml(&typo), Err(DescentError::Config(_))));
        let neg = format!("{MIN}\n[tolerances]\ntol_id = -1.0\n");
        assert!(RunConfig::from_toml(&neg).is_err());
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/run.toml")), Err(DescentError::Io(_))));
        let huge = RunConfig { seed: u64::MAX, ..RunConfig::from_toml(MIN).unwrap() };
        assert!(matches!(huge.to_toml(), Err(DescentError::Config(_))));
    }
}
