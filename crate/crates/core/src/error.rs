use thiserror::Error;

/// Errors raised by the geometry, transport and quadrature kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescentError {
    #[error("point {point:?} lies outside the metric domain")]
    OutOfDomain { point: [f64; 3] },
    #[error("lapse is not positive ({lapse}) at {point:?}")]
    NonpositiveLapse { point: [f64; 3], lapse: f64 },
    #[error("metric is numerically singular at {point:?}")]
    SingularMetric { point: [f64; 3] },
    #[error("rank mismatch: expected {expected} components, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("geodesic left the domain at t = {t}")]
    DomainExit { t: f64 },
    #[error("step control underflow at parameter {at}")]
    StepFailure { at: f64 },
    #[error("geodesic did not reach the slice t = {t}")]
    NotReached { t: f64 },
    #[error("shooting did not converge for target {target:?} (residual {residual:e})")]
    NoConvergence { target: [f64; 3], residual: f64 },
    #[error("no node near the vertex converged")]
    VertexUnresolved,
    #[error("point is too close to the vertex (rho = {rho:e})")]
    VertexTooClose { rho: f64 },
    #[error("point is too close to the cone axis or boundary (r_tilde = {r_tilde:e})")]
    ConeBoundaryTooClose { r_tilde: f64 },
    #[error("not enough samples along the geodesic for differencing")]
    InsufficientSamples,
    #[error("transport coefficient unavailable: {0}")]
    CoefficientUnavailable(String),
    #[error("vertex extrapolation unstable: {0}")]
    ExtrapolationUnstable(String),
    #[error("quadrature under-resolved: {0}")]
    QuadratureUnderResolved(String),
    #[error("direction fan too coarse: {0}")]
    FanTooCoarse(String),
    #[error("slice t0 lies beyond the causal injectivity estimate ({depth} > {c_star})")]
    InjectivityViolated { depth: f64, c_star: f64 },
    #[error("CFL ratio {ratio} exceeds the limit {limit}")]
    CflViolation { ratio: f64, limit: f64 },
    #[error("absorbing margin reaches the domain of dependence: {0}")]
    MarginContamination(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for DescentError {
    fn from(e: std::io::Error) -> Self {
        DescentError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DescentError>;
