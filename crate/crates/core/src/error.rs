use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("stability index alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("scale c0 must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("resolution must be at least 1")]
    InvalidResolution,
    #[error("invalid range [{lo}, {hi}]: need lo < hi")]
    InvalidRange { lo: i64, hi: i64 },
    #[error("scaling parameter N = {n} does not divide the path resolution M = {resolution}")]
    ResolutionMismatch { n: u64, resolution: u64 },
    #[error("window must contain at least {needed} bonds, got {got}")]
    WindowTooSmall { needed: usize, got: usize },
    #[error("lattice function does not match the environment (window or N differ)")]
    WindowMismatch,
    #[error("degenerate environment: {0}")]
    DegenerateEnvironment(String),
    #[error("times must be finite, non-negative and strictly increasing")]
    InvalidTimes,
    #[error("time step bound must be positive, got {0}")]
    InvalidStep(f64),
    #[error("site {site} lies outside the window [{lo}, {hi}]")]
    SiteOutsideWindow { site: i64, lo: i64, hi: i64 },
    #[error("resolvent parameter lambda must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("kernel value {value} at site {site} is negative beyond round-off")]
    NegativeKernel { site: i64, value: f64 },
    #[error("kernel mass {mass:e} within {sites} sites of the boundary exceeds {limit:e}; use a larger window")]
    BoundaryMass { mass: f64, sites: usize, limit: f64 },
    #[error("implicit scheme could not keep values within the initial range (excess {excess:e})")]
    MaxPrincipleViolated { excess: f64 },
    #[error("profile value {value} at site {site} is outside [0, 1]")]
    ProfileOutOfRange { site: i64, value: f64 },
    #[error("sample time {time} lies beyond the horizon {horizon}")]
    SampleTimeBeyondHorizon { time: f64, horizon: f64 },
    #[error("configuration carries no tagged particle")]
    MissingTag,
    #[error("target mass {target} is outside (0, {total})")]
    TargetMassOutOfRange { target: f64, total: f64 },
    #[error("density vanishes at the crossing cell {site}; the quantile is not unique")]
    ZeroDensityAtCrossing { site: i64 },
    #[error("particles came within {sites} sites of the window edge in {fraction} of replicas (limit {limit}); use a larger window")]
    BoundaryReached { sites: usize, fraction: f64, limit: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("measure was not built from this environment")]
    ForeignMeasure,
    #[error("invalid atomic measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
}
