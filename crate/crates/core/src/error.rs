use thiserror::Error;

/// Errors raised across the crate.
///
/// Violations found by sampled checks are *data* and are reported through
/// [`crate::report::CheckReport`], never through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no bracket: target {target} exceeds f(domain_cap) = {reachable}")]
    NoBracket { target: f64, reachable: f64 },
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("comparison function fails {class} certification at s = {at}: {reason}")]
    NotCertified {
        class: &'static str,
        at: f64,
        reason: String,
    },
    #[error("decay times are not strictly increasing at level {level} (r = {r})")]
    NonMonotoneTimes { level: usize, r: f64 },
    #[error("argument {tau} outside [-{theta}, 0]")]
    OutOfDomain { tau: f64, theta: f64 },
    #[error("bad step h = {h}; need 0 < h < {theta}")]
    BadStep { h: f64, theta: f64 },
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("time {t} outside computed span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("delay mismatch: functional expects θ = {expected}, history has θ = {found}")]
    DelayMismatch { expected: f64, found: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("integrand 1/σ(ψ₁⁻¹(s)) is not finite near s = {at}")]
    DivergentIntegrand { at: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solution escaped at t = {0}")]
    Escape(f64),
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("fit failure: {0}")]
    FitFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
