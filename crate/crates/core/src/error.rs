use thiserror::Error;

/// Crate-wide error type. Variant names follow the failure they report;
/// several of them ("NoChild", "DichotomyFailure") are structural
/// guarantees whose firing indicates a broken construction rather than a
/// recoverable condition, and tests treat them as failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not hyperbolic: every eigenvalue has modulus one")]
    NotHyperbolic,

    #[error("matrix is not unimodular: |det| = {det}, expected 1")]
    NotUnimodular { det: i64 },

    #[error("eigen solve failed: {0}")]
    EigenSolve(String),

    #[error("model invariant violated: {0}")]
    InvariantViolated(String),

    #[error("exact arithmetic unsupported for this model: {0}")]
    ExactUnsupported(String),

    #[error("domain at level {level} is degenerate (diameter {diam:.3e} below mesh {delta:.3e})")]
    DegenerateDomain { level: u32, diam: f64, delta: f64 },

    #[error("point lies on a shared cell boundary at level {level}")]
    OnBoundary { level: u32 },

    #[error("point lies outside the tiled domain at level {level}")]
    OutsideDomain { level: u32 },

    #[error("no child atom found {m} levels below level {level} (must not happen for m > a_star)")]
    NoChild { level: u32, m: u32 },

    #[error("illegal move by {player} at turn {turn}: {reason}")]
    IllegalMove {
        player: &'static str,
        turn: usize,
        reason: String,
    },

    #[error("tiling depth exceeded: level {needed} requested, {available} available")]
    TilingDepthExceeded { needed: u32, available: u32 },

    #[error("game has not converged: final diameter {diam_log:.3} (log) above tolerance {tol_log:.3} (log)")]
    NotConverged { diam_log: f64, tol_log: f64 },

    #[error("more than one obstacle component for iterate {k}")]
    MultipleComponents { k: u32 },

    #[error("avoidance dichotomy failed: neither branch avoids {need} of {total} obstacles")]
    DichotomyFailure { need: usize, total: usize },

    #[error("no child atom avoids all active obstacles (greedy mode, {total} active)")]
    NoAvoidingChild { total: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("zero stage density below parent atom at level {level}")]
    ZeroDensity { level: u32 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("subshift is empty: no sequence avoids the forbidden word")]
    EmptySubshift,

    #[error("scaling window too small: {usable} usable scales, need at least 3")]
    WindowTooSmall { usable: usize },

    #[error("configuration error in key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
