//! Error taxonomy for the solver stack.
//!
//! Errors are split by failure mode so callers (and the CLI exit-code
//! mapping) can distinguish "the data is bad" from "the iteration broke"
//! from "a runtime monitor tripped".

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SlabflowError>;

/// All failure modes surfaced by the solver stack.
#[derive(Debug, Error)]
pub enum SlabflowError {
    /// Two fields (or a field and an operator) live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The initial surface touches or crosses the bottom.
    #[error("initial surface touches the bottom: min(eta0 + b) = {min:.6e} <= 0")]
    SurfaceTouchesBottom { min: f64 },

    /// The epsilon rule produced a flattening map whose Jacobian dips below
    /// the separation margin delta; the surface is too rough for the
    /// extension constant in use.
    #[error(
        "epsilon rule failed: min J0 = {min_j:.6e} <= delta = {delta:.6e} \
         (epsilon = {epsilon:.3e}); decrease C_poisson or refine the surface"
    )]
    EpsilonRuleFailed { min_j: f64, delta: f64, epsilon: f64 },

    /// The flattening map degenerated (J lost positivity) at build time.
    #[error("degenerate flattening map: min J = {min_j:.6e} <= 0")]
    DegenerateMap { min_j: f64 },

    /// A per-mode flat kernel factorization failed.
    #[error("singular flat kernel block at mode ({n1}, {n2})")]
    SingularBlock { n1: i64, n2: i64 },

    /// The defect-correction sweep residual grew for several consecutive
    /// sweeps: the surface is too far from flat for the flat-reference
    /// perturbation iteration to contract.
    #[error(
        "perturbation iteration divergent after {sweeps} sweeps \
         (residual {residual:.3e}); surface too far from flat"
    )]
    PerturbationDivergent { sweeps: usize, residual: f64 },

    /// The defect-correction loop hit its sweep budget without converging.
    #[error("elliptic solve exceeded {max_sweeps} sweeps (residual {residual:.3e}, tol {tol:.3e})")]
    MaxSweeps { max_sweeps: usize, residual: f64, tol: f64 },

    /// Initial data violates a constraint (divergence, no-slip, or the
    /// tangential stress compatibility condition).
    #[error("incompatible initial data ({what}): residual {residual:.3e} > tol {tol:.3e}")]
    IncompatibleData { what: String, residual: f64, tol: f64 },

    /// Advective CFL violated in the surface transport solve.
    #[error(
        "CFL violation in surface transport: dt = {dt:.3e} gives Courant number \
         {courant:.3} >= 0.5; reduce dt"
    )]
    CflViolation { dt: f64, courant: f64 },

    /// The Jacobian dipped below its floor during a time window.
    #[error("Jacobian floor violated at t = {t:.6}: min J = {min_j:.6e} <= {floor:.6e}")]
    JacobianFloor { t: f64, min_j: f64, floor: f64 },

    /// A Picard boundedness monitor tripped (surface drift cap or Jacobian
    /// floor) — the window is outside the guaranteed contraction regime.
    #[error("boundedness monitor tripped at Picard sweep {sweep}: {what}")]
    MonitorTripped { sweep: usize, what: String },

    /// Picard distances failed to decrease; the window is too long.
    #[error(
        "Picard contraction failed after {sweeps} sweeps \
         (last N-distance {distance:.3e}); shorten the window"
    )]
    ContractionFailed { sweeps: usize, distance: f64 },

    /// One or more configuration errors; the message lists every problem
    /// with its line number.
    #[error("configuration errors:\n{0}")]
    Config(String),

    /// Malformed dump or summary file.
    #[error("malformed file {path}: {what}")]
    MalformedFile { path: String, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
