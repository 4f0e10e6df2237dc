//! Constructive solver for the Landau–Lifshitz–Gilbert equation
//!
//! ```text
//! m_t - alpha m x m_t = -C_e m x Δm   in (0,T) x D,   ∂_n m = 0,   m(0) = m0
//! ```
//!
//! on the unit box `D = [0,1]^d`, `d ∈ {2,3}`. A strong solution is built as
//! the limit of the fixed-point iteration
//!
//! ```text
//! r_l = R(m_l),   L ∂_t R_l - C_e Δ R_l = r_l  (R_l(0) = 0, ∂_n R_l = 0),   m_{l+1} = m_l - R_l
//! ```
//!
//! where `R` is the nonlinear residual ([`residual`]) and `L a = alpha a + m0(x0) x a`
//! a constant 3×3 operator. Every linear solve is done per cosine mode
//! ([`heat`]) and convergence is monitored in discrete anisotropic space-time
//! Sobolev norms ([`norms`]).
//!
//! All numerics are generic over [`Real`]; the aliases below fix the
//! scalar for the common cases.

pub mod experiment;
pub mod field;
pub mod grid;
pub mod heat;
pub mod initdata;
pub mod iterate;
pub mod norms;
pub mod oracle;
pub mod residual;
pub mod scalar;
pub mod verify;

pub use field::{PhysicsParams, ScalarField, SpaceTimeField, VectorField};
pub use grid::{BackwardStencil, CosineBasis, SpaceGrid, TimeGrid};
pub use scalar::{Dd, Real};

pub type VectorField64 = VectorField<f64>;
pub type SpaceTimeField64 = SpaceTimeField<f64>;
pub type CosineBasis64 = CosineBasis<f64>;
pub type VectorFieldDd = VectorField<Dd>;
pub type SpaceTimeFieldDd = SpaceTimeField<Dd>;
pub type CosineBasisDd = CosineBasis<Dd>;
pub type LOperator64 = residual::LOperator<f64>;
pub type LOperatorDd = residual::LOperator<Dd>;
pub type Solver64 = iterate::Solver<f64>;
pub type SolverDd = iterate::Solver<Dd>;

/// Crate version recorded in run outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("need at least {needed} time steps, got {got}")]
    TooFewTimeSteps { needed: usize, got: usize },
    #[error("pivot m0(x0) has modulus {0}, expected 1")]
    NonUnitPivot(f64),
    #[error("perturbation too large: |u| = {0} < 0.5 before normalization")]
    PerturbationTooLarge(f64),
    #[error("singular mode matrix for eigenvalue {0}")]
    SingularModeMatrix(f64),
    #[error("non-finite values at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },
    #[error("oracle blow-up at t = {0}: |m| > 2")]
    OracleBlowUp(f64),
    #[error("iteration already terminated with status {0}")]
    Terminated(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
