//! Quantum filtering and estimation Lie algebras on finite-dimensional
//! Hilbert spaces.
//!
//! The crate covers five layers:
//!
//! * [`operators`] — dense complex matrix algebra (the system operators
//!   L_k, H, K, X).
//! * [`superops`] — super-operators as d^2 x d^2 matrices on the vectorized
//!   operator space: zeta maps X -> XA + A^dag X, Lindblad generators, and
//!   the Stratonovich drift split.
//! * [`lie_engine`] — real-linear Lie closure of matrix sets, structure
//!   constants, the operator and estimation algebras of a measurement
//!   model, and Wei-Norman propagation.
//! * [`qfilter`] — synthetic homodyne records and Ito/Stratonovich
//!   integration of the linear filtering equation in density and pure-state
//!   pictures.
//! * [`classical`] — the classical polynomial estimation algebra (exact
//!   rational arithmetic): DMZ generator, gauge field, potential, and
//!   symbolic Lie closure.
//!
//! All floating-point code is generic over the real [`Scalar`] type;
//! `f64` aliases for the main types live at the crate root.

pub mod classical;
pub mod io;
pub mod lie_engine;
mod linalg;
pub mod operators;
pub mod presets;
pub mod qfilter;
pub mod sampling;
pub mod scalar;
pub mod superops;
pub mod verify;

pub use operators::{HermitianCheck, Operator, OperatorError, MAX_DIM};
pub use scalar::{Scalar, C};
pub use superops::{KForm, MeasurementScheme, ModelSpec, SuperOperator};

/// f64 concrete aliases for downstream code that does not care about the
/// generic scalar parameter.
pub type Operator64 = operators::Operator<f64>;
pub type SuperOperator64 = superops::SuperOperator<f64>;
pub type ModelSpec64 = superops::ModelSpec<f64>;
pub type MeasurementScheme64 = superops::MeasurementScheme<f64>;
pub type LieBasis64 = lie_engine::LieBasis<f64>;
pub type ClosureReport64 = lie_engine::ClosureReport<f64>;
pub type TrajectoryRecord64 = qfilter::TrajectoryRecord<f64>;
pub type Operator32 = operators::Operator<f32>;
pub type SuperOperator32 = superops::SuperOperator<f32>;

/// Default tolerances and caps used by the CLI and the verification suite.
pub mod defaults {
    /// Rank tolerance for Lie-closure decisions, scaled by the largest
    /// generator norm.
    pub const CLOSURE_TOL: f64 = 1e-9;
    /// Identity-suite defect tolerance.
    pub const IDENTITY_TOL: f64 = 1e-12;
    /// Unnormalized-filter degeneracy threshold on sigma_t(I).
    pub const DEGENERACY_FLOOR: f64 = 1e-300;
    /// Relative eigenvalue floor below which the density picture repairs
    /// positivity by clipping.
    pub const POSITIVITY_CLIP: f64 = -1e-10;
    /// Condition-number ceiling for the Wei-Norman chart matrix.
    pub const CHART_COND_MAX: f64 = 1e12;
    /// Abort threshold on the total degree of intermediate symbolic
    /// operators in the classical closure.
    pub const DEGREE_GUARD: u32 = 60;
}
