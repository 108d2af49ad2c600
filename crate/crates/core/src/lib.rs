//! Device-independent certification of two maximally entangled qubit pairs.
//!
//! Noisy Double-CHSH and Magic-Square strategies are simulated explicitly, the swap-isometry
//! fidelity is written as a linear functional of operator moments, and that functional is
//! minimized over a moment-matrix relaxation with a built-in interior-point solver. The
//! closed-form norm bound for the magic square and its derivation checks live in [`analytic`].

pub mod analytic;
pub mod bound;
pub mod games;
pub mod linalg;
pub mod npa;
pub mod quantum;
pub mod scenario;
pub mod sdp;
pub mod swap;

pub use bound::{bound_at, sdp_bound, sdp_row, BoundError, BoundOptions, BoundResult, Method, SdpOutcome};
pub use linalg::{CMatrix, C64};
pub use npa::{Level, MomentProgram, SdpForm, Word};
pub use quantum::{behavior_from_strategy, Behavior, DensityState, PvmFamily, Strategy};
pub use scenario::Scenario;
pub use sdp::{Certificate, SdpProblem, SdpSolution, SolveStatus, SolverOptions};
