//! Moment-matrix relaxation of the quantum set over a fixed monomial list.

mod embed;
mod program;
mod reduce;
pub mod word;

pub use embed::{to_sdp, Embedding, Part, SdpForm, SdpMap, SdpVariable};
pub use program::{
    build_program, feasible_point, moment_set, pin_value, Entry, Equality, Level, MomentProgram, Objective, PointReport,
    ProgramDump, ProgramError, VarRef, SIGNALING_TOL,
};
pub use reduce::{Expansion, Reducer};
pub use word::{canonicalize, product, Letter, Party, Word};
