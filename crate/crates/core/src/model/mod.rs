//! Symbolic potentials, derived nonlinearities and hypothesis checks.

pub mod hypotheses;
pub mod parse;
pub mod potential;
pub mod term;

pub use hypotheses::{
    check_gauge, check_hypotheses, check_mass_resonance, complex_gaussian, euler_identity_residual,
    gauge_residual, homogeneity_residual, HypothesisReport, MassResonance, Status, Witness,
};
pub use parse::{ParseError, ParseErrorKind};
pub use potential::{
    derive_all, derive_fk, eval_F, eval_fk, parse_potential, Nonlinearity, NonlinearTerm,
    ParamsError, PotentialF, SystemParams,
};
pub use term::Term;

/// Source text of the two-component quadratic-coupling potential.
pub const QUADRATIC_SYSTEM: &str = "zbar1^2*z2";
/// Source text of the two-component cubic third-harmonic potential.
pub const CUBIC_SYSTEM: &str =
    "(1/36)*abs(z1)^4 + (9/4)*abs(z2)^4 + abs(z1)^2*abs(z2)^2 + (1/9)*zbar1^3*z2";
