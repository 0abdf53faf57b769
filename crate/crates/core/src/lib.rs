//! Numerical toolkit for focusing energy-critical coupled Schrodinger systems
//! with radial data: potentials and their nonlinearities, radial grids,
//! ground states, time evolution, virial diagnostics and dichotomy runs.

pub mod model;
pub mod grid;
pub mod linalg;
pub mod groundstate;
pub mod evolve;
pub mod diagnostics;
pub mod harness;
