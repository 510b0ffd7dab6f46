//! Discrete energies, their minimization, and radial exterior solutions.

mod energy;
mod minimize;
mod radial;
mod wform;

pub(crate) use energy::check_nonneg;
pub use energy::{energy_ac, energy_ap, energy_f, EnergyReport};
pub use minimize::{
    harmonic_extension, minimize, minimize_from, Minimized, Objective, SolverConfig, SolverFailure, StepRule, TraceRow,
    STALL_WINDOW,
};
pub use radial::{radial_exterior, radial_exterior_to, RadialSolution};
