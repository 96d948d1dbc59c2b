//! Pole-zero vocal tract: synthesis filtering, closed-form identification,
//! and conversion between coefficients, roots and resonances.

mod armax;
mod resonance;
pub mod roots;

pub use armax::{
    arma_filter, fit_armax, fit_armax_span, ArmaxModel, FilterOutput, FilterState,
    FitDiagnostics, DEFAULT_RIDGE,
};
pub use resonance::{
    poles_zeros, resonance_to_model, resonances, resonances_with_diagnostics,
    roots_to_resonances, Resonance, ResonanceSet, RootDiagnostics,
};
