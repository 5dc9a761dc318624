//! Simulation toolkit for high-field hyperfine spectroscopy of an
//! erbium-doped crystal: an 8 + 8 sublevel optical ladder, Voigt spectrum
//! synthesis, rate-equation population dynamics, spectral hole prediction,
//! two-pulse echo decay, and least-squares model fitting.

pub mod config;
pub mod constants;
pub mod csvio;
pub mod dynamics;
pub mod echo;
pub mod error;
pub mod faddeeva;
pub mod fit;
pub mod holeburn;
pub mod levels;
pub mod ode;
pub mod spectrum;

pub use config::{Command, RunConfig};
pub use error::{Error, Result};
pub use fit::{least_squares, rmsd_doubling_intervals, FitResult, Interval, ParamSpec};
pub use levels::{
    build_level_scheme, transition_table, LevelScheme, PopulationState, SchemeConfig,
    StrengthModel, Transition, TransitionTable, LEVELS,
};
pub use spectrum::{AbsorptionModel, FrequencyGrid, Lineshape, Spectrum};
