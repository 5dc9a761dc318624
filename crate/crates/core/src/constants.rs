//! Physical constants (2019 SI exact values) and unit conversions.

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Power decibels per neper: 10 log10(e).
pub const DB_PER_NEPER: f64 = 4.342_944_819_032_518;

/// Field-amplitude exponent per (power dB x cm path): ln(10)/20.
pub const FIELD_NEPER_PER_DB: f64 = 0.115_129_254_649_702_28;

/// FWHM of a unit-variance Gaussian: 2 sqrt(2 ln 2).
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
