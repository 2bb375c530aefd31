//! Physical constants and repository-wide default parameters.
//!
//! Gyromagnetic ratios are cycles per second per tesla (MHz/T), not angular.
//! The dipolar coupling convention is
//!
//! ```text
//! d = -(mu0 / 4 pi) * h * gamma_i * gamma_j * (1 - 3 cos^2 theta) / r^3   [Hz]
//! ```
//!
//! with gamma in Hz/T, r in metres, and theta the angle between the
//! internuclear vector and the static field axis.

/// mu0 / (4 pi) in T^2 m^3 / J.
pub const MU0_OVER_4PI: f64 = 1.0e-7;

/// Planck constant in J s (exact, SI 2019).
pub const PLANCK_H: f64 = 6.62607015e-34;

/// Reference proton gyromagnetic ratio, MHz/T.
pub const GAMMA_PROTON_MHZ_PER_T: f64 = 42.577;

/// Reference fluorine-19 gyromagnetic ratio, MHz/T.
pub const GAMMA_FLUORINE_MHZ_PER_T: f64 = 40.05;

/// Spin-count ceiling for the dense exact engine (2^10 = 1024 dimensional).
pub const DEFAULT_MAX_SPINS: usize = 10;

/// Default flip-flop activation threshold: a heteronuclear pair mixes when
/// |omega_i - omega_j| <= threshold * |d_ij|.
pub const DEFAULT_FLIP_FLOP_THRESHOLD: f64 = 1.0;

/// Default shape parameter of the Hermite inversion envelope (1 - beta tau^2) e^(-tau^2).
pub const DEFAULT_HERMITE_BETA: f64 = 0.956;

/// Default half-width of the dimensionless tau window the Hermite envelope is
/// sampled on.
pub const DEFAULT_HERMITE_TAU_WINDOW: f64 = 2.5;

/// Default significant digits for emitted CSV floats.
pub const DEFAULT_CSV_DIGITS: usize = 9;
