//! Simulation toolkit for spin amplification through heteronuclear spin
//! diffusion in dipolar-coupled solids.
//!
//! The crate is organized around four engines that can be used independently
//! or chained into a full amplification protocol:
//!
//! - [`system`]: spin species, cluster geometry, dipolar couplings, and the
//!   field-dependent classification that decides whether heteronuclear
//!   flip-flop terms are energetically allowed.
//! - [`dynamics`]: exact density-matrix evolution of small clusters under the
//!   secular dipolar Hamiltonian, including shaped-pulse application and
//!   observable extraction. Serves as the brute-force reference for the pool
//!   model.
//! - [`mixing`]: the phenomenological pool model of amplification — uniform
//!   mixing of the rare spin into the abundant pool, the closed-form gain,
//!   decay-corrected difference curves, and frequency-response spectra.
//! - [`pulse`]: shaped-pulse synthesis (Hermite and constant envelopes),
//!   single-spin Bloch simulation versus carrier offset, and duration
//!   calibration.
//! - [`cycle`]: field-cycling timelines, T1 lookup, the per-cycle survival
//!   factor, and the protocol orchestrator that drives either backend.
//!
//! Conventions used throughout: frequencies are cycles (Hz or kHz or MHz as
//! stated), never angular; magnetic fields are gauss; distances are ångström;
//! polarization of a spin-1/2 ensemble is (N_up - N_down)/(N_up + N_down).

pub mod constants;
pub mod cycle;
pub mod dynamics;
pub mod error;
pub mod mixing;
pub mod pulse;
pub mod report;
pub mod system;

pub use cycle::{
    cycle_survival, build_timeline, run_protocol, Backend, ExactProtocol, MixingProtocol,
    ProtocolConfig, ProtocolResult, ResponseFactor, StepRecord, Survival, T1Map, T1Point,
    Timeline, TimelineSegment,
};
pub use dynamics::{
    apply_pulse, assemble_hamiltonian, expectation, propagate, propagator, run_trajectory,
    spin_operator, Axis, DensityMatrix, EvolutionSchedule, FlipFlopMode, HamiltonianSettings,
    Operator, Segment, Trajectory, TrajectorySample,
};
pub use error::{Error, Result};
pub use mixing::{
    amplified_difference, gain_closed_form, response_spectrum, signal_ratio, step,
    AmplifiedDifference, DifferenceCurve, GainCurve, PoolState, SpectrumRow, StepParams,
};
pub use pulse::{
    bloch_response, calibrate_duration, excitation_profile, hermite_shape,
    hermite_shape_windowed, ExcitationProfile, ProfileRow, PulseFamily, PulseSample, ShapedPulse,
};
pub use system::{
    classify_regime, dipolar_coupling, CouplingMatrix, FieldPoint, FlipFlopRegime, RegimeMap,
    SiteRole, SpinSite, SpinSpecies, SpinSystem,
};
