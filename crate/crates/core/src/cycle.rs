//! Field-cycling timelines, T1 lookup, the per-cycle survival factor, and the
//! amplification protocol orchestrator.
//!
//! A [`Timeline`] is the ordered field/duration trace of one shuttle cycle.
//! Shuttle legs are charged to the low-field T1 (the worst case along the
//! path, since only the endpoint T1 values are known); the high-field dwell
//! time covering rf and detection is a free parameter of [`build_timeline`].
//! Survival over one cycle is `eta = exp(-sum duration_k / T1(field_k))`.
//!
//! [`run_protocol`] drives either backend: the pool model for large pools, or
//! the exact engine for small clusters, where per-cycle decay enters as a
//! depolarizing blend after each coherent dwell.

use crate::dynamics::{
    apply_pulse, assemble_hamiltonian, expectation, propagate, spin_operator, Axis, DensityMatrix,
    HamiltonianSettings,
};
use crate::error::{Error, Result};
use crate::mixing::{step, PoolState, StepParams};
use crate::pulse::{bloch_response, PulseSample, ShapedPulse};
use crate::report::format_sig;
use crate::system::{FieldPoint, SpinSystem};

/// One constant-field stretch of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineSegment {
    pub duration_s: f64,
    pub field: FieldPoint,
    pub label: String,
}

impl TimelineSegment {
    pub fn new(duration_s: f64, field: FieldPoint, label: impl Into<String>) -> Result<Self> {
        if !(duration_s >= 0.0 && duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "segment duration must be >= 0, got {duration_s}"
            )));
        }
        Ok(Self { duration_s, field, label: label.into() })
    }
}

/// Ordered field/duration segments of one field-cycling shuttle.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub segments: Vec<TimelineSegment>,
}

impl Timeline {
    pub fn new(segments: Vec<TimelineSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyTimeline);
        }
        Ok(Self { segments })
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Concatenate two timelines; survival factors multiply exactly.
    pub fn concat(&self, other: &Timeline) -> Timeline {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Timeline { segments }
    }
}

/// One T1 calibration point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T1Point {
    pub field_gauss: f64,
    pub t1_s: f64,
}

/// Field-to-T1 map. Lookup picks the nearest calibrated field (ties go to the
/// lower field); optionally interpolates linearly in log T1 instead.
#[derive(Debug, Clone, PartialEq)]
pub struct T1Map {
    points: Vec<T1Point>,
    interpolate: bool,
}

impl T1Map {
    pub fn new(mut points: Vec<T1Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("T1 map needs at least one point".into()));
        }
        for p in &points {
            if !(p.t1_s > 0.0 && p.t1_s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "T1 must be positive, got {} at {} G",
                    p.t1_s, p.field_gauss
                )));
            }
            if !(p.field_gauss >= 0.0 && p.field_gauss.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "field must be >= 0 G, got {}",
                    p.field_gauss
                )));
            }
        }
        points.sort_by(|a, b| a.field_gauss.partial_cmp(&b.field_gauss).unwrap());
        if points.windows(2).any(|w| w[0].field_gauss == w[1].field_gauss) {
            return Err(Error::InvalidParameter("T1 map fields must be distinct".into()));
        }
        Ok(Self { points, interpolate: false })
    }

    /// Two-point convenience constructor.
    pub fn two_point(low: T1Point, high: T1Point) -> Result<Self> {
        Self::new(vec![low, high])
    }

    pub fn with_log_interpolation(mut self, on: bool) -> Self {
        self.interpolate = on;
        self
    }

    pub fn lookup(&self, field: FieldPoint) -> f64 {
        let g = field.as_gauss();
        if !self.interpolate || self.points.len() == 1 {
            let mut best = &self.points[0];
            let mut best_dist = (best.field_gauss - g).abs();
            for p in &self.points[1..] {
                let dist = (p.field_gauss - g).abs();
                // strict comparison keeps ties on the lower field
                if dist < best_dist {
                    best = p;
                    best_dist = dist;
                }
            }
            return best.t1_s;
        }
        if g <= self.points[0].field_gauss {
            return self.points[0].t1_s;
        }
        if g >= self.points.last().unwrap().field_gauss {
            return self.points.last().unwrap().t1_s;
        }
        let hi = self.points.iter().position(|p| p.field_gauss >= g).unwrap();
        let (a, b) = (&self.points[hi - 1], &self.points[hi]);
        let w = (g - a.field_gauss) / (b.field_gauss - a.field_gauss);
        ((1.0 - w) * a.t1_s.ln() + w * b.t1_s.ln()).exp()
    }
}

/// Survival factor over one timeline: `exp(-sum duration_k / T1(field_k))`.
pub fn cycle_survival(timeline: &Timeline, t1: &T1Map) -> Result<f64> {
    if timeline.segments.is_empty() {
        return Err(Error::EmptyTimeline);
    }
    let exponent: f64 =
        timeline.segments.iter().map(|s| s.duration_s / t1.lookup(s.field)).sum();
    Ok((-exponent).exp())
}

/// Standard four-segment shuttle: up, low-field dwell, down, high-field
/// dwell. Both shuttle legs are attributed to the low field.
pub fn build_timeline(
    shuttle_up_s: f64,
    low_dwell_s: f64,
    shuttle_down_s: f64,
    high_dwell_s: f64,
    low_field: FieldPoint,
    high_field: FieldPoint,
) -> Result<Timeline> {
    Timeline::new(vec![
        TimelineSegment::new(shuttle_up_s, low_field, "shuttle_up")?,
        TimelineSegment::new(low_dwell_s, low_field, "low_dwell")?,
        TimelineSegment::new(shuttle_down_s, low_field, "shuttle_down")?,
        TimelineSegment::new(high_dwell_s, high_field, "high_dwell")?,
    ])
}

/// Where a protocol gets its per-step response factor.
#[derive(Debug, Clone)]
pub enum ResponseFactor {
    Explicit(f64),
    /// Evaluate the pulse's residual Mz at a carrier offset.
    FromPulse { pulse: ShapedPulse, offset_khz: f64 },
}

impl ResponseFactor {
    pub fn resolve(&self) -> f64 {
        match self {
            ResponseFactor::Explicit(f) => *f,
            ResponseFactor::FromPulse { pulse, offset_khz } => {
                // guard against ulp-level overshoot of the poles
                bloch_response(pulse, *offset_khz)[2].clamp(-1.0, 1.0)
            }
        }
    }
}

/// Where a protocol gets its per-cycle survival factor.
#[derive(Debug, Clone)]
pub enum Survival {
    Eta(f64),
    FromTimeline { timeline: Timeline, t1: T1Map },
}

impl Survival {
    pub fn resolve(&self) -> Result<f64> {
        match self {
            Survival::Eta(eta) => {
                if !(*eta > 0.0 && *eta <= 1.0) {
                    return Err(Error::InvalidParameter(format!("eta {eta} outside (0, 1]")));
                }
                Ok(*eta)
            }
            Survival::FromTimeline { timeline, t1 } => cycle_survival(timeline, t1),
        }
    }
}

/// Backend selector for [`run_protocol`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Mixing,
    Exact,
}

/// Pool-model protocol: m abundant spins at a starting polarization.
#[derive(Debug, Clone)]
pub struct MixingProtocol {
    pub m: u32,
    pub eps0: f64,
    pub steps: u32,
    pub q: f64,
    pub response: ResponseFactor,
    pub survival: Survival,
}

/// Exact-engine protocol on a small cluster.
#[derive(Debug, Clone)]
pub struct ExactProtocol {
    pub system: SpinSystem,
    pub eps0: f64,
    pub steps: u32,
    pub pulse: ShapedPulse,
    /// Species receiving the rf pulse; defaults to the rare spin's species.
    pub target_species: Option<String>,
    pub low_field: FieldPoint,
    pub high_field: FieldPoint,
    pub low_dwell_s: f64,
    pub survival: Survival,
    pub threshold_ratio: f64,
}

/// A full protocol configuration for either backend.
#[derive(Debug, Clone)]
pub enum ProtocolConfig {
    Mixing(MixingProtocol),
    Exact(ExactProtocol),
}

impl ProtocolConfig {
    pub fn backend(&self) -> Backend {
        match self {
            ProtocolConfig::Mixing(_) => Backend::Mixing,
            ProtocolConfig::Exact(_) => Backend::Exact,
        }
    }
}

/// Per-step record of one amplification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub eps_s: f64,
    pub eps_i: f64,
    pub f_applied: f64,
    pub eta_applied: f64,
}

/// Step records plus the summary against the no-pulse baseline.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub steps: Vec<StepRecord>,
    pub final_delta_p: f64,
    pub relative_gain: f64,
}

impl ProtocolResult {
    /// CSV with header `step,eps_S,eps_I,f_applied,eta_applied`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("step,eps_S,eps_I,f_applied,eta_applied\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                format_sig(r.eps_s, digits),
                format_sig(r.eps_i, digits),
                format_sig(r.f_applied, digits),
                format_sig(r.eta_applied, digits),
            ));
        }
        out
    }

    /// Structured-text summary of the final pool difference and its gain
    /// relative to a single step.
    pub fn summary_text(&self, digits: usize) -> String {
        format!(
            "{{\n  \"steps\": {},\n  \"final_delta_p\": {},\n  \"relative_gain\": {}\n}}\n",
            self.steps.len(),
            format_sig(self.final_delta_p, digits),
            format_sig(self.relative_gain, digits),
        )
    }
}

fn run_mixing(config: &MixingProtocol) -> Result<ProtocolResult> {
    let f = config.response.resolve();
    let eta = config.survival.resolve()?;
    let params = StepParams::new(f, eta, config.q)?;
    // the no-pulse reference runs through the identical step machinery, so
    // an identity response gives a difference of exactly zero
    let baseline_params = StepParams::new(1.0, eta, config.q)?;
    let mut state = PoolState::uniform(config.eps0, config.m)?;
    let mut baseline = PoolState::uniform(config.eps0, config.m)?;
    let mut records = Vec::with_capacity(config.steps as usize);
    let mut delta_p_first = 0.0;
    for n in 1..=config.steps {
        state = step(&state, &params);
        baseline = step(&baseline, &baseline_params);
        records.push(StepRecord {
            step: n,
            eps_s: state.eps_s,
            eps_i: state.eps_i,
            f_applied: f,
            eta_applied: eta,
        });
        if n == 1 {
            delta_p_first = baseline.eps_i - state.eps_i;
        }
    }
    let final_delta_p = if config.steps == 0 { 0.0 } else { baseline.eps_i - state.eps_i };
    let relative_gain = if config.steps == 0 || delta_p_first == 0.0 {
        0.0
    } else {
        final_delta_p / delta_p_first
    };
    Ok(ProtocolResult { steps: records, final_delta_p, relative_gain })
}

struct ExactArm {
    rho: DensityMatrix,
}

fn run_exact(config: &ExactProtocol) -> Result<ProtocolResult> {
    let system = &config.system;
    if system.abundant_count() == 0 {
        return Err(Error::InvalidProtocol("exact backend needs at least one I spin".into()));
    }
    let eta = config.survival.resolve()?;
    let target = match &config.target_species {
        Some(label) => label.clone(),
        None => system.site_species(system.rare_index()).label.clone(),
    };
    let high_settings =
        HamiltonianSettings::new(config.high_field).with_threshold(config.threshold_ratio);
    let low_settings =
        HamiltonianSettings::new(config.low_field).with_threshold(config.threshold_ratio);
    let h_low = assemble_hamiltonian(system, &low_settings)?;

    let zero_pulse = ShapedPulse::new(
        config
            .pulse
            .samples
            .iter()
            .map(|s| PulseSample { amplitude_khz: 0.0, phase_rad: s.phase_rad })
            .collect(),
        config.pulse.sample_duration_s,
        config.pulse.carrier_offset_khz,
    )?;

    let n_sites = system.site_count();
    let s_z = spin_operator(system, system.rare_index(), Axis::Z)?;
    let i_ops: Vec<_> = system
        .abundant_indices()
        .iter()
        .map(|&i| spin_operator(system, i, Axis::Z))
        .collect::<Result<_>>()?;
    let pool_average = |rho: &DensityMatrix| -> Result<f64> {
        let mut acc = 0.0;
        for op in &i_ops {
            acc += 2.0 * expectation(rho, op)?;
        }
        Ok(acc / i_ops.len() as f64)
    };

    let init = DensityMatrix::thermal_product(&vec![config.eps0; n_sites])?;
    let mut pulsed = ExactArm { rho: init.clone() };
    let mut reference = ExactArm { rho: init };

    let mut records = Vec::with_capacity(config.steps as usize);
    let mut delta_p_first = 0.0;
    for n in 1..=config.steps {
        let s_before = 2.0 * expectation(&pulsed.rho, &s_z)?;
        pulsed.rho = apply_pulse(&pulsed.rho, system, &target, &config.pulse, &high_settings)?;
        let s_after = 2.0 * expectation(&pulsed.rho, &s_z)?;
        let f_applied = if s_before.abs() > 1e-12 { s_after / s_before } else { 0.0 };
        pulsed.rho = propagate(&pulsed.rho, &h_low, config.low_dwell_s)?;
        pulsed.rho = pulsed.rho.depolarize(eta)?;

        reference.rho =
            apply_pulse(&reference.rho, system, &target, &zero_pulse, &high_settings)?;
        reference.rho = propagate(&reference.rho, &h_low, config.low_dwell_s)?;
        reference.rho = reference.rho.depolarize(eta)?;

        let eps_i = pool_average(&pulsed.rho)?;
        records.push(StepRecord {
            step: n,
            eps_s: 2.0 * expectation(&pulsed.rho, &s_z)?,
            eps_i,
            f_applied,
            eta_applied: eta,
        });
        if n == 1 {
            delta_p_first = pool_average(&reference.rho)? - eps_i;
        }
    }
    let final_delta_p = if config.steps == 0 {
        0.0
    } else {
        pool_average(&reference.rho)? - pool_average(&pulsed.rho)?
    };
    let relative_gain = if config.steps == 0 || delta_p_first == 0.0 {
        0.0
    } else {
        final_delta_p / delta_p_first
    };
    Ok(ProtocolResult { steps: records, final_delta_p, relative_gain })
}

/// Run an amplification protocol on the configured backend.
pub fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolResult> {
    match config {
        ProtocolConfig::Mixing(c) => run_mixing(c),
        ProtocolConfig::Exact(c) => run_exact(c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{CouplingMatrix, SiteRole, SpinSite, SpinSpecies};

    fn reference_t1() -> T1Map {
        T1Map::two_point(
            T1Point { field_gauss: 100.0, t1_s: 34.0 * 60.0 },
            T1Point { field_gauss: 4000.0, t1_s: 212.0 * 60.0 },
        )
        .unwrap()
    }

    #[test]
    fn zero_durations_give_unit_survival() {
        let tl = build_timeline(
            0.0,
            0.0,
            0.0,
            0.0,
            FieldPoint::gauss(100.0).unwrap(),
            FieldPoint::gauss(4000.0).unwrap(),
        )
        .unwrap();
        assert_eq!(cycle_survival(&tl, &reference_t1()).unwrap(), 1.0);
    }

    #[test]
    fn single_t1_duration_gives_inverse_e() {
        let tl = Timeline::new(vec![TimelineSegment::new(
            2040.0,
            FieldPoint::gauss(100.0).unwrap(),
            "dwell",
        )
        .unwrap()])
        .unwrap();
        let eta = cycle_survival(&tl, &reference_t1()).unwrap();
        assert!((eta - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn reference_shuttle_survival() {
        // 0.67 + 0.01 + 0.67 s charged at the 34-minute T1 plus a fitted
        // 3.0 s high-field dwell at 212 minutes: ~99.91% per cycle
        let tl = build_timeline(
            0.67,
            0.01,
            0.67,
            3.0,
            FieldPoint::gauss(100.0).unwrap(),
            FieldPoint::gauss(4000.0).unwrap(),
        )
        .unwrap();
        let eta = cycle_survival(&tl, &reference_t1()).unwrap();
        assert!((eta - 0.99910).abs() < 5e-5, "eta = {eta}");
    }

    #[test]
    fn survival_multiplicative_over_concatenation() {
        let t1 = reference_t1();
        let a = build_timeline(
            0.67,
            0.01,
            0.67,
            3.0,
            FieldPoint::gauss(100.0).unwrap(),
            FieldPoint::gauss(4000.0).unwrap(),
        )
        .unwrap();
        let b = Timeline::new(vec![TimelineSegment::new(
            11.3,
            FieldPoint::gauss(4000.0).unwrap(),
            "hold",
        )
        .unwrap()])
        .unwrap();
        let eta_a = cycle_survival(&a, &t1).unwrap();
        let eta_b = cycle_survival(&b, &t1).unwrap();
        let eta_ab = cycle_survival(&a.concat(&b), &t1).unwrap();
        assert!((eta_ab - eta_a * eta_b).abs() < 1e-15);
    }

    #[test]
    fn doubling_durations_squares_survival() {
        let t1 = reference_t1();
        let a = build_timeline(
            0.67,
            0.01,
            0.67,
            3.0,
            FieldPoint::gauss(100.0).unwrap(),
            FieldPoint::gauss(4000.0).unwrap(),
        )
        .unwrap();
        let doubled = build_timeline(
            1.34,
            0.02,
            1.34,
            6.0,
            FieldPoint::gauss(100.0).unwrap(),
            FieldPoint::gauss(4000.0).unwrap(),
        )
        .unwrap();
        let eta = cycle_survival(&a, &t1).unwrap();
        let eta2 = cycle_survival(&doubled, &t1).unwrap();
        assert!((eta2 - eta * eta).abs() < 1e-14);
    }

    #[test]
    fn t1_lookup_nearest_and_interpolated() {
        let map = reference_t1();
        assert_eq!(map.lookup(FieldPoint::gauss(0.0).unwrap()), 34.0 * 60.0);
        assert_eq!(map.lookup(FieldPoint::gauss(1900.0).unwrap()), 34.0 * 60.0);
        assert_eq!(map.lookup(FieldPoint::gauss(2200.0).unwrap()), 212.0 * 60.0);
        // equidistant tie picks the lower field
        assert_eq!(map.lookup(FieldPoint::gauss(2050.0).unwrap()), 34.0 * 60.0);
        let interp = reference_t1().with_log_interpolation(true);
        let mid = interp.lookup(FieldPoint::gauss(2050.0).unwrap());
        let want = ((34.0f64 * 60.0).ln() * 0.5 + (212.0f64 * 60.0).ln() * 0.5).exp();
        assert!((mid - want).abs() < 1e-9);
        assert_eq!(interp.lookup(FieldPoint::gauss(9000.0).unwrap()), 212.0 * 60.0);
    }

    #[test]
    fn mixing_protocol_reference_gains() {
        for (steps, want) in [(40u32, 36.8), (200u32, 131.7)] {
            let config = ProtocolConfig::Mixing(MixingProtocol {
                m: 799,
                eps0: 0.12,
                steps,
                q: 1.0,
                response: ResponseFactor::Explicit(-1.0),
                survival: Survival::Eta(0.9991),
            });
            let result = run_protocol(&config).unwrap();
            assert!(
                (result.relative_gain - want).abs() < 0.05,
                "steps {steps}: gain {}",
                result.relative_gain
            );
            let diff = crate::mixing::amplified_difference(799, steps, 0.12, 0.9991).unwrap();
            assert!((result.final_delta_p - diff.delta_p).abs() < 1e-12);
            assert!((result.relative_gain - diff.relative_gain).abs() < 1e-9);
        }
    }

    #[test]
    fn mixing_protocol_identity_pulse_is_decay_line() {
        let config = ProtocolConfig::Mixing(MixingProtocol {
            m: 799,
            eps0: 0.12,
            steps: 50,
            q: 1.0,
            response: ResponseFactor::Explicit(1.0),
            survival: Survival::Eta(0.9991),
        });
        let result = run_protocol(&config).unwrap();
        for r in &result.steps {
            let want = 0.12 * 0.9991f64.powi(r.step as i32);
            assert!((r.eps_i - want).abs() < 1e-12);
        }
        assert_eq!(result.final_delta_p, 0.0, "identity pulse must match its own baseline");
        assert_eq!(result.relative_gain, 0.0);
    }

    #[test]
    fn zero_step_protocol_is_initial_state() {
        let config = ProtocolConfig::Mixing(MixingProtocol {
            m: 10,
            eps0: 0.5,
            steps: 0,
            q: 1.0,
            response: ResponseFactor::Explicit(-1.0),
            survival: Survival::Eta(1.0),
        });
        let result = run_protocol(&config).unwrap();
        assert!(result.steps.is_empty());
        assert_eq!(result.final_delta_p, 0.0);
        assert_eq!(result.relative_gain, 0.0);
    }

    #[test]
    fn exact_protocol_transfers_toward_pool() {
        // S-I2 cluster at zero offset: a NOT pulse plus a low-field dwell
        // moves rare polarization into the pool while conserving total z
        // during the dwell.
        let species = vec![
            SpinSpecies::new("A", 42.577).unwrap(),
            SpinSpecies::new("B", 42.577).unwrap(),
        ];
        let sites = vec![
            SpinSite::new(0, SiteRole::S),
            SpinSite::new(1, SiteRole::I),
            SpinSite::new(1, SiteRole::I),
        ];
        let couplings =
            CouplingMatrix::from_pairs(3, &[(0, 1, 6e3), (0, 2, 4e3), (1, 2, 9e3)]).unwrap();
        let system = SpinSystem::new(species, sites, couplings).unwrap();
        // strong fast pulse so the kHz couplings barely act during inversion
        let pulse = ShapedPulse::constant(1000.0, 0.5 / (1000.0 * 1e3), 4, 0.0).unwrap();
        let config = ProtocolConfig::Exact(ExactProtocol {
            system,
            eps0: 0.5,
            steps: 3,
            pulse,
            target_species: None,
            low_field: FieldPoint::gauss(100.0).unwrap(),
            high_field: FieldPoint::gauss(4000.0).unwrap(),
            low_dwell_s: 2e-4,
            survival: Survival::Eta(1.0),
            threshold_ratio: 1.0,
        });
        let result = run_protocol(&config).unwrap();
        assert_eq!(result.steps.len(), 3);
        // the pulse inverts the rare spin, so each applied factor is near -1
        for r in &result.steps {
            assert!(r.f_applied < -0.99, "f_applied {}", r.f_applied);
        }
        // pool polarization decreases as inverted rare polarization mixes in
        assert!(result.steps[0].eps_i < 0.5);
        assert!(result.final_delta_p > 0.0);
        assert!(result.relative_gain >= 1.0);
    }

    #[test]
    fn exact_protocol_rejects_lone_spin() {
        let system = SpinSystem::new(
            vec![SpinSpecies::fluorine()],
            vec![SpinSite::new(0, SiteRole::S)],
            CouplingMatrix::zeros(1),
        )
        .unwrap();
        let pulse = ShapedPulse::constant(100.0, 5e-6, 2, 0.0).unwrap();
        let config = ProtocolConfig::Exact(ExactProtocol {
            system,
            eps0: 0.5,
            steps: 1,
            pulse,
            target_species: None,
            low_field: FieldPoint::gauss(100.0).unwrap(),
            high_field: FieldPoint::gauss(4000.0).unwrap(),
            low_dwell_s: 1e-4,
            survival: Survival::Eta(1.0),
            threshold_ratio: 1.0,
        });
        assert!(matches!(run_protocol(&config), Err(Error::InvalidProtocol(_))));
    }

    #[test]
    fn protocol_csv_and_summary_shapes() {
        let config = ProtocolConfig::Mixing(MixingProtocol {
            m: 9,
            eps0: 0.3,
            steps: 4,
            q: 1.0,
            response: ResponseFactor::Explicit(-1.0),
            survival: Survival::Eta(0.999),
        });
        let result = run_protocol(&config).unwrap();
        let csv = result.to_csv(9);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,eps_S,eps_I,f_applied,eta_applied");
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,"));
        let summary = result.summary_text(9);
        assert!(summary.contains("\"relative_gain\""));
        assert!(summary.contains("\"final_delta_p\""));
    }
}
