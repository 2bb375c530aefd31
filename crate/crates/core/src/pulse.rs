//! Shaped-pulse synthesis and single-spin Bloch simulation.
//!
//! Pulses are sampled piecewise-constant; no interpolation happens anywhere,
//! so a pulse's response is bit-reproducible from its sample list alone. The
//! Hermite inversion envelope is `(1 - beta tau^2) exp(-tau^2)` on a symmetric
//! tau window, rescaled so the largest sample equals the requested peak
//! amplitude.
//!
//! The excitation profile of a pulse doubles as the response-factor table
//! `f(offset)` consumed by the pool model: `f = residual Mz` with `f = -1` a
//! perfect inversion and `f = +1` no pulse.

use crate::constants::{DEFAULT_HERMITE_BETA, DEFAULT_HERMITE_TAU_WINDOW};
use crate::error::{Error, Result};
use crate::report::format_sig;
use std::f64::consts::TAU;

/// One piecewise-constant rf sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSample {
    pub amplitude_khz: f64,
    pub phase_rad: f64,
}

/// Sampled amplitude/phase envelope plus carrier offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedPulse {
    pub samples: Vec<PulseSample>,
    pub sample_duration_s: f64,
    /// Carrier frequency offset from the target resonance, kHz.
    pub carrier_offset_khz: f64,
}

impl ShapedPulse {
    pub fn new(
        samples: Vec<PulseSample>,
        sample_duration_s: f64,
        carrier_offset_khz: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("pulse needs at least one sample".into()));
        }
        if !(sample_duration_s > 0.0 && sample_duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample duration must be > 0, got {sample_duration_s}"
            )));
        }
        for s in &samples {
            if !s.amplitude_khz.is_finite() || !s.phase_rad.is_finite() {
                return Err(Error::InvalidParameter("pulse sample not finite".into()));
            }
        }
        if !carrier_offset_khz.is_finite() {
            return Err(Error::InvalidParameter("carrier offset not finite".into()));
        }
        Ok(Self { samples, sample_duration_s, carrier_offset_khz })
    }

    /// Rectangular pulse of constant amplitude and zero phase.
    pub fn constant(
        amplitude_khz: f64,
        duration_s: f64,
        n_samples: usize,
        carrier_offset_khz: f64,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidParameter("pulse needs at least one sample".into()));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pulse duration must be > 0, got {duration_s}"
            )));
        }
        let samples =
            vec![PulseSample { amplitude_khz, phase_rad: 0.0 }; n_samples];
        Self::new(samples, duration_s / n_samples as f64, carrier_offset_khz)
    }

    pub fn duration_s(&self) -> f64 {
        self.sample_duration_s * self.samples.len() as f64
    }

    pub fn with_carrier_offset(mut self, offset_khz: f64) -> Self {
        self.carrier_offset_khz = offset_khz;
        self
    }

    /// CSV with header `t_s,amp_khz,phase_rad`; `t_s` is each sample's start.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("t_s,amp_khz,phase_rad\n");
        for (k, s) in self.samples.iter().enumerate() {
            out.push_str(&format_sig(k as f64 * self.sample_duration_s, digits));
            out.push(',');
            out.push_str(&format_sig(s.amplitude_khz, digits));
            out.push(',');
            out.push_str(&format_sig(s.phase_rad, digits));
            out.push('\n');
        }
        out
    }
}

/// Hermite inversion envelope on the default tau window.
pub fn hermite_shape(
    peak_amplitude_khz: f64,
    duration_s: f64,
    n_samples: usize,
    beta: f64,
) -> Result<ShapedPulse> {
    hermite_shape_windowed(peak_amplitude_khz, duration_s, n_samples, beta, DEFAULT_HERMITE_TAU_WINDOW)
}

/// Hermite inversion envelope `A (1 - beta tau^2) exp(-tau^2)` sampled at
/// midpoints of `n_samples` uniform slices of `tau` in `[-tau_window,
/// tau_window]`, rescaled so the maximum sample equals the peak amplitude.
///
/// Samples are mirrored around the centre, so the envelope is symmetric
/// exactly, not just to rounding.
pub fn hermite_shape_windowed(
    peak_amplitude_khz: f64,
    duration_s: f64,
    n_samples: usize,
    beta: f64,
    tau_window: f64,
) -> Result<ShapedPulse> {
    if !(peak_amplitude_khz > 0.0 && peak_amplitude_khz.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "peak amplitude must be > 0, got {peak_amplitude_khz}"
        )));
    }
    if n_samples < 16 {
        return Err(Error::InvalidParameter(format!(
            "Hermite envelope needs at least 16 samples, got {n_samples}"
        )));
    }
    if !(tau_window > 0.0 && tau_window.is_finite()) || !beta.is_finite() {
        return Err(Error::InvalidParameter("bad Hermite shape parameters".into()));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "pulse duration must be > 0, got {duration_s}"
        )));
    }
    let step = 2.0 * tau_window / n_samples as f64;
    let mut env = vec![0.0; n_samples];
    for k in 0..n_samples.div_ceil(2) {
        let tau = -tau_window + (k as f64 + 0.5) * step;
        let e = (1.0 - beta * tau * tau) * (-tau * tau).exp();
        env[k] = e;
        env[n_samples - 1 - k] = e;
    }
    let max = env.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter(
            "Hermite envelope has no positive samples on this window".into(),
        ));
    }
    let samples: Vec<PulseSample> = env
        .iter()
        .map(|e| PulseSample { amplitude_khz: peak_amplitude_khz * (e / max), phase_rad: 0.0 })
        .collect();
    ShapedPulse::new(samples, duration_s / n_samples as f64, 0.0)
}

/// Residual magnetization per offset row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub offset_khz: f64,
    pub residual_mz: f64,
}

/// Excitation frequency response of one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationProfile {
    pub rows: Vec<ProfileRow>,
}

impl ExcitationProfile {
    /// Rows as the response-factor table `(offset_khz, f)` for the pool model.
    pub fn response_factors(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.offset_khz, r.residual_mz)).collect()
    }

    /// CSV with header `offset_khz,residual_mz`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("offset_khz,residual_mz\n");
        for r in &self.rows {
            out.push_str(&format_sig(r.offset_khz, digits));
            out.push(',');
            out.push_str(&format_sig(r.residual_mz, digits));
            out.push('\n');
        }
        out
    }
}

/// Final magnetization after the pulse, starting from +z, as a unit 3-vector.
///
/// Each sample rotates the magnetization about the effective field
/// `(w1 cos phi, w1 sin phi, -(carrier_offset + offset))` by
/// `2 pi |n| dt`, composed piecewise. The same sign convention drives the
/// exact engine's rf term, so the two agree sample by sample.
pub fn bloch_response(pulse: &ShapedPulse, offset_khz: f64) -> [f64; 3] {
    let delta_hz = -(pulse.carrier_offset_khz + offset_khz) * 1e3;
    let dt = pulse.sample_duration_s;
    let mut m = [0.0, 0.0, 1.0];
    for s in &pulse.samples {
        let w1_hz = s.amplitude_khz * 1e3;
        let n = [w1_hz * s.phase_rad.cos(), w1_hz * s.phase_rad.sin(), delta_hz];
        let mag = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if mag == 0.0 {
            continue;
        }
        let k = [n[0] / mag, n[1] / mag, n[2] / mag];
        let theta = TAU * mag * dt;
        let (sin_t, cos_t) = theta.sin_cos();
        let k_dot_m = k[0] * m[0] + k[1] * m[1] + k[2] * m[2];
        let k_cross_m = [
            k[1] * m[2] - k[2] * m[1],
            k[2] * m[0] - k[0] * m[2],
            k[0] * m[1] - k[1] * m[0],
        ];
        for a in 0..3 {
            m[a] = m[a] * cos_t + k_cross_m[a] * sin_t + k[a] * k_dot_m * (1.0 - cos_t);
        }
    }
    m
}

/// Residual `Mz` across an offset grid; output order follows the grid.
///
/// Rows are clamped to [-1, 1]: rotation composition can overshoot the pole
/// by a few ulps, and the profile type promises a bounded residual.
pub fn excitation_profile(pulse: &ShapedPulse, offsets_khz: &[f64]) -> Result<ExcitationProfile> {
    if offsets_khz.is_empty() {
        return Err(Error::InvalidParameter("offset grid must be non-empty".into()));
    }
    let rows = offsets_khz
        .iter()
        .map(|&off| ProfileRow {
            offset_khz: off,
            residual_mz: bloch_response(pulse, off)[2].clamp(-1.0, 1.0),
        })
        .collect();
    Ok(ExcitationProfile { rows })
}

/// Supported pulse shapes for calibration and the command-line drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseFamily {
    Constant,
    Hermite { beta: f64, tau_window: f64 },
}

impl PulseFamily {
    pub fn hermite_default() -> Self {
        PulseFamily::Hermite {
            beta: DEFAULT_HERMITE_BETA,
            tau_window: DEFAULT_HERMITE_TAU_WINDOW,
        }
    }

    /// Minimum sample count the family supports.
    pub fn min_samples(&self) -> usize {
        match self {
            PulseFamily::Constant => 1,
            PulseFamily::Hermite { .. } => 16,
        }
    }

    pub fn build(
        &self,
        peak_amplitude_khz: f64,
        duration_s: f64,
        n_samples: usize,
    ) -> Result<ShapedPulse> {
        match *self {
            PulseFamily::Constant => {
                ShapedPulse::constant(peak_amplitude_khz, duration_s, n_samples, 0.0)
            }
            PulseFamily::Hermite { beta, tau_window } => hermite_shape_windowed(
                peak_amplitude_khz,
                duration_s,
                n_samples,
                beta,
                tau_window,
            ),
        }
    }
}

/// Find the duration at which the family inverts on resonance.
///
/// A golden-section search on the Bloch response minimizes the on-resonance
/// residual `Mz` inside a bracket around the rotation-angle estimate; the
/// result is deterministic and reproducible to better than 1e-6 relative.
/// Errors when no duration in the bracket reaches `Mz <= -0.999`.
pub fn calibrate_duration(
    family: &PulseFamily,
    peak_amplitude_khz: f64,
    n_samples: usize,
) -> Result<f64> {
    if n_samples < family.min_samples() {
        return Err(Error::InvalidParameter(format!(
            "family needs at least {} samples, got {n_samples}",
            family.min_samples()
        )));
    }
    // envelope mean fixes the on-resonance rotation rate; the first inversion
    // sits at rotation 1/2 in the cycles convention
    let probe = family.build(peak_amplitude_khz, 1.0, n_samples)?;
    let mean_amp_hz = probe.samples.iter().map(|s| s.amplitude_khz).sum::<f64>()
        / probe.samples.len() as f64
        * 1e3;
    if mean_amp_hz.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::CalibrationFailed(
            "envelope mean amplitude is not positive; no inversion within bracket".into(),
        ));
    }
    let t_estimate = 0.5 / mean_amp_hz;
    let mut lo = 0.5 * t_estimate;
    let mut hi = 1.5 * t_estimate;
    let residual = |t: f64| -> Result<f64> {
        Ok(bloch_response(&family.build(peak_amplitude_khz, t, n_samples)?, 0.0)[2])
    };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = residual(c)?;
    let mut fd = residual(d)?;
    for _ in 0..96 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = residual(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = residual(d)?;
        }
    }
    let duration = 0.5 * (lo + hi);
    let best = residual(duration)?;
    if best > -0.999 {
        return Err(Error::CalibrationFailed(format!(
            "best on-resonance residual {best:.6} does not reach inversion"
        )));
    }
    Ok(duration)
}
