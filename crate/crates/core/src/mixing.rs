//! Phenomenological pool model of spin amplification.
//!
//! One amplification step applies a response factor `f` to the rare spin's
//! polarization (`f = -1` a perfect inversion, `f = +1` no pulse), mixes it
//! uniformly into the m-spin abundant pool, and applies the per-cycle
//! survival factor `eta`. With full mixing the pool polarization obeys
//!
//! ```text
//! eps' = eta * (m * eps_I + f * eps_S) / (m + 1)
//! ```
//!
//! and with `f = -1`, `eta = 1` the gain after N steps has the closed form
//! `G = (m/2) [1 - ((m-1)/(m+1))^N]`, saturating at m/2.
//!
//! The mixing completeness `q` (default 1) blends each side of the exchange a
//! fraction of the way to the uniform value while conserving total z, so
//! measured sub-ideal transfer efficiencies can be modelled without touching
//! the core law.
//!
//! Signal convention used by [`signal_ratio`]: an inductive signal is
//! proportional to spin count x polarization x gamma^2 (magnetic moment times
//! detection frequency). The reference signal in the denominator is the
//! difference between the reference polarization and its inversion, hence
//! the factor two.

use crate::error::{Error, Result};
use crate::report::format_sig;

/// Polarizations of the rare spin and the abundant pool after `step` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolState {
    pub eps_s: f64,
    pub eps_i: f64,
    pub m: u32,
    pub step: u32,
}

impl PoolState {
    pub fn new(eps_s: f64, eps_i: f64, m: u32) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParameter("pool size m must be >= 1".into()));
        }
        for (name, v) in [("eps_s", eps_s), ("eps_i", eps_i)] {
            if !(v.is_finite() && (-1.0..=1.0).contains(&v)) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        Ok(Self { eps_s, eps_i, m, step: 0 })
    }

    /// Both populations at the same initial polarization.
    pub fn uniform(eps0: f64, m: u32) -> Result<Self> {
        Self::new(eps0, eps0, m)
    }
}

/// Per-step knobs: response factor, survival, and mixing completeness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub f: f64,
    pub eta: f64,
    pub q: f64,
}

impl StepParams {
    pub fn new(f: f64, eta: f64, q: f64) -> Result<Self> {
        if !(f.is_finite() && (-1.0..=1.0).contains(&f)) {
            return Err(Error::InvalidParameter(format!("response factor {f} outside [-1, 1]")));
        }
        if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("survival {eta} outside (0, 1]")));
        }
        if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
            return Err(Error::InvalidParameter(format!("mixing completeness {q} outside [0, 1]")));
        }
        Ok(Self { f, eta, q })
    }

    /// Ideal inversion with no decay and full mixing.
    pub fn ideal_not() -> Self {
        Self { f: -1.0, eta: 1.0, q: 1.0 }
    }
}

/// One amplification step: apply `f` to the rare spin, mix toward the uniform
/// value with completeness `q` (conserving total z), then decay both by `eta`.
pub fn step(state: &PoolState, params: &StepParams) -> PoolState {
    let m = state.m as f64;
    let s_after_pulse = params.f * state.eps_s;
    let uniform = (m * state.eps_i + s_after_pulse) / (m + 1.0);
    let eps_s = s_after_pulse + params.q * (uniform - s_after_pulse);
    let eps_i = state.eps_i + params.q * (uniform - state.eps_i);
    PoolState {
        eps_s: params.eta * eps_s,
        eps_i: params.eta * eps_i,
        m: state.m,
        step: state.step + 1,
    }
}

/// Closed-form amplification gain after N ideal steps:
/// `G = (m/2) [1 - ((m-1)/(m+1))^N]`.
///
/// Evaluated through `ln_1p`/`exp_m1` so the bracket keeps full relative
/// precision even when the per-step ratio is close to one.
pub fn gain_closed_form(m: u32, n: u32) -> f64 {
    assert!(m >= 1, "pool size m must be >= 1");
    let mf = m as f64;
    if n == 0 {
        return 0.0;
    }
    if m == 1 {
        return 0.5;
    }
    // (m-1)/(m+1) = 1 - 2/(m+1); 1 - r^N = -expm1(N ln1p(-2/(m+1)))
    let log_r = (-2.0 / (mf + 1.0)).ln_1p();
    let one_minus_r_pow_n = -(n as f64 * log_r).exp_m1();
    mf / 2.0 * one_minus_r_pow_n
}

/// Gain curve over N = 0..=n_max.
#[derive(Debug, Clone)]
pub struct GainCurve {
    pub m: u32,
    pub points: Vec<(u32, f64)>,
}

impl GainCurve {
    pub fn closed_form(m: u32, n_max: u32) -> Self {
        let points = (0..=n_max).map(|n| (n, gain_closed_form(m, n))).collect();
        Self { m, points }
    }

    /// CSV with header `N,G`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("N,G\n");
        for (n, g) in &self.points {
            out.push_str(&format!("{n},{}\n", format_sig(*g, digits)));
        }
        out
    }
}

/// Pool polarization difference with versus without inversion, after N
/// decaying steps, and its growth relative to the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplifiedDifference {
    pub delta_p: f64,
    pub relative_gain: f64,
}

/// Decay-corrected difference curve:
/// `delta_P = eps0 eta^N (1 - r^N)` with `r = (m-1)/(m+1)`, and
/// `relative_gain = eta^(N-1) (1 - r^N) / (1 - r)`.
pub fn amplified_difference(m: u32, n: u32, eps0: f64, eta: f64) -> Result<AmplifiedDifference> {
    if m < 1 {
        return Err(Error::InvalidParameter("pool size m must be >= 1".into()));
    }
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps0 {eps0} outside (0, 1]")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta {eta} outside (0, 1]")));
    }
    let mf = m as f64;
    let one_minus_r = 2.0 / (mf + 1.0);
    let one_minus_r_pow_n = if m == 1 {
        if n == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        -((n as f64) * (-one_minus_r).ln_1p()).exp_m1()
    };
    let delta_p = eps0 * eta.powi(n as i32) * one_minus_r_pow_n;
    let relative_gain = eta.powi(n as i32 - 1) * one_minus_r_pow_n / one_minus_r;
    Ok(AmplifiedDifference { delta_p, relative_gain })
}

/// Difference curve over N = 0..=n_max, as emitted by the iterate drivers.
#[derive(Debug, Clone)]
pub struct DifferenceCurve {
    pub rows: Vec<(u32, f64, f64)>,
}

impl DifferenceCurve {
    /// Difference curve produced by actually iterating the pool model: an
    /// inverting arm against an identity-response baseline arm, row per step.
    pub fn iterated(m: u32, n_max: u32, eps0: f64, eta: f64) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps0 {eps0} outside (0, 1]")));
        }
        let inverting = StepParams::new(-1.0, eta, 1.0)?;
        let identity = StepParams::new(1.0, eta, 1.0)?;
        let mut state = PoolState::uniform(eps0, m)?;
        let mut baseline = PoolState::uniform(eps0, m)?;
        let mut rows = vec![(0u32, 0.0, 0.0)];
        let mut first_delta = 0.0;
        for n in 1..=n_max {
            state = step(&state, &inverting);
            baseline = step(&baseline, &identity);
            let dp = baseline.eps_i - state.eps_i;
            if n == 1 {
                first_delta = dp;
            }
            let rg = if first_delta == 0.0 { 0.0 } else { dp / first_delta };
            rows.push((n, dp, rg));
        }
        Ok(Self { rows })
    }

    /// CSV with header `N,delta_P,relative_gain`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("N,delta_P,relative_gain\n");
        for (n, dp, rg) in &self.rows {
            out.push_str(&format!(
                "{n},{},{}\n",
                format_sig(*dp, digits),
                format_sig(*rg, digits)
            ));
        }
        out
    }
}

/// Spectrum row: pool polarization left after N steps at one pulse offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub offset_khz: f64,
    pub pool_polarization: f64,
}

/// Map a pulse response profile `f(offset)` through N amplification steps:
/// per offset the pool polarization is `eps0 [eta (m + f)/(m + 1)]^N`.
pub fn response_spectrum(
    profile: &[(f64, f64)],
    m: u32,
    n: u32,
    eps0: f64,
    eta: f64,
) -> Result<Vec<SpectrumRow>> {
    if m < 1 {
        return Err(Error::InvalidParameter("pool size m must be >= 1".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta {eta} outside (0, 1]")));
    }
    let mf = m as f64;
    profile
        .iter()
        .map(|&(offset_khz, f)| {
            if !(f.is_finite() && (-1.0..=1.0).contains(&f)) {
                return Err(Error::InvalidParameter(format!(
                    "response factor {f} at offset {offset_khz} outside [-1, 1]"
                )));
            }
            let per_step = eta * (mf + f) / (mf + 1.0);
            Ok(SpectrumRow { offset_khz, pool_polarization: eps0 * per_step.powi(n as i32) })
        })
        .collect()
}

/// CSV with header `offset_hz,pool_polarization` (offsets converted from kHz).
pub fn spectrum_csv(rows: &[SpectrumRow], digits: usize) -> String {
    let mut out = String::from("offset_hz,pool_polarization\n");
    for r in rows {
        out.push_str(&format_sig(r.offset_khz * 1e3, digits));
        out.push(',');
        out.push_str(&format_sig(r.pool_polarization, digits));
        out.push('\n');
    }
    out
}

/// Ratio of the amplified pool-difference signal to a rare-spin reference
/// signal under the documented `count x polarization x gamma^2` convention:
/// `ratio = m delta_P gamma_I^2 / (2 ref gamma_S^2)`.
pub fn signal_ratio(
    delta_p_pool: f64,
    m: u32,
    gamma_i_mhz_per_t: f64,
    gamma_s_mhz_per_t: f64,
    reference_polarization: f64,
) -> Result<f64> {
    for (name, v) in [
        ("delta_p_pool", delta_p_pool),
        ("gamma_i", gamma_i_mhz_per_t),
        ("gamma_s", gamma_s_mhz_per_t),
        ("reference_polarization", reference_polarization),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if m < 1 {
        return Err(Error::InvalidParameter("pool size m must be >= 1".into()));
    }
    Ok(m as f64 * delta_p_pool * gamma_i_mhz_per_t.powi(2)
        / (2.0 * reference_polarization * gamma_s_mhz_per_t.powi(2)))
}
