//! Exact density-matrix simulation of small spin-1/2 clusters under the
//! secular dipolar Hamiltonian, in a rotating frame.
//!
//! The Hamiltonian (in Hz, cycles) of a cluster is
//!
//! ```text
//! H = sum_i (omega_i - omega_frame) Z_i
//!   + sum_{i<j} d_ij [ Z_i Z_j - (X_i X_j + Y_i Y_j) / 2 ]
//! ```
//!
//! where the ZZ part is always present and the XY (flip-flop) part of a
//! heteronuclear pair is included according to [`FlipFlopMode`]: by the
//! field-dependent classification, forced on, or forced off (the infinite
//! field secular limit). Same-species pairs always keep their flip-flop term.
//!
//! Propagation is by Hermitian eigendecomposition, exact for
//! piecewise-constant segments: `U = exp(-2 pi i H t)`. Basis convention:
//! site 0 is the most significant bit of the computational index and bit
//! value 0 is the Z = +1/2 state.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::constants::{DEFAULT_FLIP_FLOP_THRESHOLD, DEFAULT_MAX_SPINS};
use crate::error::{Error, Result};
use crate::pulse::ShapedPulse;
use crate::report::format_sig;
use crate::system::{classify_regime, FieldPoint, SpinSystem};

pub(crate) type CMatrix = DMatrix<C64>;

/// Operator axis for single-spin operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Whether heteronuclear flip-flop terms enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipFlopMode {
    /// Delegate to the field-dependent regime classification.
    #[default]
    Auto,
    ForceOn,
    ForceOff,
}

/// Rotating-frame and regime settings for Hamiltonian assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSettings {
    pub field: FieldPoint,
    /// Rotating-frame reference in MHz; `None` picks the abundant-species
    /// Larmor frequency at `field`.
    pub frame_frequency_mhz: Option<f64>,
    pub flip_flop_mode: FlipFlopMode,
    /// Threshold ratio used by [`FlipFlopMode::Auto`].
    pub threshold_ratio: f64,
    /// Spin-count ceiling for dense assembly.
    pub max_spins: usize,
}

impl HamiltonianSettings {
    pub fn new(field: FieldPoint) -> Self {
        Self {
            field,
            frame_frequency_mhz: None,
            flip_flop_mode: FlipFlopMode::Auto,
            threshold_ratio: DEFAULT_FLIP_FLOP_THRESHOLD,
            max_spins: DEFAULT_MAX_SPINS,
        }
    }

    pub fn with_frame_mhz(mut self, frame: f64) -> Self {
        self.frame_frequency_mhz = Some(frame);
        self
    }

    pub fn with_mode(mut self, mode: FlipFlopMode) -> Self {
        self.flip_flop_mode = mode;
        self
    }

    pub fn with_threshold(mut self, ratio: f64) -> Self {
        self.threshold_ratio = ratio;
        self
    }

    pub fn with_max_spins(mut self, limit: usize) -> Self {
        self.max_spins = limit;
        self
    }

    fn frame_hz(&self, system: &SpinSystem) -> f64 {
        match self.frame_frequency_mhz {
            Some(mhz) => mhz * 1e6,
            None => system.abundant_larmor_hz(self.field),
        }
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Dense complex operator on the 2^n cluster Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: CMatrix,
}

impl Operator {
    /// Wrap a matrix, requiring a square power-of-two dimension.
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::DimensionMismatch { left: n, right: mat.ncols() });
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "operator dimension must be a power of two >= 2, got {n}"
            )));
        }
        Ok(Self { mat })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Max elementwise deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.mat)
    }

    fn require_hermitian(&self) -> Result<()> {
        let dev = self.hermiticity_deviation();
        let tol = 1e-12 * max_abs(&self.mat).max(1.0);
        if dev > tol {
            return Err(Error::NonHermitian { max_dev: dev });
        }
        Ok(())
    }

    /// Max elementwise deviation of `U^H U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim();
        let prod = self.mat.adjoint() * &self.mat;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                dev = dev.max((prod[(i, j)] - target).norm());
            }
        }
        dev
    }
}

/// Density matrix of a 2^n cluster: Hermitian, unit trace, positive
/// semidefinite (within tolerances 1e-10).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    /// Wrap and fully validate a matrix (including a positivity eigensolve).
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(mat)?;
        rho.validate()?;
        Ok(rho)
    }

    fn from_matrix_unchecked(mat: CMatrix) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::DimensionMismatch { left: n, right: mat.ncols() });
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidState(format!(
                "density matrix dimension must be a power of two >= 2, got {n}"
            )));
        }
        Ok(Self { mat })
    }

    /// Product state with per-site longitudinal polarization `p_i`:
    /// each factor is diag((1+p)/2, (1-p)/2).
    pub fn thermal_product(polarizations: &[f64]) -> Result<Self> {
        let n = polarizations.len();
        if n == 0 {
            return Err(Error::InvalidState("thermal product needs at least one site".into()));
        }
        for &p in polarizations {
            if !(p.is_finite() && (-1.0..=1.0).contains(&p)) {
                return Err(Error::InvalidState(format!("polarization {p} outside [-1, 1]")));
            }
        }
        let dim = 1usize << n;
        let mut mat = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut w = 1.0;
            for (site, &p) in polarizations.iter().enumerate() {
                let up = (b >> (n - 1 - site)) & 1 == 0;
                w *= if up { (1.0 + p) / 2.0 } else { (1.0 - p) / 2.0 };
            }
            mat[(b, b)] = C64::new(w, 0.0);
        }
        Self::from_matrix_unchecked(mat)
    }

    /// Pure computational basis state |index>.
    pub fn basis_state(n_spins: usize, index: usize) -> Result<Self> {
        let dim = 1usize
            .checked_shl(n_spins as u32)
            .ok_or_else(|| Error::InvalidState("too many spins".into()))?;
        if n_spins == 0 || index >= dim {
            return Err(Error::InvalidState(format!(
                "basis index {index} out of range for {n_spins} spins"
            )));
        }
        let mut mat = CMatrix::zeros(dim, dim);
        mat[(index, index)] = C64::new(1.0, 0.0);
        Self::from_matrix_unchecked(mat)
    }

    pub fn maximally_mixed(n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidState("need at least one spin".into()));
        }
        let dim = 1usize << n_spins;
        let mat = CMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
        Self::from_matrix_unchecked(mat)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().iter().sum()
    }

    /// Full invariant check: Hermitian and unit trace within 1e-10,
    /// eigenvalues above -1e-10.
    pub fn validate(&self) -> Result<()> {
        self.light_validate()?;
        let eig = self.mat.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Cheap invariant check (no eigensolve): Hermiticity and trace.
    pub fn light_validate(&self) -> Result<()> {
        let dev = hermiticity_deviation(&self.mat);
        if dev > 1e-10 {
            return Err(Error::InvalidState(format!("Hermiticity deviation {dev:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} differs from one")));
        }
        Ok(())
    }

    /// Blend toward the maximally mixed state: `rho -> s rho + (1-s) I/dim`.
    /// Models per-cycle polarization loss phenomenologically while keeping
    /// all density-matrix invariants intact.
    pub fn depolarize(&self, survival: f64) -> Result<Self> {
        if !(survival > 0.0 && survival <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "survival factor must be in (0, 1], got {survival}"
            )));
        }
        let dim = self.dim();
        let mut mat = &self.mat * C64::new(survival, 0.0);
        let fill = (1.0 - survival) / dim as f64;
        for i in 0..dim {
            mat[(i, i)] += C64::new(fill, 0.0);
        }
        Self::from_matrix_unchecked(mat)
    }
}

fn site_mask(site: usize, n: usize) -> usize {
    1usize << (n - 1 - site)
}

fn z_half(b: usize, site: usize, n: usize) -> f64 {
    if b & site_mask(site, n) == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Tensor-product embedding of a single-spin-1/2 operator (X, Y, or Z with
/// eigenvalues +-1/2) at one site, identity elsewhere.
pub fn spin_operator(system: &SpinSystem, site: usize, axis: Axis) -> Result<Operator> {
    let n = system.site_count();
    if site >= n {
        return Err(Error::SiteIndex { index: site, count: n });
    }
    let dim = 1usize << n;
    let mask = site_mask(site, n);
    let mut mat = CMatrix::zeros(dim, dim);
    match axis {
        Axis::Z => {
            for b in 0..dim {
                mat[(b, b)] = C64::new(z_half(b, site, n), 0.0);
            }
        }
        Axis::X => {
            for b in 0..dim {
                mat[(b ^ mask, b)] = C64::new(0.5, 0.0);
            }
        }
        Axis::Y => {
            for b in 0..dim {
                if b & mask == 0 {
                    mat[(b ^ mask, b)] = C64::new(0.0, 0.5);
                } else {
                    mat[(b ^ mask, b)] = C64::new(0.0, -0.5);
                }
            }
        }
    }
    Operator::from_matrix(mat)
}

/// Assemble the rotating-frame cluster Hamiltonian in Hz.
pub fn assemble_hamiltonian(system: &SpinSystem, settings: &HamiltonianSettings) -> Result<Operator> {
    let n = system.site_count();
    if n > settings.max_spins {
        return Err(Error::SystemTooLarge { spins: n, limit: settings.max_spins });
    }
    let dim = 1usize << n;
    let frame_hz = settings.frame_hz(system);
    let offsets: Vec<f64> =
        (0..n).map(|i| system.larmor_hz(i, settings.field) - frame_hz).collect();
    let regime = classify_regime(system, settings.field, settings.threshold_ratio);
    let flip_flop_active = |i: usize, j: usize| -> bool {
        let same_species = system.sites()[i].species == system.sites()[j].species;
        match settings.flip_flop_mode {
            FlipFlopMode::ForceOn => true,
            FlipFlopMode::ForceOff => same_species,
            FlipFlopMode::Auto => regime.is_active(i, j),
        }
    };

    let mut mat = CMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut diag = 0.0;
        for (i, offset) in offsets.iter().enumerate() {
            diag += offset * z_half(b, i, n);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                diag += system.couplings().get(i, j) * z_half(b, i, n) * z_half(b, j, n);
            }
        }
        mat[(b, b)] = C64::new(diag, 0.0);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = system.couplings().get(i, j);
            if d == 0.0 || !flip_flop_active(i, j) {
                continue;
            }
            let mi = site_mask(i, n);
            let mj = site_mask(j, n);
            // -d (X_i X_j + Y_i Y_j) / 2 couples |..0..1..> with |..1..0..>
            // at matrix element -d/4.
            for b in 0..dim {
                if (b & mi == 0) != (b & mj == 0) {
                    mat[(b ^ mi ^ mj, b)] += C64::new(-d / 4.0, 0.0);
                }
            }
        }
    }
    let op = Operator::from_matrix(mat)?;
    op.require_hermitian()?;
    Ok(op)
}

struct HermitianEigen {
    values: DVector<f64>,
    vectors: CMatrix,
}

fn hermitian_eigen(op: &Operator) -> Result<HermitianEigen> {
    op.require_hermitian()?;
    let eig = op.mat.clone().symmetric_eigen();
    Ok(HermitianEigen { values: eig.eigenvalues, vectors: eig.eigenvectors })
}

fn phases(values: &DVector<f64>, t_s: f64) -> DVector<C64> {
    values.map(|lam| {
        let angle = -TAU * lam * t_s;
        C64::new(angle.cos(), angle.sin())
    })
}

fn unitary_from_eigen(eig: &HermitianEigen, t_s: f64) -> CMatrix {
    let p = phases(&eig.values, t_s);
    let mut scaled = eig.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let ph = p[j];
        for c in col.iter_mut() {
            *c *= ph;
        }
    }
    scaled * eig.vectors.adjoint()
}

/// Propagator `U = exp(-2 pi i H t)` for a Hamiltonian in Hz and time in
/// seconds, built by Hermitian eigendecomposition.
pub fn propagator(hamiltonian: &Operator, t_s: f64) -> Result<Operator> {
    if !(t_s >= 0.0 && t_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("propagation time must be >= 0, got {t_s}")));
    }
    let eig = hermitian_eigen(hamiltonian)?;
    let u = Operator::from_matrix(unitary_from_eigen(&eig, t_s))?;
    let dev = u.unitarity_deviation();
    if dev > 1e-10 {
        return Err(Error::NonUnitary { max_dev: dev });
    }
    Ok(u)
}

/// Conjugate a state by the exact propagator: `rho' = U rho U^H`.
pub fn propagate(rho: &DensityMatrix, hamiltonian: &Operator, t_s: f64) -> Result<DensityMatrix> {
    if hamiltonian.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { left: hamiltonian.dim(), right: rho.dim() });
    }
    let u = propagator(hamiltonian, t_s)?;
    let mat = &u.mat * &rho.mat * u.mat.adjoint();
    let out = DensityMatrix::from_matrix_unchecked(mat)?;
    out.light_validate()?;
    Ok(out)
}

/// Expectation value `Tr(rho O)` of a Hermitian observable.
///
/// The imaginary residue is checked against 1e-10 (scaled by the observable's
/// Frobenius norm for frequency-scale operators) and discarded.
pub fn expectation(rho: &DensityMatrix, observable: &Operator) -> Result<f64> {
    if observable.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { left: observable.dim(), right: rho.dim() });
    }
    observable.require_hermitian()?;
    let n = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho.mat[(i, j)] * observable.mat[(j, i)];
        }
    }
    let frob: f64 = observable.mat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let tol = 1e-10 * frob.max(1.0);
    if acc.im.abs() > tol {
        return Err(Error::NonPhysicalObservable { imag: acc.im });
    }
    Ok(acc.re)
}

/// Apply a shaped rf pulse to all sites of one species.
///
/// The evolution is computed piecewise-constant in the frame rotating at the
/// pulse carrier (the target species' Larmor frequency plus the pulse's
/// carrier offset); each sample adds `omega1 (cos phi Sx + sin phi Sy)` over
/// the target sites to the internal Hamiltonian. Non-target species receive
/// no rf term.
pub fn apply_pulse(
    rho: &DensityMatrix,
    system: &SpinSystem,
    target_species: &str,
    pulse: &ShapedPulse,
    settings: &HamiltonianSettings,
) -> Result<DensityMatrix> {
    let species_idx = system
        .species_index(target_species)
        .ok_or_else(|| Error::UnknownSpecies(target_species.to_string()))?;
    let n = system.site_count();
    if n > settings.max_spins {
        return Err(Error::SystemTooLarge { spins: n, limit: settings.max_spins });
    }
    if rho.dim() != 1usize << n {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: 1usize << n });
    }

    let gamma = system.species()[species_idx].gamma_mhz_per_t;
    let target_larmor_hz = gamma * 1e6 * settings.field.as_tesla();
    let carrier_hz = target_larmor_hz + pulse.carrier_offset_khz * 1e3;
    let carrier_settings = settings.clone().with_frame_mhz(carrier_hz / 1e6);
    let base = assemble_hamiltonian(system, &carrier_settings)?;

    let dim = 1usize << n;
    let mut sx = CMatrix::zeros(dim, dim);
    let mut sy = CMatrix::zeros(dim, dim);
    for (site_idx, site) in system.sites().iter().enumerate() {
        if site.species == species_idx {
            sx += spin_operator(system, site_idx, Axis::X)?.mat;
            sy += spin_operator(system, site_idx, Axis::Y)?.mat;
        }
    }

    let dt = pulse.sample_duration_s;
    let mut state = rho.mat.clone();
    for sample in &pulse.samples {
        let w1_hz = sample.amplitude_khz * 1e3;
        let hk = &base.mat
            + &sx * C64::new(w1_hz * sample.phase_rad.cos(), 0.0)
            + &sy * C64::new(w1_hz * sample.phase_rad.sin(), 0.0);
        let op = Operator::from_matrix(hk)?;
        let u = propagator(&op, dt)?;
        state = &u.mat * state * u.mat.adjoint();
    }
    let out = DensityMatrix::from_matrix_unchecked(state)?;
    out.light_validate()?;
    Ok(out)
}

/// One schedule entry: free evolution under fixed settings, or a shaped pulse
/// on one species.
#[derive(Debug, Clone)]
pub enum Segment {
    Free { duration_s: f64, settings: HamiltonianSettings },
    Pulse { pulse: ShapedPulse, target_species: String, settings: HamiltonianSettings },
}

/// Ordered field/pulse segments of one evolution.
#[derive(Debug, Clone)]
pub struct EvolutionSchedule {
    pub segments: Vec<Segment>,
}

impl EvolutionSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for seg in &segments {
            if let Segment::Free { duration_s, .. } = seg {
                if !(*duration_s >= 0.0 && duration_s.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "segment duration must be >= 0, got {duration_s}"
                    )));
                }
            }
        }
        Ok(Self { segments })
    }
}

/// One record of a trajectory: time and the longitudinal observables.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub s_z: f64,
    pub i_z: Vec<f64>,
    pub total_i_z: f64,
}

/// Deterministic time series of `<S_Z>`, every `<I_iZ>`, and their sum.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    i_count: usize,
}

impl Trajectory {
    pub fn i_count(&self) -> usize {
        self.i_count
    }

    /// CSV with header `t_s,S_z,I1_z,...,Im_z,total_Iz`.
    pub fn to_csv(&self, digits: usize) -> String {
        let mut out = String::from("t_s,S_z");
        for k in 1..=self.i_count {
            out.push_str(&format!(",I{k}_z"));
        }
        out.push_str(",total_Iz\n");
        for s in &self.samples {
            out.push_str(&format_sig(s.t_s, digits));
            out.push(',');
            out.push_str(&format_sig(s.s_z, digits));
            for v in &s.i_z {
                out.push(',');
                out.push_str(&format_sig(*v, digits));
            }
            out.push(',');
            out.push_str(&format_sig(s.total_i_z, digits));
            out.push('\n');
        }
        out
    }
}

/// Diagonal of a Z-type observable over the computational basis.
fn z_diagonal(sites: &[usize], n: usize) -> Vec<f64> {
    let dim = 1usize << n;
    (0..dim).map(|b| sites.iter().map(|&s| z_half(b, s, n)).sum()).collect()
}

/// Spectral sampler for one free segment: observables of
/// `rho(t) = U(t) rho U(t)^H` at many times without rebuilding propagators.
struct SegmentSampler {
    eigenvalues: DVector<f64>,
    vectors: CMatrix,
    rho_eig: CMatrix,
    /// Per observable: C_jk = rho_eig[j,k] * M[k,j] with M = V^H diag(o) V.
    weights: Vec<CMatrix>,
}

impl SegmentSampler {
    fn new(hamiltonian: &Operator, rho: &DensityMatrix, observables: &[Vec<f64>]) -> Result<Self> {
        let eig = hermitian_eigen(hamiltonian)?;
        let rho_eig = eig.vectors.adjoint() * &rho.mat * &eig.vectors;
        let mut weights = Vec::with_capacity(observables.len());
        for o in observables {
            let mut scaled = eig.vectors.clone();
            for (b, mut row) in scaled.row_iter_mut().enumerate() {
                let w = C64::new(o[b], 0.0);
                for c in row.iter_mut() {
                    *c *= w;
                }
            }
            let m = eig.vectors.adjoint() * scaled; // V^H diag(o) V
            let c = rho_eig.component_mul(&m.transpose());
            weights.push(c);
        }
        Ok(Self { eigenvalues: eig.values, vectors: eig.vectors, rho_eig, weights })
    }

    fn observables_at(&self, t_s: f64) -> Result<Vec<f64>> {
        let p = phases(&self.eigenvalues, t_s);
        let p_conj = p.map(|c| c.conj());
        let mut out = Vec::with_capacity(self.weights.len());
        for c in &self.weights {
            let v = c * &p_conj;
            let val: C64 = p.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            if val.im.abs() > 1e-9 {
                return Err(Error::NonPhysicalObservable { imag: val.im });
            }
            out.push(val.re);
        }
        Ok(out)
    }

    fn state_at(&self, t_s: f64) -> Result<DensityMatrix> {
        let p = phases(&self.eigenvalues, t_s);
        let mut evolved = self.rho_eig.clone();
        let n = evolved.nrows();
        for j in 0..n {
            for k in 0..n {
                evolved[(j, k)] *= p[j] * p[k].conj();
            }
        }
        let mat = &self.vectors * evolved * self.vectors.adjoint();
        let rho = DensityMatrix::from_matrix_unchecked(mat)?;
        rho.light_validate()?;
        Ok(rho)
    }
}

/// Run a schedule, sampling the longitudinal observables every
/// `sample_interval_s` inside free segments (and at each segment boundary).
///
/// Pulses are applied atomically and contribute one sample at their end.
pub fn run_trajectory(
    system: &SpinSystem,
    rho0: &DensityMatrix,
    schedule: &EvolutionSchedule,
    sample_interval_s: f64,
) -> Result<Trajectory> {
    if !(sample_interval_s > 0.0 && sample_interval_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sample interval must be > 0, got {sample_interval_s}"
        )));
    }
    let n = system.site_count();
    if rho0.dim() != 1usize << n {
        return Err(Error::DimensionMismatch { left: rho0.dim(), right: 1usize << n });
    }
    rho0.light_validate()?;

    let rare = system.rare_index();
    let abundant = system.abundant_indices();
    let mut observables: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    observables.push(z_diagonal(&[rare], n));
    for &site in &abundant {
        observables.push(z_diagonal(&[site], n));
    }
    observables.push(z_diagonal(&abundant, n));

    let record = |t: f64, vals: &[f64]| TrajectorySample {
        t_s: t,
        s_z: vals[0],
        i_z: vals[1..1 + abundant.len()].to_vec(),
        total_i_z: vals[1 + abundant.len()],
    };
    let direct_observe = |rho: &DensityMatrix| -> Vec<f64> {
        observables
            .iter()
            .map(|o| {
                rho.matrix()
                    .diagonal()
                    .iter()
                    .zip(o.iter())
                    .map(|(p, w)| p.re * w)
                    .sum::<f64>()
            })
            .collect()
    };

    let mut samples = Vec::new();
    let mut rho = rho0.clone();
    let mut t_global = 0.0;
    samples.push(record(t_global, &direct_observe(&rho)));

    for segment in &schedule.segments {
        match segment {
            Segment::Free { duration_s, settings } => {
                if *duration_s == 0.0 {
                    continue;
                }
                let h = assemble_hamiltonian(system, settings)?;
                let sampler = SegmentSampler::new(&h, &rho, &observables)?;
                let n_full = (duration_s / sample_interval_s + 1e-9).floor() as usize;
                for k in 1..=n_full {
                    let t_local = k as f64 * sample_interval_s;
                    if t_local > *duration_s * (1.0 + 1e-12) {
                        break;
                    }
                    let vals = sampler.observables_at(t_local)?;
                    samples.push(record(t_global + t_local, &vals));
                }
                let last_local = n_full as f64 * sample_interval_s;
                if (duration_s - last_local).abs() > 1e-12 * duration_s.max(sample_interval_s) {
                    let vals = sampler.observables_at(*duration_s)?;
                    samples.push(record(t_global + duration_s, &vals));
                }
                rho = sampler.state_at(*duration_s)?;
                t_global += duration_s;
            }
            Segment::Pulse { pulse, target_species, settings } => {
                rho = apply_pulse(&rho, system, target_species, pulse, settings)?;
                t_global += pulse.duration_s();
                samples.push(record(t_global, &direct_observe(&rho)));
            }
        }
    }

    Ok(Trajectory { samples, i_count: abundant.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{CouplingMatrix, SiteRole, SpinSite, SpinSpecies};

    fn single_spin() -> SpinSystem {
        SpinSystem::new(
            vec![SpinSpecies::fluorine()],
            vec![SpinSite::new(0, SiteRole::S)],
            CouplingMatrix::zeros(1),
        )
        .unwrap()
    }

    fn homonuclear_pair(d_hz: f64) -> SpinSystem {
        SpinSystem::new(
            vec![SpinSpecies::proton()],
            vec![SpinSite::new(0, SiteRole::S), SpinSite::new(0, SiteRole::I)],
            CouplingMatrix::from_pairs(2, &[(0, 1, d_hz)]).unwrap(),
        )
        .unwrap()
    }

    fn hetero_pair(d_hz: f64) -> SpinSystem {
        SpinSystem::new(
            vec![SpinSpecies::fluorine(), SpinSpecies::proton()],
            vec![SpinSite::new(0, SiteRole::S), SpinSite::new(1, SiteRole::I)],
            CouplingMatrix::from_pairs(2, &[(0, 1, d_hz)]).unwrap(),
        )
        .unwrap()
    }

    /// Pair with equal gammas but distinct species labels: zero Zeeman offset
    /// difference while still counting as heteronuclear for regime logic.
    fn zero_offset_hetero_pair(d_hz: f64) -> SpinSystem {
        SpinSystem::new(
            vec![
                SpinSpecies::new("A", 42.577).unwrap(),
                SpinSpecies::new("B", 42.577).unwrap(),
            ],
            vec![SpinSite::new(0, SiteRole::S), SpinSite::new(1, SiteRole::I)],
            CouplingMatrix::from_pairs(2, &[(0, 1, d_hz)]).unwrap(),
        )
        .unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn z_operator_on_one_spin_is_half_diag() {
        let sys = single_spin();
        let z = spin_operator(&sys, 0, Axis::Z).unwrap();
        assert_eq!(z.matrix()[(0, 0)], c(0.5, 0.0));
        assert_eq!(z.matrix()[(1, 1)], c(-0.5, 0.0));
        assert_eq!(z.matrix()[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn spin_operators_traceless() {
        let sys = homonuclear_pair(1.0);
        for site in 0..2 {
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let op = spin_operator(&sys, site, axis).unwrap();
                let tr: C64 = op.matrix().diagonal().iter().sum();
                assert!(tr.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn su2_commutator() {
        // [X, Y] = i Z on each site of a pair
        let sys = homonuclear_pair(1.0);
        for site in 0..2 {
            let x = spin_operator(&sys, site, Axis::X).unwrap();
            let y = spin_operator(&sys, site, Axis::Y).unwrap();
            let z = spin_operator(&sys, site, Axis::Z).unwrap();
            let comm = x.matrix() * y.matrix() - y.matrix() * x.matrix();
            let want = z.matrix() * c(0.0, 1.0);
            let dev = (&comm - &want).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "commutator deviation {dev}");
        }
    }

    #[test]
    fn site_index_out_of_range() {
        let sys = single_spin();
        assert!(matches!(
            spin_operator(&sys, 5, Axis::X),
            Err(Error::SiteIndex { index: 5, count: 1 })
        ));
    }

    #[test]
    fn uncoupled_on_frame_hamiltonian_is_zero() {
        let sys = homonuclear_pair(0.0);
        let field = FieldPoint::gauss(4000.0).unwrap();
        let settings = HamiltonianSettings::new(field); // frame at abundant Larmor
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        assert!(max_abs(h.matrix()) < 1e-9);
    }

    #[test]
    fn force_off_commutes_with_rare_z() {
        let sys = hetero_pair(12.0e3);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap())
            .with_mode(FlipFlopMode::ForceOff);
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        let sz = spin_operator(&sys, 0, Axis::Z).unwrap();
        let comm = h.matrix() * sz.matrix() - sz.matrix() * h.matrix();
        let dev = comm.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev <= 1e-12 * max_abs(h.matrix()), "commutator deviation {dev}");
    }

    #[test]
    fn zero_offset_pair_spectrum_matches_analytic() {
        // d/4, d/4 on the aligned states; the flip-flop block gives 0 and -d/2.
        let d = 8.0e3;
        let sys = zero_offset_hetero_pair(d);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap())
            .with_mode(FlipFlopMode::ForceOn);
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        let mut eig: Vec<f64> =
            h.matrix().clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = [-d / 2.0, 0.0, d / 4.0, d / 4.0];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-6, "eigenvalue {got} vs {want}");
        }
    }

    #[test]
    fn max_spins_limit_enforced() {
        let species = vec![SpinSpecies::proton()];
        let mut sites = vec![SpinSite::new(0, SiteRole::S)];
        for _ in 0..3 {
            sites.push(SpinSite::new(0, SiteRole::I));
        }
        let n = sites.len();
        let sys = SpinSystem::new(species, sites, CouplingMatrix::zeros(n)).unwrap();
        let settings =
            HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap()).with_max_spins(3);
        assert!(matches!(
            assemble_hamiltonian(&sys, &settings),
            Err(Error::SystemTooLarge { spins: 4, limit: 3 })
        ));
    }

    #[test]
    fn propagate_zero_time_and_zero_hamiltonian_are_identity() {
        let sys = homonuclear_pair(5.0e3);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap());
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        let rho = DensityMatrix::thermal_product(&[0.7, -0.2]).unwrap();

        let same = propagate(&rho, &h, 0.0).unwrap();
        let dev = (same.matrix() - rho.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-12);

        let zero = Operator::from_matrix(CMatrix::zeros(4, 4)).unwrap();
        let same2 = propagate(&rho, &zero, 1.0).unwrap();
        let dev2 = (same2.matrix() - rho.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev2 < 1e-12);
    }

    #[test]
    fn propagate_rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        let h = Operator::from_matrix(m).unwrap();
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(matches!(propagate(&rho, &h, 1.0), Err(Error::NonHermitian { .. })));
    }

    /// Analytic two-spin flip-flop: the polarization difference oscillates as
    /// cos(pi d t), with full exchange at t = 1/d.
    #[test]
    fn pair_flip_flop_waveform_matches_analytic() {
        let d = 2.0e3;
        let sys = homonuclear_pair(d);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        // rho = I/4 + Z_1 scaled into a physical state: site 0 fully polarized
        let rho0 = DensityMatrix::thermal_product(&[1.0, 0.0]).unwrap();
        let z0 = spin_operator(&sys, 0, Axis::Z).unwrap();
        let z1 = spin_operator(&sys, 1, Axis::Z).unwrap();
        let diff0 = expectation(&rho0, &z0).unwrap() - expectation(&rho0, &z1).unwrap();
        for k in 0..=20 {
            let t = k as f64 * (1.0 / d) / 20.0 * 1.7; // a bit past full exchange
            let rho_t = propagate(&rho0, &h, t).unwrap();
            let diff = expectation(&rho_t, &z0).unwrap() - expectation(&rho_t, &z1).unwrap();
            let want = diff0 * (std::f64::consts::PI * d * t).cos();
            assert!(
                (diff - want).abs() < 1e-9,
                "t = {t}: difference {diff} vs analytic {want}"
            );
        }
        let swapped = propagate(&rho0, &h, 1.0 / d).unwrap();
        let diff = expectation(&swapped, &z0).unwrap() - expectation(&swapped, &z1).unwrap();
        assert!((diff + diff0).abs() < 1e-9, "full exchange at t = 1/d");
    }

    #[test]
    fn on_resonance_pi_pulse_inverts_z() {
        let sys = single_spin();
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[1.0]).unwrap();
        // omega1 * t_p = 1/2: a pi rotation in the cycles convention
        let w1_khz = 100.0;
        let t_p = 0.5 / (w1_khz * 1e3);
        let pulse = ShapedPulse::constant(w1_khz, t_p, 1, 0.0).unwrap();
        let out = apply_pulse(&rho, &sys, "F", &pulse, &settings).unwrap();
        let z = spin_operator(&sys, 0, Axis::Z).unwrap();
        let before = expectation(&rho, &z).unwrap();
        let after = expectation(&out, &z).unwrap();
        assert!((after + before).abs() < 1e-9, "<Z> {before} -> {after}");
    }

    /// Off-resonance constant pulse residual from the Rabi formula:
    /// Mz/M0 = 1 - (w1^2/weff^2) 2 sin^2(pi weff t_p), evaluated independently.
    #[test]
    fn offset_rabi_residual() {
        let sys = single_spin();
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[1.0]).unwrap();
        let w1_khz = 50.0;
        let t_p = 0.5 / (w1_khz * 1e3);
        // carrier offset equal to the rf amplitude
        let pulse = ShapedPulse::constant(w1_khz, t_p, 10, w1_khz).unwrap();
        let out = apply_pulse(&rho, &sys, "F", &pulse, &settings).unwrap();
        let z = spin_operator(&sys, 0, Axis::Z).unwrap();
        let ratio = expectation(&out, &z).unwrap() / expectation(&rho, &z).unwrap();

        let w1 = w1_khz * 1e3;
        let delta = w1;
        let weff = (w1 * w1 + delta * delta).sqrt();
        let expected = 1.0
            - (w1 * w1 / (weff * weff))
                * 2.0
                * (std::f64::consts::PI * weff * t_p).sin().powi(2);
        assert!((ratio - expected).abs() < 1e-9);
        assert!((ratio - 0.367).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn zero_amplitude_pulse_equals_free_evolution() {
        let d = 3.0e3;
        let sys = hetero_pair(d);
        let field = FieldPoint::gauss(4000.0).unwrap();
        let settings = HamiltonianSettings::new(field);
        let rho = DensityMatrix::thermal_product(&[0.9, 0.1]).unwrap();
        let t_p = 40e-6;
        let pulse = ShapedPulse::constant(0.0, t_p, 16, 0.0).unwrap();
        let pulsed = apply_pulse(&rho, &sys, "F", &pulse, &settings).unwrap();

        // same internal Hamiltonian: frame at the F carrier
        let carrier_mhz = sys.larmor_hz(0, field) / 1e6;
        let h = assemble_hamiltonian(&sys, &settings.clone().with_frame_mhz(carrier_mhz)).unwrap();
        let free = propagate(&rho, &h, t_p).unwrap();
        let dev =
            (pulsed.matrix() - free.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "deviation {dev}");
    }

    #[test]
    fn short_pulse_on_coupled_pair_still_inverts() {
        // couplings much weaker than 1/t_p: <S_Z> flips within 1%
        let sys = hetero_pair(500.0);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[0.8, 0.3]).unwrap();
        let w1_khz = 100.0;
        let t_p = 0.5 / (w1_khz * 1e3);
        let pulse = ShapedPulse::constant(w1_khz, t_p, 8, 0.0).unwrap();
        let out = apply_pulse(&rho, &sys, "F", &pulse, &settings).unwrap();
        let z = spin_operator(&sys, 0, Axis::Z).unwrap();
        let before = expectation(&rho, &z).unwrap();
        let after = expectation(&out, &z).unwrap();
        assert!((after + before).abs() < 0.01 * before.abs());
    }

    #[test]
    fn pulse_unknown_species_rejected() {
        let sys = single_spin();
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[1.0]).unwrap();
        let pulse = ShapedPulse::constant(10.0, 1e-5, 4, 0.0).unwrap();
        assert!(matches!(
            apply_pulse(&rho, &sys, "Xe", &pulse, &settings),
            Err(Error::UnknownSpecies(_))
        ));
    }

    #[test]
    fn expectation_edge_cases() {
        let sys = homonuclear_pair(1.0);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let z1 = spin_operator(&sys, 0, Axis::Z).unwrap();
        assert!(expectation(&mixed, &z1).unwrap().abs() < 1e-15);

        let ground = DensityMatrix::basis_state(2, 0).unwrap();
        assert!((expectation(&ground, &z1).unwrap() - 0.5).abs() < 1e-15);

        let small = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(matches!(
            expectation(&small, &z1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trajectory_zero_duration_single_sample() {
        let sys = homonuclear_pair(1.0e3);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[0.5, -0.5]).unwrap();
        let schedule =
            EvolutionSchedule::new(vec![Segment::Free { duration_s: 0.0, settings }]).unwrap();
        let traj = run_trajectory(&sys, &rho, &schedule, 1e-5).unwrap();
        assert_eq!(traj.samples.len(), 1);
        let s = &traj.samples[0];
        assert_eq!(s.t_s, 0.0);
        assert!((s.s_z - 0.25).abs() < 1e-12);
        assert!((s.i_z[0] + 0.25).abs() < 1e-12);
        assert!((s.total_i_z + 0.25).abs() < 1e-12);
    }

    #[test]
    fn high_field_trajectory_conserves_rare_z_while_pool_mixes() {
        // S-I2 with H/F at high field: hetero flip-flops suppressed, the
        // homonuclear pair still exchanges.
        let species = vec![SpinSpecies::fluorine(), SpinSpecies::proton()];
        let sites = vec![
            SpinSite::new(0, SiteRole::S),
            SpinSite::new(1, SiteRole::I),
            SpinSite::new(1, SiteRole::I),
        ];
        let couplings =
            CouplingMatrix::from_pairs(3, &[(0, 1, 8e3), (0, 2, 5e3), (1, 2, 12e3)]).unwrap();
        let sys = SpinSystem::new(species, sites, couplings).unwrap();
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[0.9, 0.6, -0.4]).unwrap();
        let schedule = EvolutionSchedule::new(vec![Segment::Free {
            duration_s: 2e-3,
            settings,
        }])
        .unwrap();
        let traj = run_trajectory(&sys, &rho, &schedule, 5e-5).unwrap();
        assert!(traj.samples.len() > 20);
        let s0 = &traj.samples[0];
        let mut pool_moved = false;
        for s in &traj.samples {
            assert!((s.s_z - s0.s_z).abs() < 1e-8, "rare z drifted: {} vs {}", s.s_z, s0.s_z);
            assert!((s.total_i_z - s0.total_i_z).abs() < 1e-8);
            if (s.i_z[0] - s0.i_z[0]).abs() > 1e-3 {
                pool_moved = true;
            }
        }
        assert!(pool_moved, "homonuclear exchange should redistribute the pool");
    }

    #[test]
    fn far_detuned_pair_transfer_is_bounded() {
        // offset difference pinned to exactly 10 d through synthetic gammas:
        // at 100 G, 5 MHz/T of gamma difference is 50 kHz of offset.
        let d = 5.0e3;
        let sys = SpinSystem::new(
            vec![
                SpinSpecies::new("A", 47.577).unwrap(),
                SpinSpecies::new("B", 42.577).unwrap(),
            ],
            vec![SpinSite::new(0, SiteRole::S), SpinSite::new(1, SiteRole::I)],
            CouplingMatrix::from_pairs(2, &[(0, 1, d)]).unwrap(),
        )
        .unwrap();
        let field = FieldPoint::gauss(100.0).unwrap();
        let delta = (sys.larmor_hz(0, field) - sys.larmor_hz(1, field)).abs();
        assert!((delta - 10.0 * d).abs() < 1e-6);
        let settings = HamiltonianSettings::new(field).with_mode(FlipFlopMode::ForceOn);
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        // two-level ceiling: (d/2)^2 / ((d/2)^2 + delta^2) ~ 0.25%
        let ceiling = (d / 2.0).powi(2) / ((d / 2.0).powi(2) + delta.powi(2));
        let rho0 = DensityMatrix::thermal_product(&[1.0, 0.0]).unwrap();
        let zi = spin_operator(&sys, 1, Axis::Z).unwrap();
        let nu = (delta.powi(2) + (d / 2.0).powi(2)).sqrt();
        let mut max_transfer: f64 = 0.0;
        for k in 1..=160 {
            let t = k as f64 / 160.0 / nu; // spans one oscillation, hits the peak at k = 80
            let rho_t = propagate(&rho0, &h, t).unwrap();
            max_transfer = max_transfer.max(2.0 * expectation(&rho_t, &zi).unwrap());
        }
        assert!(max_transfer <= 0.0026, "transfer {max_transfer} above 0.26%");
        assert!(
            (max_transfer - ceiling).abs() < 0.05 * ceiling,
            "{max_transfer} vs analytic ceiling {ceiling}"
        );
    }

    #[test]
    fn trajectory_csv_shape() {
        let sys = homonuclear_pair(2.0e3);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[1.0, 0.0]).unwrap();
        let schedule =
            EvolutionSchedule::new(vec![Segment::Free { duration_s: 1e-4, settings }]).unwrap();
        let traj = run_trajectory(&sys, &rho, &schedule, 2.5e-5).unwrap();
        let csv = traj.to_csv(9);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t_s,S_z,I1_z,total_Iz");
        assert_eq!(csv.lines().count(), 1 + traj.samples.len());
    }

    #[test]
    fn trajectory_pulse_segment_inverts_then_evolves() {
        let sys = zero_offset_hetero_pair(2.0e3);
        let high = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let low = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap());
        let rho = DensityMatrix::thermal_product(&[0.8, 0.0]).unwrap();
        let w1_khz = 500.0;
        let t_p = 0.5 / (w1_khz * 1e3);
        let pulse = ShapedPulse::constant(w1_khz, t_p, 2, 0.0).unwrap();
        let schedule = EvolutionSchedule::new(vec![
            Segment::Pulse { pulse, target_species: "A".into(), settings: high },
            Segment::Free { duration_s: 2.5e-4, settings: low },
        ])
        .unwrap();
        let traj = run_trajectory(&sys, &rho, &schedule, 5e-5).unwrap();
        // sample 0 is the initial state, sample 1 the post-pulse state
        assert!((traj.samples[0].s_z - 0.4).abs() < 1e-12);
        let after_pulse = &traj.samples[1];
        assert!((after_pulse.s_z + 0.4).abs() < 1e-4, "pulse should invert: {}", after_pulse.s_z);
        assert!((after_pulse.t_s - t_p).abs() < 1e-15);
        // the zero-offset dwell then moves inverted polarization into the pool
        let last = traj.samples.last().unwrap();
        assert!(last.i_z[0] < -1e-3, "exchange should pull the pool down: {}", last.i_z[0]);
        // total z conserved across the dwell (not across the pulse)
        let total = |s: &TrajectorySample| s.s_z + s.total_i_z;
        assert!((total(last) - total(after_pulse)).abs() < 1e-8);
    }

    #[test]
    fn depolarize_preserves_invariants() {
        let rho = DensityMatrix::thermal_product(&[1.0, -0.5]).unwrap();
        let out = rho.depolarize(0.999).unwrap();
        out.validate().unwrap();
        let tr = out.trace();
        assert!((tr.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_conserved_under_fixed_hamiltonian() {
        let sys = hetero_pair(7.0e3);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap())
            .with_mode(FlipFlopMode::ForceOn);
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        let rho0 = DensityMatrix::thermal_product(&[0.9, -0.2]).unwrap();
        let e0 = expectation(&rho0, &h).unwrap();
        for k in 1..=5 {
            let rho_t = propagate(&rho0, &h, k as f64 * 3.7e-5).unwrap();
            let e = expectation(&rho_t, &h).unwrap();
            assert!((e - e0).abs() <= 1e-8 * e0.abs().max(1.0), "energy drift {} vs {}", e, e0);
        }
    }
}
