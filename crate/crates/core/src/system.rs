//! Spin species, cluster geometry, dipolar couplings, and the field-dependent
//! coupling-regime classification.
//!
//! A [`SpinSystem`] is a small cluster with exactly one rare spin (role `S`)
//! and any number of abundant spins (role `I`). Couplings can be supplied
//! directly as a matrix or derived from site geometry through the secular
//! dipolar formula; explicitly supplied entries win over geometry.

use crate::constants::{GAMMA_FLUORINE_MHZ_PER_T, GAMMA_PROTON_MHZ_PER_T, MU0_OVER_4PI, PLANCK_H};
use crate::error::{Error, Result};

/// A nuclear species: a label plus its gyromagnetic ratio in MHz/T (cycles).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSpecies {
    pub label: String,
    pub gamma_mhz_per_t: f64,
}

impl SpinSpecies {
    pub fn new(label: impl Into<String>, gamma_mhz_per_t: f64) -> Result<Self> {
        let label = label.into();
        if gamma_mhz_per_t == 0.0 || !gamma_mhz_per_t.is_finite() {
            return Err(Error::InvalidSystem(format!(
                "species '{label}' must have a nonzero finite gyromagnetic ratio"
            )));
        }
        if label.is_empty() {
            return Err(Error::InvalidSystem("species label must be non-empty".into()));
        }
        Ok(Self { label, gamma_mhz_per_t })
    }

    /// Proton reference species.
    pub fn proton() -> Self {
        Self { label: "H".into(), gamma_mhz_per_t: GAMMA_PROTON_MHZ_PER_T }
    }

    /// Fluorine-19 reference species.
    pub fn fluorine() -> Self {
        Self { label: "F".into(), gamma_mhz_per_t: GAMMA_FLUORINE_MHZ_PER_T }
    }
}

/// Role of a site in the cluster: the single rare spin or one of the abundant
/// pool spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRole {
    S,
    I,
}

impl SiteRole {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "S" | "s" => Some(SiteRole::S),
            "I" | "i" => Some(SiteRole::I),
            _ => None,
        }
    }
}

/// One spin site: a species reference, an optional position in ångström, and
/// its role.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSite {
    /// Index into the owning system's species table.
    pub species: usize,
    pub position: Option<[f64; 3]>,
    pub role: SiteRole,
}

impl SpinSite {
    pub fn new(species: usize, role: SiteRole) -> Self {
        Self { species, position: None, role }
    }

    pub fn at(species: usize, role: SiteRole, position: [f64; 3]) -> Self {
        Self { species, position: Some(position), role }
    }
}

/// Symmetric matrix of pairwise coupling strengths in Hz, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    d: Vec<f64>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, d: vec![0.0; n * n] }
    }

    /// Build from an explicit list of (i, j, d_hz) entries; unlisted pairs are zero.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::zeros(n);
        for &(i, j, d) in pairs {
            m.set(i, j, d)?;
        }
        Ok(m)
    }

    pub fn set(&mut self, i: usize, j: usize, d_hz: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::SiteIndex { index: i.max(j), count: self.n });
        }
        if i == j {
            return Err(Error::InvalidSystem("coupling diagonal must stay zero".into()));
        }
        if !d_hz.is_finite() {
            return Err(Error::InvalidSystem(format!("coupling ({i},{j}) not finite")));
        }
        self.d[i * self.n + j] = d_hz;
        self.d[j * self.n + i] = d_hz;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn validate(&self, site_count: usize) -> Result<()> {
        if self.n != site_count {
            return Err(Error::DimensionMismatch { left: self.n, right: site_count });
        }
        for i in 0..self.n {
            if self.d[i * self.n + i] != 0.0 {
                return Err(Error::InvalidSystem("coupling diagonal must be zero".into()));
            }
            for j in 0..self.n {
                let v = self.d[i * self.n + j];
                if !v.is_finite() {
                    return Err(Error::InvalidSystem(format!("coupling ({i},{j}) not finite")));
                }
                if v != self.d[j * self.n + i] {
                    return Err(Error::InvalidSystem("coupling matrix must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Static magnetic field strength in gauss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    gauss: f64,
}

impl FieldPoint {
    pub fn gauss(g: f64) -> Result<Self> {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::InvalidParameter(format!("field must be >= 0 gauss, got {g}")));
        }
        Ok(Self { gauss: g })
    }

    pub fn as_gauss(&self) -> f64 {
        self.gauss
    }

    pub fn as_tesla(&self) -> f64 {
        self.gauss * 1e-4
    }
}

/// The rare-plus-pool cluster: species table, sites, and couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    species: Vec<SpinSpecies>,
    sites: Vec<SpinSite>,
    couplings: CouplingMatrix,
}

impl SpinSystem {
    /// Build a system with directly supplied couplings.
    pub fn new(
        species: Vec<SpinSpecies>,
        sites: Vec<SpinSite>,
        couplings: CouplingMatrix,
    ) -> Result<Self> {
        couplings.validate(sites.len())?;
        let sys = Self { species, sites, couplings };
        sys.validate()?;
        Ok(sys)
    }

    /// Build a system whose couplings are derived entirely from site geometry.
    ///
    /// All sites must carry positions. `field_axis` is the static-field
    /// direction the secular angle is measured against.
    pub fn from_geometry(
        species: Vec<SpinSpecies>,
        sites: Vec<SpinSite>,
        field_axis: [f64; 3],
    ) -> Result<Self> {
        Self::from_geometry_with_overrides(species, sites, field_axis, &[])
    }

    /// Geometry-derived couplings with explicit per-pair overrides. An
    /// override always wins over the geometric value.
    pub fn from_geometry_with_overrides(
        species: Vec<SpinSpecies>,
        sites: Vec<SpinSite>,
        field_axis: [f64; 3],
        overrides: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = sites.len();
        let mut couplings = CouplingMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let pi = sites[i].position.ok_or_else(|| {
                    Error::InvalidSystem("geometry construction requires all positions".into())
                })?;
                let pj = sites[j].position.ok_or_else(|| {
                    Error::InvalidSystem("geometry construction requires all positions".into())
                })?;
                let gi = species
                    .get(sites[i].species)
                    .ok_or_else(|| Error::InvalidSystem(format!("site {i} species out of range")))?
                    .gamma_mhz_per_t;
                let gj = species
                    .get(sites[j].species)
                    .ok_or_else(|| Error::InvalidSystem(format!("site {j} species out of range")))?
                    .gamma_mhz_per_t;
                couplings.set(i, j, dipolar_coupling(pi, pj, gi, gj, field_axis)?)?;
            }
        }
        for &(i, j, d) in overrides {
            couplings.set(i, j, d)?;
        }
        Self::new(species, sites, couplings)
    }

    fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::InvalidSystem("system must contain at least one site".into()));
        }
        let s_count = self.sites.iter().filter(|s| s.role == SiteRole::S).count();
        if s_count != 1 {
            return Err(Error::InvalidSystem(format!(
                "exactly one site with role S required, found {s_count}"
            )));
        }
        let mut labels = std::collections::HashSet::new();
        for sp in &self.species {
            if sp.gamma_mhz_per_t == 0.0 || !sp.gamma_mhz_per_t.is_finite() {
                return Err(Error::InvalidSystem(format!(
                    "species '{}' has invalid gyromagnetic ratio",
                    sp.label
                )));
            }
            if !labels.insert(sp.label.as_str()) {
                return Err(Error::InvalidSystem(format!(
                    "duplicate species label '{}'",
                    sp.label
                )));
            }
        }
        for (i, site) in self.sites.iter().enumerate() {
            if site.species >= self.species.len() {
                return Err(Error::InvalidSystem(format!("site {i} species out of range")));
            }
        }
        let with_pos = self.sites.iter().filter(|s| s.position.is_some()).count();
        if with_pos != 0 && with_pos != self.sites.len() {
            return Err(Error::InvalidSystem(
                "positions must be present for all sites or absent for all".into(),
            ));
        }
        Ok(())
    }

    pub fn species(&self) -> &[SpinSpecies] {
        &self.species
    }

    pub fn sites(&self) -> &[SpinSite] {
        &self.sites
    }

    pub fn couplings(&self) -> &CouplingMatrix {
        &self.couplings
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// Number of abundant (role I) spins.
    pub fn abundant_count(&self) -> usize {
        self.sites.iter().filter(|s| s.role == SiteRole::I).count()
    }

    /// Index of the unique rare spin.
    pub fn rare_index(&self) -> usize {
        self.sites
            .iter()
            .position(|s| s.role == SiteRole::S)
            .expect("validated system has one S site")
    }

    /// Indices of the abundant spins, in site order.
    pub fn abundant_indices(&self) -> Vec<usize> {
        self.sites
            .iter()
            .enumerate()
            .filter(|(_, s)| s.role == SiteRole::I)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn species_index(&self, label: &str) -> Option<usize> {
        self.species.iter().position(|s| s.label == label)
    }

    pub fn site_species(&self, site: usize) -> &SpinSpecies {
        &self.species[self.sites[site].species]
    }

    /// Larmor frequency of a site at the given field, in Hz (cycles).
    pub fn larmor_hz(&self, site: usize, field: FieldPoint) -> f64 {
        self.site_species(site).gamma_mhz_per_t * 1e6 * field.as_tesla()
    }

    /// Larmor frequency of the abundant species at the given field, in Hz.
    /// Falls back to the rare spin for a single-spin system.
    pub fn abundant_larmor_hz(&self, field: FieldPoint) -> f64 {
        let site = self.abundant_indices().first().copied().unwrap_or_else(|| self.rare_index());
        self.larmor_hz(site, field)
    }

    /// Parse the structured-text system format.
    ///
    /// Line types (whitespace separated, `#` starts a comment):
    ///
    /// ```text
    /// species <label> <gamma_mhz_per_t>
    /// coupling <i> <j> <d_hz>
    /// <species-label> <S|I> [<x> <y> <z>]        # a site, coordinates in ångström
    /// ```
    ///
    /// Site indices referenced by `coupling` lines follow site-line order,
    /// starting at 0. When coordinates are given for every site, couplings
    /// default to the secular dipolar value with the field along +z; explicit
    /// `coupling` lines override the geometric value pair by pair.
    pub fn parse(text: &str) -> Result<Self> {
        let mut species: Vec<SpinSpecies> = Vec::new();
        let mut sites: Vec<(usize, SpinSite)> = Vec::new(); // (line, site)
        let mut coupling_lines: Vec<(usize, usize, usize, f64)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            let err = |message: String| Error::SystemFile { line: line_no, message };
            match tokens[0] {
                "species" => {
                    if tokens.len() != 3 {
                        return Err(err("expected: species <label> <gamma_mhz_per_t>".into()));
                    }
                    let gamma: f64 = tokens[2]
                        .parse()
                        .map_err(|_| err(format!("bad gyromagnetic ratio '{}'", tokens[2])))?;
                    if species.iter().any(|s| s.label == tokens[1]) {
                        return Err(err(format!("duplicate species '{}'", tokens[1])));
                    }
                    species.push(
                        SpinSpecies::new(tokens[1], gamma)
                            .map_err(|e| err(e.to_string()))?,
                    );
                }
                "coupling" => {
                    if tokens.len() != 4 {
                        return Err(err("expected: coupling <i> <j> <d_hz>".into()));
                    }
                    let i: usize = tokens[1]
                        .parse()
                        .map_err(|_| err(format!("bad site index '{}'", tokens[1])))?;
                    let j: usize = tokens[2]
                        .parse()
                        .map_err(|_| err(format!("bad site index '{}'", tokens[2])))?;
                    let d: f64 = tokens[3]
                        .parse()
                        .map_err(|_| err(format!("bad coupling '{}'", tokens[3])))?;
                    coupling_lines.push((line_no, i, j, d));
                }
                label => {
                    // site line: <species-label> <role> [x y z]
                    if tokens.len() != 2 && tokens.len() != 5 {
                        return Err(err(format!(
                            "expected site line '<species> <S|I> [x y z]', got {} fields",
                            tokens.len()
                        )));
                    }
                    let species_idx = species
                        .iter()
                        .position(|s| s.label == label)
                        .ok_or_else(|| err(format!(
                            "unknown species '{label}' (species lines must come first)"
                        )))?;
                    let role = SiteRole::parse(tokens[1])
                        .ok_or_else(|| err(format!("bad role '{}', expected S or I", tokens[1])))?;
                    let mut site = SpinSite::new(species_idx, role);
                    if tokens.len() == 5 {
                        let mut pos = [0.0; 3];
                        for (k, tok) in tokens[2..5].iter().enumerate() {
                            pos[k] = tok
                                .parse()
                                .map_err(|_| err(format!("bad coordinate '{tok}'")))?;
                        }
                        site.position = Some(pos);
                    }
                    sites.push((line_no, site));
                }
            }
        }

        if sites.is_empty() {
            return Err(Error::InvalidSystem("system file defines no sites".into()));
        }
        let n = sites.len();
        for &(line, i, j, _) in &coupling_lines {
            if i >= n || j >= n || i == j {
                return Err(Error::SystemFile {
                    line,
                    message: format!("coupling indices ({i},{j}) out of range for {n} sites"),
                });
            }
        }
        let site_list: Vec<SpinSite> = sites.into_iter().map(|(_, s)| s).collect();
        let overrides: Vec<(usize, usize, f64)> =
            coupling_lines.iter().map(|&(_, i, j, d)| (i, j, d)).collect();
        let all_positioned = site_list.iter().all(|s| s.position.is_some());
        if all_positioned {
            SpinSystem::from_geometry_with_overrides(species, site_list, [0.0, 0.0, 1.0], &overrides)
        } else {
            let couplings = CouplingMatrix::from_pairs(n, &overrides)?;
            SpinSystem::new(species, site_list, couplings)
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidSystem(format!("cannot read '{}': {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}

/// Secular dipolar coupling between two sites, in Hz:
/// `d = -(mu0/4pi) h gamma_i gamma_j (1 - 3 cos^2 theta) / r^3` with gamma in
/// Hz/T, r in metres, theta measured against `field_axis`.
///
/// Positions are in ångström, gammas in MHz/T. Symmetric in i and j; scales
/// as 1/r^3; vanishes at the magic angle.
pub fn dipolar_coupling(
    pos_i: [f64; 3],
    pos_j: [f64; 3],
    gamma_i_mhz_per_t: f64,
    gamma_j_mhz_per_t: f64,
    field_axis: [f64; 3],
) -> Result<f64> {
    let dr = [pos_i[0] - pos_j[0], pos_i[1] - pos_j[1], pos_i[2] - pos_j[2]];
    let r_ang = (dr[0] * dr[0] + dr[1] * dr[1] + dr[2] * dr[2]).sqrt();
    if r_ang.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !r_ang.is_finite() {
        return Err(Error::DegenerateGeometry);
    }
    let axis_norm =
        (field_axis[0].powi(2) + field_axis[1].powi(2) + field_axis[2].powi(2)).sqrt();
    if axis_norm.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !axis_norm.is_finite() {
        return Err(Error::InvalidParameter("field axis must be a nonzero vector".into()));
    }
    let cos_theta =
        (dr[0] * field_axis[0] + dr[1] * field_axis[1] + dr[2] * field_axis[2]) / (r_ang * axis_norm);
    let r_m = r_ang * 1e-10;
    // gamma product taken first so the result is bit-identical under i <-> j
    let gamma_product = (gamma_i_mhz_per_t * 1e6) * (gamma_j_mhz_per_t * 1e6);
    let b_hz = MU0_OVER_4PI * PLANCK_H * gamma_product / (r_m * r_m * r_m);
    Ok(-b_hz * (1.0 - 3.0 * cos_theta * cos_theta))
}

/// Whether the flip-flop (XY) part of a pair coupling is energetically
/// allowed at a given field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipFlopRegime {
    Active,
    Suppressed,
}

/// Per-pair flip-flop classification for one system at one field.
#[derive(Debug, Clone)]
pub struct RegimeMap {
    n: usize,
    active: Vec<bool>,
}

impl RegimeMap {
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[i * self.n + j]
    }

    pub fn regime(&self, i: usize, j: usize) -> FlipFlopRegime {
        if self.is_active(i, j) {
            FlipFlopRegime::Active
        } else {
            FlipFlopRegime::Suppressed
        }
    }

    /// All unordered pairs (i < j) with their classification.
    pub fn pairs(&self) -> Vec<(usize, usize, FlipFlopRegime)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.push((i, j, self.regime(i, j)));
            }
        }
        out
    }
}

/// Classify every pair of a system at the given field.
///
/// A pair is flip-flop active when `|omega_i - omega_j| <= threshold_ratio *
/// |d_ij|` with omega the Larmor frequency in Hz; same-species pairs are
/// always active regardless of field or coupling.
pub fn classify_regime(system: &SpinSystem, field: FieldPoint, threshold_ratio: f64) -> RegimeMap {
    let n = system.site_count();
    let mut active = vec![false; n * n];
    for i in 0..n {
        active[i * n + i] = true;
        for j in (i + 1)..n {
            let same_species = system.sites()[i].species == system.sites()[j].species;
            let is_active = if same_species {
                true
            } else {
                let delta = (system.larmor_hz(i, field) - system.larmor_hz(j, field)).abs();
                let d = system.couplings().get(i, j).abs();
                delta <= threshold_ratio * d
            };
            active[i * n + j] = is_active;
            active[j * n + i] = is_active;
        }
    }
    RegimeMap { n, active }
}
