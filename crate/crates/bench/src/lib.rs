//! Shared fixtures for the benchmark targets.

use spinamp_core::*;

/// Deterministic congruential stream; benchmarks must not depend on an
/// external RNG crate for reproducible fixtures.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Rare spin plus `m` abundant spins with pseudo-random couplings.
pub fn cluster(m: usize, seed: u64) -> SpinSystem {
    let mut rng = Lcg(seed);
    let species = vec![
        SpinSpecies::fluorine(),
        SpinSpecies::proton(),
    ];
    let mut sites = vec![SpinSite::new(0, SiteRole::S)];
    for _ in 0..m {
        sites.push(SpinSite::new(1, SiteRole::I));
    }
    let n = sites.len();
    let mut couplings = CouplingMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            couplings.set(i, j, rng.in_range(-15e3, 15e3)).unwrap();
        }
    }
    SpinSystem::new(species, sites, couplings).unwrap()
}

pub fn polarizations(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Lcg(seed);
    (0..n).map(|_| rng.in_range(-1.0, 1.0)).collect()
}
