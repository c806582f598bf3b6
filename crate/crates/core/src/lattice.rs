//! Finite periodic lattice: cell and quasimomentum grids plus the cosine
//! model potential.
//!
//! Units follow the optical-lattice convention ħ²/(2m) = 1. The potential
//! depth enters the Hamiltonian in those same units, so `potential_depth = 8`
//! produces Fourier components of −2; use [`LatticeConfig::recoil_energy`] to
//! quote depths in multiples of E_r = (π/a)².

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PlaneWave,
    TightBinding,
}

/// Hopping amplitude used when a config in tight-binding mode is solved.
pub const DEFAULT_HOPPING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_cells: usize,
    pub lattice_constant: f64,
    pub potential_depth: f64,
    pub pw_cutoff: usize,
    pub n_bands: usize,
    pub mode: Mode,
}

impl LatticeConfig {
    pub fn plane_wave(
        n_cells: usize,
        lattice_constant: f64,
        potential_depth: f64,
        pw_cutoff: usize,
        n_bands: usize,
    ) -> Result<Self> {
        let config = Self {
            n_cells,
            lattice_constant,
            potential_depth,
            pw_cutoff,
            n_bands,
            mode: Mode::PlaneWave,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn tight_binding(n_cells: usize, lattice_constant: f64) -> Result<Self> {
        let config = Self {
            n_cells,
            lattice_constant,
            potential_depth: 0.0,
            pw_cutoff: 0,
            n_bands: 1,
            mode: Mode::TightBinding,
        };
        config.validate()?;
        Ok(config)
    }

    /// Parses a JSON document and validates it. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidConfig { field, reason });
        if self.n_cells < 2 {
            return bad("n_cells", format!("need N >= 2, got {}", self.n_cells));
        }
        if !(self.lattice_constant.is_finite() && self.lattice_constant > 0.0) {
            return bad("lattice_constant", format!("must be positive, got {}", self.lattice_constant));
        }
        if !(self.potential_depth.is_finite() && self.potential_depth >= 0.0) {
            return bad("potential_depth", format!("must be >= 0, got {}", self.potential_depth));
        }
        if self.n_bands == 0 {
            return bad("n_bands", "must be positive".into());
        }
        match self.mode {
            Mode::PlaneWave if self.n_bands > self.n_plane_waves() => bad(
                "n_bands",
                format!("{} exceeds 2M+1 = {}", self.n_bands, self.n_plane_waves()),
            ),
            Mode::TightBinding if self.n_bands != 1 => {
                bad("n_bands", format!("tight_binding mode has one band, got {}", self.n_bands))
            }
            _ => Ok(()),
        }
    }

    /// Number of reciprocal vectors 2M+1 kept per quasimomentum sector.
    pub fn n_plane_waves(&self) -> usize {
        2 * self.pw_cutoff + 1
    }

    /// E_r = (π/a)² in units with ħ²/(2m) = 1.
    pub fn recoil_energy(&self) -> f64 {
        (PI / self.lattice_constant).powi(2)
    }

    pub fn ring_length(&self) -> f64 {
        self.n_cells as f64 * self.lattice_constant
    }

    /// Reciprocal vector G_j = 2πj/a.
    pub fn reciprocal(&self, j: i64) -> f64 {
        2.0 * PI * j as f64 / self.lattice_constant
    }

    /// Reciprocal indices j ∈ [−M, M] in storage order.
    pub fn reciprocal_indices(&self) -> impl Iterator<Item = i64> {
        let m = self.pw_cutoff as i64;
        -m..=m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    values: Vec<f64>,
    spacing: f64,
}

impl KGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RGrid {
    sites: Vec<f64>,
    lattice_constant: f64,
}

impl RGrid {
    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.sites[index]
    }

    /// Index of the site at `position`; fails unless `position` is j·a with
    /// 0 ≤ j < N.
    pub fn index_of(&self, position: f64) -> Result<usize> {
        let scaled = position / self.lattice_constant;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-9 || rounded < 0.0 || rounded >= self.sites.len() as f64 {
            return Err(Error::OffGrid {
                position,
                lattice_constant: self.lattice_constant,
                n_cells: self.sites.len(),
            });
        }
        Ok(rounded as usize)
    }
}

/// k_ℓ = 2πℓ/(N a), ℓ = 0..N−1.
pub fn make_kgrid(config: &LatticeConfig) -> KGrid {
    let spacing = 2.0 * PI / config.ring_length();
    KGrid {
        values: (0..config.n_cells).map(|l| spacing * l as f64).collect(),
        spacing,
    }
}

/// R_j = j·a, j = 0..N−1.
pub fn make_rgrid(config: &LatticeConfig) -> RGrid {
    RGrid {
        sites: (0..config.n_cells)
            .map(|j| j as f64 * config.lattice_constant)
            .collect(),
        lattice_constant: config.lattice_constant,
    }
}

/// The phase k_ℓ·R_j = 2π(ℓ j mod N)/N, reduced with integer arithmetic so
/// that it is exact up to one rounding.
pub fn bloch_phase(k_index: usize, site: usize, n_cells: usize) -> f64 {
    2.0 * PI * ((k_index * site) % n_cells) as f64 / n_cells as f64
}

/// Fourier components V_j of V(x) = −(V0/2)·cos(2πx/a); only j = ±1 are
/// nonzero and both equal −V0/4.
pub fn potential_fourier(config: &LatticeConfig) -> Result<BTreeMap<i64, Complex64>> {
    if config.mode != Mode::PlaneWave {
        return Err(Error::RequiresPlaneWave);
    }
    let amp = Complex64::new(-config.potential_depth / 4.0, 0.0);
    let mut out = BTreeMap::new();
    for j in config.reciprocal_indices() {
        let v = if j.abs() == 1 { amp } else { Complex64::new(0.0, 0.0) };
        out.insert(j, v);
    }
    // V_{±1} are always present, even for M = 0 where they cannot couple.
    out.insert(1, amp);
    out.insert(-1, amp.conj());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pw(n: usize, a: f64) -> LatticeConfig {
        LatticeConfig::plane_wave(n, a, 0.0, 2, 1).unwrap()
    }

    #[test]
    fn kgrid_values() {
        let k = make_kgrid(&pw(4, 1.0));
        let want = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, b) in k.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let k = make_kgrid(&pw(2, 2.0));
        assert_eq!(k.values(), &[0.0, PI / 2.0]);
        let k = make_kgrid(&pw(8, 1.0));
        assert!((k.get(1) - k.get(0) - PI / 4.0).abs() < 1e-15);
        assert!(k.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rgrid_values() {
        assert_eq!(make_rgrid(&pw(3, 1.0)).sites(), &[0.0, 1.0, 2.0]);
        assert_eq!(make_rgrid(&pw(2, 0.5)).sites(), &[0.0, 0.5]);
        assert!(LatticeConfig::plane_wave(1, 1.0, 0.0, 2, 1).is_err());
        assert!(LatticeConfig::tight_binding(1, 1.0).is_err());
    }

    #[test]
    fn rgrid_index_of() {
        let r = make_rgrid(&pw(4, 0.5));
        assert_eq!(r.index_of(1.5).unwrap(), 3);
        assert!(r.index_of(0.25).is_err());
        assert!(r.index_of(2.0).is_err());
        assert!(r.index_of(-0.5).is_err());
    }

    #[test]
    fn discrete_orthogonality() {
        for n in 2..=12 {
            let config = pw(n, 1.3);
            let k = make_kgrid(&config);
            let r = make_rgrid(&config);
            for l in 0..n {
                for lp in 0..n {
                    let s: Complex64 = r
                        .sites()
                        .iter()
                        .map(|&x| Complex64::from_polar(1.0, (k.get(l) - k.get(lp)) * x))
                        .sum();
                    let want = if l == lp { n as f64 } else { 0.0 };
                    assert!((s - want).norm() < 1e-12, "N={n} l={l} lp={lp} {s}");
                }
            }
        }
    }

    #[test]
    fn potential_components() {
        let mut config = pw(4, 1.0);
        let v = potential_fourier(&config).unwrap();
        assert!(v.values().all(|c| c.norm() == 0.0));
        config.potential_depth = 8.0;
        let v = potential_fourier(&config).unwrap();
        assert_eq!(v[&1], Complex64::new(-2.0, 0.0));
        assert_eq!(v[&-1], Complex64::new(-2.0, 0.0));
        for (j, c) in &v {
            assert_eq!(v[&-j], c.conj());
            if j.abs() != 1 {
                assert_eq!(*c, Complex64::new(0.0, 0.0));
            }
        }
        let tb = LatticeConfig::tight_binding(4, 1.0).unwrap();
        assert!(matches!(potential_fourier(&tb), Err(Error::RequiresPlaneWave)));
    }

    #[test]
    fn config_json() {
        let ok = r#"{"n_cells":8,"lattice_constant":1.0,"potential_depth":8.0,"pw_cutoff":4,"n_bands":4,"mode":"plane_wave"}"#;
        let c = LatticeConfig::from_json(ok).unwrap();
        assert_eq!(c.n_plane_waves(), 9);
        let unknown = r#"{"n_cells":8,"lattice_constant":1.0,"potential_depth":8.0,"pw_cutoff":4,"n_bands":4,"mode":"plane_wave","extra":1}"#;
        assert!(LatticeConfig::from_json(unknown).is_err());
        let too_many = r#"{"n_cells":8,"lattice_constant":1.0,"potential_depth":8.0,"pw_cutoff":1,"n_bands":4,"mode":"plane_wave"}"#;
        assert!(matches!(
            LatticeConfig::from_json(too_many),
            Err(Error::InvalidConfig { field: "n_bands", .. })
        ));
        let tb = r#"{"n_cells":8,"lattice_constant":1.0,"potential_depth":0.0,"pw_cutoff":0,"n_bands":2,"mode":"tight_binding"}"#;
        assert!(LatticeConfig::from_json(tb).is_err());
    }
}
