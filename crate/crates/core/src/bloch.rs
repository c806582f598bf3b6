//! Bloch Hamiltonian per quasimomentum, band solver, and gauge fixing.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigen::diagonalize_hermitian;
use crate::error::{Error, Result};
use crate::lattice::{bloch_phase, make_kgrid, potential_fourier, KGrid, LatticeConfig, Mode, DEFAULT_HOPPING};

/// Magnitude below which the gauge-fixing value (then derivative) is
/// considered to vanish.
pub const GAUGE_NODE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gauge {
    /// Phases as returned by the eigensolver.
    Raw,
    /// ψ(x0) real and positive, or ψ'(x0) when the value vanishes.
    Kohn { x0: f64 },
    /// Amplitudes e^{ikR}/√N on the site basis.
    TightBinding,
    /// Arbitrary per-state phases applied on top of another gauge.
    Custom,
}

#[derive(Debug, Clone)]
pub struct BlochState {
    pub band: usize,
    pub k_index: usize,
    pub energy: f64,
    /// Plane-wave coefficients over j ∈ [−M, M] in plane_wave mode; a single
    /// amplitude multiplying e^{ikR}/√N in tight_binding mode.
    pub coeffs: Vec<Complex64>,
    pub gauge: Gauge,
}

#[derive(Debug, Clone)]
pub struct BlochBasis {
    config: LatticeConfig,
    kgrid: KGrid,
    hopping: f64,
    // band-major: index = band * N + k_index
    states: Vec<BlochState>,
}

/// H_{jj'}(k) = (k + G_j)² δ_{jj'} + V_{j−j'}.
pub fn build_bloch_hamiltonian(k: f64, config: &LatticeConfig) -> Result<Array2<Complex64>> {
    let fourier = potential_fourier(config)?;
    let m = config.pw_cutoff as i64;
    let dim = config.n_plane_waves();
    let mut h = Array2::<Complex64>::zeros((dim, dim));
    for (row, j) in (-m..=m).enumerate() {
        for (col, jp) in (-m..=m).enumerate() {
            if row == col {
                h[[row, col]] = Complex64::new((k + config.reciprocal(j)).powi(2), 0.0);
            } else if let Some(v) = fourier.get(&(j - jp)) {
                h[[row, col]] = *v;
            }
        }
    }
    Ok(h)
}

/// Lowest `n_bands` eigenpairs at every k_ℓ, Kohn-gauged at x0 = 0. In
/// tight_binding mode this is [`tight_binding_basis`] with unit hopping.
pub fn solve_bands(config: &LatticeConfig) -> Result<BlochBasis> {
    config.validate()?;
    if config.mode == Mode::TightBinding {
        return Ok(tight_binding_basis(config, DEFAULT_HOPPING));
    }
    let kgrid = make_kgrid(config);
    let per_k: Vec<Vec<BlochState>> = (0..config.n_cells)
        .into_par_iter()
        .map(|l| {
            let h = build_bloch_hamiltonian(kgrid.get(l), config)?;
            let eig = diagonalize_hermitian(&h)?;
            Ok((0..config.n_bands)
                .map(|n| BlochState {
                    band: n,
                    k_index: l,
                    energy: eig.values[n],
                    coeffs: eig.vectors.column(n).to_vec(),
                    gauge: Gauge::Raw,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut states: Vec<Option<BlochState>> = vec![None; config.n_bands * config.n_cells];
    for s in per_k.into_iter().flatten() {
        let idx = s.band * config.n_cells + s.k_index;
        states[idx] = Some(s);
    }
    let basis = BlochBasis {
        config: config.clone(),
        kgrid,
        hopping: DEFAULT_HOPPING,
        states: states.into_iter().map(Option::unwrap).collect(),
    };
    basis.fix_gauge(0.0)
}

/// Single-band ring with hopping `hopping`: E(k_ℓ) = −2J cos(k_ℓ a) and
/// amplitudes e^{i k_ℓ R}/√N.
pub fn tight_binding_basis(config: &LatticeConfig, hopping: f64) -> BlochBasis {
    let mut config = config.clone();
    config.mode = Mode::TightBinding;
    config.n_bands = 1;
    config.pw_cutoff = 0;
    config.potential_depth = 0.0;
    let kgrid = make_kgrid(&config);
    let a = config.lattice_constant;
    let states = (0..config.n_cells)
        .map(|l| BlochState {
            band: 0,
            k_index: l,
            energy: -2.0 * hopping * (kgrid.get(l) * a).cos(),
            coeffs: vec![Complex64::new(1.0, 0.0)],
            gauge: Gauge::TightBinding,
        })
        .collect();
    BlochBasis {
        config,
        kgrid,
        hopping,
        states,
    }
}

impl BlochBasis {
    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn n_bands(&self) -> usize {
        self.config.n_bands
    }

    pub fn n_cells(&self) -> usize {
        self.config.n_cells
    }

    /// Tight-binding hopping J (unused in plane_wave mode).
    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Dimension of the Bloch (equivalently Wannier) coordinate space.
    pub fn dim(&self) -> usize {
        self.n_bands() * self.n_cells()
    }

    /// Row/column of (n, ℓ) in Bloch-basis vectors and matrices.
    pub fn index(&self, band: usize, k_index: usize) -> usize {
        band * self.n_cells() + k_index
    }

    pub fn check_band(&self, band: usize) -> Result<()> {
        if band >= self.n_bands() {
            return Err(Error::BandOutOfRange {
                band,
                n_bands: self.n_bands(),
            });
        }
        Ok(())
    }

    pub fn check_k_index(&self, k_index: usize) -> Result<()> {
        if k_index >= self.n_cells() {
            return Err(Error::KIndexOutOfRange {
                k_index,
                n_cells: self.n_cells(),
            });
        }
        Ok(())
    }

    pub fn state(&self, band: usize, k_index: usize) -> &BlochState {
        &self.states[self.index(band, k_index)]
    }

    pub fn states(&self) -> &[BlochState] {
        &self.states
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    /// Dimension of the underlying representation: N·(2M+1) plane waves, or
    /// N sites in tight_binding mode.
    pub fn ambient_dim(&self) -> usize {
        match self.mode() {
            Mode::PlaneWave => self.n_cells() * self.config.n_plane_waves(),
            Mode::TightBinding => self.n_cells(),
        }
    }

    /// |ψ_{nℓ}⟩ expanded in the ambient basis. Plane-wave index is
    /// ℓ·(2M+1) + (j + M).
    pub fn ambient(&self, band: usize, k_index: usize) -> Vec<Complex64> {
        let s = self.state(band, k_index);
        let mut out = vec![Complex64::new(0.0, 0.0); self.ambient_dim()];
        match self.mode() {
            Mode::PlaneWave => {
                let npw = self.config.n_plane_waves();
                out[k_index * npw..(k_index + 1) * npw].copy_from_slice(&s.coeffs);
            }
            Mode::TightBinding => {
                let n = self.n_cells();
                let norm = (n as f64).sqrt();
                for (site, z) in out.iter_mut().enumerate() {
                    *z = s.coeffs[0] * Complex64::from_polar(1.0 / norm, bloch_phase(k_index, site, n));
                }
            }
        }
        out
    }

    /// ψ_{nℓ}(x) = Σ_j c_j e^{i(k_ℓ+G_j)x}/√(Na). Plane-wave mode only.
    pub fn value_at(&self, band: usize, k_index: usize, x: f64) -> Result<Complex64> {
        self.eval(band, k_index, x, false)
    }

    /// dψ_{nℓ}/dx at x. Plane-wave mode only.
    pub fn derivative_at(&self, band: usize, k_index: usize, x: f64) -> Result<Complex64> {
        self.eval(band, k_index, x, true)
    }

    fn eval(&self, band: usize, k_index: usize, x: f64, derivative: bool) -> Result<Complex64> {
        if self.mode() != Mode::PlaneWave {
            return Err(Error::RequiresPlaneWave);
        }
        let s = self.state(band, k_index);
        let k = self.kgrid.get(k_index);
        let norm = self.config.ring_length().sqrt();
        let sum: Complex64 = self
            .config
            .reciprocal_indices()
            .zip(&s.coeffs)
            .map(|(j, c)| {
                let q = k + self.config.reciprocal(j);
                let wave = Complex64::from_polar(1.0, q * x);
                if derivative {
                    c * wave * Complex64::new(0.0, q)
                } else {
                    c * wave
                }
            })
            .sum();
        Ok(sum / norm)
    }

    /// Rescales every state by a unit phase so that ψ_{nℓ}(x0) is real and
    /// nonnegative, falling back to ψ'_{nℓ}(x0) at nodes. In tight_binding
    /// mode the reference is the site amplitude nearest x0.
    pub fn fix_gauge(mut self, x0: f64) -> Result<Self> {
        let n_cells = self.n_cells();
        for idx in 0..self.states.len() {
            let (band, k_index) = (self.states[idx].band, self.states[idx].k_index);
            let reference = match self.mode() {
                Mode::PlaneWave => {
                    let value = self.value_at(band, k_index, x0)?;
                    if value.norm() >= GAUGE_NODE_TOL {
                        value
                    } else {
                        let slope = self.derivative_at(band, k_index, x0)?;
                        if slope.norm() < GAUGE_NODE_TOL {
                            return Err(Error::GaugeUndetermined { band, k_index });
                        }
                        slope
                    }
                }
                Mode::TightBinding => {
                    let a = self.config.lattice_constant;
                    let site = ((x0 / a).round().rem_euclid(n_cells as f64)) as usize;
                    self.states[idx].coeffs[0] * Complex64::from_polar(1.0, bloch_phase(k_index, site, n_cells))
                }
            };
            let phase = Complex64::from_polar(1.0, -reference.arg());
            let state = &mut self.states[idx];
            for c in &mut state.coeffs {
                *c *= phase;
            }
            state.gauge = match self.config.mode {
                Mode::PlaneWave => Gauge::Kohn { x0 },
                Mode::TightBinding if x0.abs() < 1e-12 => Gauge::TightBinding,
                Mode::TightBinding => Gauge::Kohn { x0 },
            };
        }
        Ok(self)
    }

    /// Multiplies state (n, ℓ) by e^{i·phases[index(n, ℓ)]}.
    pub fn rephase(mut self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.states.len() {
            return Err(Error::DimensionMismatch {
                expected: self.states.len(),
                got: phases.len(),
            });
        }
        for (state, &theta) in self.states.iter_mut().zip(phases) {
            let phase = Complex64::from_polar(1.0, theta);
            for c in &mut state.coeffs {
                *c *= phase;
            }
            state.gauge = Gauge::Custom;
        }
        Ok(self)
    }

    /// Band structure CSV with columns `l,k,n,E`, 17 significant digits.
    pub fn write_bands_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "l,k,n,E")?;
        for l in 0..self.n_cells() {
            for n in 0..self.n_bands() {
                writeln!(out, "{},{:.16e},{},{:.16e}", l, self.kgrid.get(l), n, self.state(n, l).energy)?;
            }
        }
        Ok(())
    }
}

/// Free-particle energies (k + G_j)² for j ∈ [−M, M], ascending.
pub fn free_particle_energies(k: f64, config: &LatticeConfig) -> Vec<f64> {
    let mut e: Vec<f64> = config
        .reciprocal_indices()
        .map(|j| (k + config.reciprocal(j)).powi(2))
        .collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// max_k E_0(k) − min_k E_0(k) for the free particle on this k-grid.
pub fn free_lowest_bandwidth(config: &LatticeConfig) -> f64 {
    let kgrid = make_kgrid(config);
    let e0: Vec<f64> = kgrid
        .values()
        .iter()
        .map(|&k| free_particle_energies(k, config)[0])
        .collect();
    let max = e0.iter().cloned().fold(f64::MIN, f64::max);
    let min = e0.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}
