//! Wannier states |W^n_R⟩ = N^{-1/2} Σ_ℓ e^{−i k_ℓ R} |ψ_{nℓ}⟩ and their
//! basis-level checks.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;

use crate::bloch::BlochBasis;
use crate::error::{Error, Result};
use crate::lattice::{bloch_phase, Mode};

pub const DEFAULT_POINTS_PER_CELL: usize = 64;

#[derive(Debug, Clone)]
pub struct WannierState {
    pub band: usize,
    /// Site index j; the position is R = j·a.
    pub site: usize,
    /// Weights on |ψ_{nℓ}⟩, ℓ = 0..N−1.
    pub coeffs_bloch: Vec<Complex64>,
}

/// Entry U_{Rℓ} = e^{−i k_ℓ R}/√N of the Bloch→Wannier kernel.
pub fn kernel_entry(site: usize, k_index: usize, n_cells: usize) -> Complex64 {
    Complex64::from_polar(1.0 / (n_cells as f64).sqrt(), -bloch_phase(k_index, site, n_cells))
}

/// The N×N kernel with rows indexed by site and columns by k-index.
pub fn kernel(n_cells: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n_cells, n_cells), |(r, l)| kernel_entry(r, l, n_cells))
}

pub fn wannier(basis: &BlochBasis, band: usize, site: usize) -> Result<WannierState> {
    basis.check_band(band)?;
    let n = basis.n_cells();
    if site >= n {
        return Err(Error::OffGrid {
            position: site as f64 * basis.config().lattice_constant,
            lattice_constant: basis.config().lattice_constant,
            n_cells: n,
        });
    }
    Ok(WannierState {
        band,
        site,
        coeffs_bloch: (0..n).map(|l| kernel_entry(site, l, n)).collect(),
    })
}

/// Like [`wannier`] but takes the site as a position, which must be j·a.
pub fn wannier_at(basis: &BlochBasis, band: usize, position: f64) -> Result<WannierState> {
    let site = crate::lattice::make_rgrid(basis.config()).index_of(position)?;
    wannier(basis, band, site)
}

impl WannierState {
    pub fn norm(&self) -> f64 {
        self.coeffs_bloch.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The state expanded in the basis's ambient representation (plane
    /// waves, or sites in tight_binding mode).
    pub fn ambient(&self, basis: &BlochBasis) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); basis.ambient_dim()];
        for (l, c) in self.coeffs_bloch.iter().enumerate() {
            for (o, z) in out.iter_mut().zip(basis.ambient(self.band, l)) {
                *o += c * z;
            }
        }
        out
    }

    /// W(x) on a uniform periodic grid over [0, Na). Plane-wave mode only.
    pub fn real_space(&self, basis: &BlochBasis, points_per_cell: usize) -> Result<Vec<(f64, Complex64)>> {
        if basis.mode() != Mode::PlaneWave {
            return Err(Error::RequiresPlaneWave);
        }
        let config = basis.config();
        let total = points_per_cell * config.n_cells;
        let dx = config.lattice_constant / points_per_cell as f64;
        let norm = config.ring_length().sqrt();
        // Combined plane-wave amplitudes: coefficient of e^{i(k_ℓ+G_j)x}.
        let mut waves = Vec::with_capacity(basis.ambient_dim());
        for (l, c) in self.coeffs_bloch.iter().enumerate() {
            let k = basis.kgrid().get(l);
            for (j, cj) in config.reciprocal_indices().zip(&basis.state(self.band, l).coeffs) {
                waves.push((k + config.reciprocal(j), c * cj / norm));
            }
        }
        Ok((0..total)
            .map(|i| {
                let x = i as f64 * dx;
                let w: Complex64 = waves.iter().map(|(q, amp)| amp * Complex64::from_polar(1.0, q * x)).sum();
                (x, w)
            })
            .collect())
    }

    /// Density CSV with columns `x,re,im,abs2`, 17 significant digits.
    pub fn write_density_csv<W: Write>(&self, basis: &BlochBasis, mut out: W) -> Result<()> {
        writeln!(out, "x,re,im,abs2")?;
        match basis.mode() {
            Mode::PlaneWave => {
                for (x, w) in self.real_space(basis, DEFAULT_POINTS_PER_CELL)? {
                    writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", x, w.re, w.im, w.norm_sqr())?;
                }
            }
            Mode::TightBinding => {
                let a = basis.config().lattice_constant;
                for (site, w) in self.ambient(basis).into_iter().enumerate() {
                    writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", site as f64 * a, w.re, w.im, w.norm_sqr())?;
                }
            }
        }
        Ok(())
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Every Wannier state of the basis in ambient form, ordered (n, R).
pub fn all_ambient(basis: &BlochBasis) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(basis.dim());
    for n in 0..basis.n_bands() {
        for r in 0..basis.n_cells() {
            out.push(wannier(basis, n, r).expect("in range").ambient(basis));
        }
    }
    out
}

/// max |⟨W^n_R|W^{n'}_{R'}⟩ − δ_{RR'}δ_{nn'}|, from ambient inner products.
pub fn check_orthonormality(basis: &BlochBasis) -> f64 {
    let ws = all_ambient(basis);
    let mut worst = 0.0f64;
    for (i, a) in ws.iter().enumerate() {
        for (j, b) in ws.iter().enumerate().skip(i) {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((inner(a, b) - want).norm());
        }
    }
    worst
}

/// Σ_{nR} |W^n_R⟩⟨W^n_R| in the ambient representation.
pub fn wannier_resolution(basis: &BlochBasis) -> Array2<Complex64> {
    outer_sum(&all_ambient(basis), basis.ambient_dim())
}

fn outer_sum(vectors: &[Vec<Complex64>], dim: usize) -> Array2<Complex64> {
    let mut p = Array2::<Complex64>::zeros((dim, dim));
    for v in vectors {
        for i in 0..dim {
            if v[i] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..dim {
                p[[i, j]] += v[i] * v[j].conj();
            }
        }
    }
    p
}

/// Max-entry deviation of Σ_{nR}|W⟩⟨W| from the identity on the span of the
/// included bands: against the full identity when the band set is complete,
/// otherwise against Σ_{nℓ}|ψ_{nℓ}⟩⟨ψ_{nℓ}|.
pub fn resolution_of_identity(basis: &BlochBasis) -> f64 {
    let dim = basis.ambient_dim();
    let p = wannier_resolution(basis);
    let complete = match basis.mode() {
        Mode::TightBinding => true,
        Mode::PlaneWave => basis.n_bands() == basis.config().n_plane_waves(),
    };
    let target = if complete {
        Array2::<Complex64>::eye(dim)
    } else {
        let blochs: Vec<Vec<Complex64>> = (0..basis.n_bands())
            .flat_map(|n| (0..basis.n_cells()).map(move |l| (n, l)))
            .map(|(n, l)| basis.ambient(n, l))
            .collect();
        outer_sum(&blochs, dim)
    };
    (&p - &target).iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Circular second moment of |W(x)|² on the ring of length L = Na:
/// (L/2π)²·(⟨sin²Δθ⟩ − ⟨sin Δθ⟩²) with θ = 2πx/L and Δθ measured from the
/// density's circular mean.
pub fn spread(w: &WannierState, basis: &BlochBasis) -> Result<f64> {
    spread_with(w, basis, DEFAULT_POINTS_PER_CELL)
}

pub fn spread_with(w: &WannierState, basis: &BlochBasis, points_per_cell: usize) -> Result<f64> {
    let samples = w.real_space(basis, points_per_cell)?;
    let length = basis.config().ring_length();
    let weights: Vec<(f64, f64)> = samples
        .iter()
        .map(|(x, z)| (2.0 * PI * x / length, z.norm_sqr()))
        .collect();
    let total: f64 = weights.iter().map(|(_, p)| p).sum();
    let mean: Complex64 = weights.iter().map(|(t, p)| Complex64::from_polar(*p, *t)).sum::<Complex64>() / total;
    let center = mean.arg();
    let (mut s1, mut s2) = (0.0, 0.0);
    for (t, p) in &weights {
        let d = (t - center).sin();
        s1 += p * d;
        s2 += p * d * d;
    }
    s1 /= total;
    s2 /= total;
    Ok((length / (2.0 * PI)).powi(2) * (s2 - s1 * s1))
}

/// ∫|W(x)|² dx by the periodic rectangle rule.
pub fn density_norm(w: &WannierState, basis: &BlochBasis, points_per_cell: usize) -> Result<f64> {
    let dx = basis.config().lattice_constant / points_per_cell as f64;
    Ok(w.real_space(basis, points_per_cell)?.iter().map(|(_, z)| z.norm_sqr()).sum::<f64>() * dx)
}
