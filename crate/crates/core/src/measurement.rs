//! Site-resolved measurement in the Wannier basis: Born probabilities,
//! seeded shot sampling, and fringe-based phase estimation.
//!
//! Shots are drawn with SplitMix64 (64-bit state, increment
//! 0x9E3779B97F4A7C15, output mix constants 0xBF58476D1CE4E5B9 and
//! 0x94D049BB133111EB). A draw maps `next_u64() >> 11` to a uniform in
//! [0, 1) with 53 bits and inverts the cumulative distribution in (n, R)
//! index order, so records are reproducible bit-for-bit on any platform.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochBasis;
use crate::error::{Error, Result};
use crate::lattice::bloch_phase;
use crate::state::QuantumState;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Coherence threshold is this many null RMS visibilities (2/√M each).
pub const COHERENCE_SIGMAS: f64 = 3.0;
const BOOTSTRAP_STREAM: u64 = 0xB007_57AA_D5EE_D001;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteDistribution {
    n_bands: usize,
    n_cells: usize,
    lattice_constant: f64,
    // index = band * N + site
    probs: Vec<f64>,
}

impl SiteDistribution {
    /// Clamps entries in [−1e-14, 0) to zero; rejects anything more negative
    /// or a total that misses 1 by more than 1e-10.
    pub fn new(n_bands: usize, n_cells: usize, lattice_constant: f64, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_bands * n_cells {
            return Err(Error::DimensionMismatch {
                expected: n_bands * n_cells,
                got: probs.len(),
            });
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= -1e-14)) {
            return Err(Error::InvalidArgument(format!("negative probability {p}")));
        }
        let probs: Vec<f64> = probs.into_iter().map(|p| p.max(0.0)).collect();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}")));
        }
        Ok(Self {
            n_bands,
            n_cells,
            lattice_constant,
            probs,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, band: usize, site: usize) -> f64 {
        self.probs[band * self.n_cells + site]
    }

    /// Σ_n p(n, R) for each site.
    pub fn site_marginal(&self) -> Vec<f64> {
        (0..self.n_cells)
            .map(|r| (0..self.n_bands).map(|n| self.get(n, r)).sum())
            .collect()
    }

    /// CSV with columns `n,R,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,R,p")?;
        for n in 0..self.n_bands {
            for r in 0..self.n_cells {
                writeln!(out, "{},{:.16e},{:.16e}", n, r as f64 * self.lattice_constant, self.get(n, r))?;
            }
        }
        Ok(())
    }
}

/// p(n, R) = ⟨W^n_R|ρ|W^n_R⟩ for a pure state or a mixture.
pub fn site_distribution<S: QuantumState + ?Sized>(state: &S, basis: &BlochBasis) -> Result<SiteDistribution> {
    let dim = state.basis_tag().dim();
    if dim != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: dim,
        });
    }
    SiteDistribution::new(
        basis.n_bands(),
        basis.n_cells(),
        basis.config().lattice_constant,
        state.wannier_populations()?,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    /// (band, site index) per shot.
    pub outcomes: Vec<(usize, usize)>,
    pub seed: u64,
    pub shots: usize,
    pub n_bands: usize,
    pub n_cells: usize,
    pub lattice_constant: f64,
}

impl ShotRecord {
    /// CSV with columns `shot_index,n,R`, R as a position.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "shot_index,n,R")?;
        for (i, (n, r)) in self.outcomes.iter().enumerate() {
            writeln!(out, "{},{},{:.16e}", i, n, *r as f64 * self.lattice_constant)?;
        }
        Ok(())
    }

    pub fn site_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_cells];
        for &(_, r) in &self.outcomes {
            counts[r] += 1;
        }
        counts
    }
}

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_shots(p: &SiteDistribution, shots: usize, seed: u64) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    let mut cdf = Vec::with_capacity(p.probs.len());
    let mut acc = 0.0;
    for &q in &p.probs {
        acc += q;
        cdf.push(acc);
    }
    let last = p.probs.iter().rposition(|&q| q > 0.0).unwrap_or(0);
    let mut rng = SplitMix64::from_seed(seed.to_le_bytes());
    let outcomes = (0..shots)
        .map(|_| {
            let u = uniform(&mut rng) * acc;
            let idx = cdf.partition_point(|&c| c <= u).min(last);
            (idx / p.n_cells, idx % p.n_cells)
        })
        .collect();
    Ok(ShotRecord {
        outcomes,
        seed,
        shots,
        n_bands: p.n_bands,
        n_cells: p.n_cells,
        lattice_constant: p.lattice_constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    /// arg Z, wrapped to (−π, π].
    pub phi_hat: f64,
    /// 2|Z|.
    pub visibility: f64,
    /// Circular standard deviation of bootstrap estimates; 0 for exact
    /// distributions.
    pub stderr: f64,
    /// 0 when computed from an exact distribution.
    pub shots: usize,
    pub seed: Option<u64>,
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Integer m with Δk = 2πm/(Na), reduced mod N; rejects Δk ≡ 0.
fn fringe_index(delta_k: f64, n_cells: usize, lattice_constant: f64) -> Result<usize> {
    let m = delta_k * n_cells as f64 * lattice_constant / (2.0 * PI);
    let rounded = m.round();
    if !m.is_finite() || (m - rounded).abs() > 1e-9 {
        return Err(Error::NoFringe { delta_k });
    }
    let reduced = (rounded as i64).rem_euclid(n_cells as i64) as usize;
    if reduced == 0 {
        return Err(Error::NoFringe { delta_k });
    }
    Ok(reduced)
}

/// e^{−iΔk R_j} for each site.
fn fringe_kernel(index: usize, n_cells: usize) -> Vec<Complex64> {
    (0..n_cells)
        .map(|site| Complex64::from_polar(1.0, -bloch_phase(index, site, n_cells)))
        .collect()
}

fn fringe_component(weights: &[f64], kernel: &[Complex64]) -> Complex64 {
    weights.iter().zip(kernel).map(|(w, k)| w * k).sum()
}

/// Z = Σ_R p(R) e^{−iΔk R} on the exact distribution (the M → ∞ limit).
pub fn estimate_phase_exact(p: &SiteDistribution, delta_k: f64) -> Result<PhaseEstimate> {
    let index = fringe_index(delta_k, p.n_cells, p.lattice_constant)?;
    let z = fringe_component(&p.site_marginal(), &fringe_kernel(index, p.n_cells));
    Ok(PhaseEstimate {
        phi_hat: wrap_angle(z.arg()),
        visibility: 2.0 * z.norm(),
        stderr: 0.0,
        shots: 0,
        seed: None,
    })
}

/// Z = (1/M) Σ_j e^{−iΔk R_j}; φ̂ = arg Z, V = 2|Z|, stderr from
/// [`BOOTSTRAP_RESAMPLES`] multinomial resamples of the site counts.
///
/// When Δk = π/a the fringe is real-valued and only cos φ is identifiable.
pub fn estimate_phase(rec: &ShotRecord, delta_k: f64) -> Result<PhaseEstimate> {
    let index = fringe_index(delta_k, rec.n_cells, rec.lattice_constant)?;
    let kernel = fringe_kernel(index, rec.n_cells);
    let counts = rec.site_counts();
    let m = rec.shots as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
    let z = fringe_component(&freqs, &kernel);

    let mut rng = SplitMix64::from_seed((rec.seed ^ BOOTSTRAP_STREAM).to_le_bytes());
    let mut resampled = vec![0.0; rec.n_cells];
    let mut mean_dir = Complex64::new(0.0, 0.0);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        multinomial(&mut rng, rec.shots as u64, &freqs, &mut resampled);
        let zb = fringe_component(&resampled, &kernel);
        mean_dir += Complex64::from_polar(1.0, zb.arg());
    }
    let r_bar = (mean_dir.norm() / BOOTSTRAP_RESAMPLES as f64).min(1.0);
    let stderr = (-2.0 * r_bar.ln()).max(0.0).sqrt();
    Ok(PhaseEstimate {
        phi_hat: wrap_angle(z.arg()),
        visibility: 2.0 * z.norm(),
        stderr,
        shots: rec.shots,
        seed: Some(rec.seed),
    })
}

/// Draws multinomial(total, probs) by sequential conditional binomials and
/// writes the resulting frequencies into `out`.
fn multinomial(rng: &mut SplitMix64, total: u64, probs: &[f64], out: &mut [f64]) {
    let mut remaining = total;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        let count = if remaining == 0 || p <= 0.0 {
            0
        } else if i == probs.len() - 1 || p >= mass {
            remaining
        } else {
            Binomial::new(remaining, (p / mass).clamp(0.0, 1.0))
                .expect("probability in [0, 1]")
                .sample(rng)
        };
        out[i] = count as f64 / total as f64;
        remaining -= count;
        mass -= p;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Coherent,
    ConsistentWithMixture,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Coherent => "coherent",
            Verdict::ConsistentWithMixture => "consistent_with_mixture",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult {
    pub verdict: Verdict,
    pub visibility: f64,
    pub threshold: f64,
}

/// 6/√M: three times the RMS visibility 2/√M under the mixture null, where
/// E|Z|² = 1/M.
pub fn coherence_threshold(shots: usize) -> f64 {
    2.0 * COHERENCE_SIGMAS / (shots as f64).sqrt()
}

pub fn coherence_test(rec: &ShotRecord, delta_k: f64) -> Result<CoherenceResult> {
    let index = fringe_index(delta_k, rec.n_cells, rec.lattice_constant)?;
    let freqs: Vec<f64> = rec.site_counts().iter().map(|&c| c as f64 / rec.shots as f64).collect();
    let visibility = 2.0 * fringe_component(&freqs, &fringe_kernel(index, rec.n_cells)).norm();
    let threshold = coherence_threshold(rec.shots);
    let verdict = if visibility > threshold {
        Verdict::Coherent
    } else {
        Verdict::ConsistentWithMixture
    };
    Ok(CoherenceResult {
        verdict,
        visibility,
        threshold,
    })
}
