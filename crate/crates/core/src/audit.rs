//! Cell-periodic operators, the lattice translation, and the check that
//! translation-commuting operators never connect different quasimomenta.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochBasis;
use crate::error::{Error, Result};
use crate::lattice::Mode;
use crate::state::{BasisTag, OperatorMatrix, Provenance};

pub const AUDIT_TOL: f64 = 1e-10;

/// The operator "multiply by f(x) = Σ_h f_h e^{i2πhx/a}" in the Bloch basis.
///
/// It is first assembled on the plane-wave grid, where a harmonic h couples
/// momenta p and p' (in units of 2π/(Na)) exactly when p − p' = hN, and then
/// projected onto the included Bloch states.
pub fn cell_periodic_multiplier(basis: &BlochBasis, harmonics: &BTreeMap<i64, Complex64>) -> Result<OperatorMatrix> {
    if basis.mode() != Mode::PlaneWave {
        return Err(Error::RequiresPlaneWave);
    }
    for (&h, &f) in harmonics {
        let partner = harmonics.get(&-h).copied().unwrap_or_default();
        if (partner - f.conj()).norm() > 1e-12 {
            return Err(Error::NonHermitianHarmonics { j: h });
        }
    }
    let config = basis.config();
    let n_cells = config.n_cells as i64;
    let m = config.pw_cutoff as i64;
    let npw = config.n_plane_waves();
    let dim = basis.ambient_dim();
    // momentum label of ambient index ℓ·(2M+1) + (j + M)
    let momentum = |idx: usize| -> i64 {
        let l = (idx / npw) as i64;
        let j = (idx % npw) as i64 - m;
        l + n_cells * j
    };
    let mut f = Array2::<Complex64>::zeros((dim, dim));
    for row in 0..dim {
        for col in 0..dim {
            let dp = momentum(row) - momentum(col);
            if dp.rem_euclid(n_cells) == 0 {
                if let Some(v) = harmonics.get(&(dp / n_cells)) {
                    f[[row, col]] = *v;
                }
            }
        }
    }
    let b = bloch_columns(basis);
    let projected = b.t().mapv(|z| z.conj()).dot(&f).dot(&b);
    OperatorMatrix::new(BasisTag::bloch(basis), projected, Provenance::CellPeriodic)
}

/// Ambient-basis matrix whose column index(n, ℓ) is |ψ_{nℓ}⟩.
fn bloch_columns(basis: &BlochBasis) -> Array2<Complex64> {
    let mut b = Array2::<Complex64>::zeros((basis.ambient_dim(), basis.dim()));
    for s in basis.states() {
        let col = basis.index(s.band, s.k_index);
        for (i, z) in basis.ambient(s.band, s.k_index).into_iter().enumerate() {
            b[[i, col]] = z;
        }
    }
    b
}

/// T_a|ψ_{nℓ}⟩ = e^{−i k_ℓ a}|ψ_{nℓ}⟩.
pub fn translation_operator(basis: &BlochBasis) -> OperatorMatrix {
    let tag = BasisTag::bloch(basis);
    let a = basis.config().lattice_constant;
    let mut m = Array2::<Complex64>::zeros((tag.dim(), tag.dim()));
    for n in 0..basis.n_bands() {
        for l in 0..basis.n_cells() {
            let i = basis.index(n, l);
            m[[i, i]] = Complex64::from_polar(1.0, -basis.kgrid().get(l) * a);
        }
    }
    OperatorMatrix::new(tag, m, Provenance::Translation).expect("diagonal unitary")
}

/// max-entry norm of [A, B].
pub fn commutator_norm(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<f64> {
    let b = b.in_basis(a.tag())?;
    let c = a.matrix().dot(b.matrix()) - b.matrix().dot(a.matrix());
    Ok(c.iter().fold(0.0, |m, z| m.max(z.norm())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub operator_name: String,
    /// ‖[T_a, Ô]‖_max < tolerance.
    pub is_cell_periodic: bool,
    pub commutator_norm: f64,
    /// Largest |⟨ψ_{nℓ}|Ô|ψ_{mℓ'}⟩| with ℓ ≠ ℓ'.
    pub max_offdiag_k: f64,
    pub tolerance: f64,
    /// is_cell_periodic ⇒ max_offdiag_k < tolerance.
    pub implication_holds: bool,
}

pub fn audit(op: &OperatorMatrix, basis: &BlochBasis) -> Result<AuditReport> {
    let op = op.in_basis(BasisTag::bloch(basis))?;
    let t = translation_operator(basis);
    let commutator = commutator_norm(&t, &op)?;
    let n_cells = basis.n_cells();
    let mut max_offdiag = 0.0f64;
    for ((i, j), z) in op.matrix().indexed_iter() {
        if i % n_cells != j % n_cells {
            max_offdiag = max_offdiag.max(z.norm());
        }
    }
    let is_cell_periodic = commutator < AUDIT_TOL;
    Ok(AuditReport {
        operator_name: op.name(),
        is_cell_periodic,
        commutator_norm: commutator,
        max_offdiag_k: max_offdiag,
        tolerance: AUDIT_TOL,
        implication_holds: !is_cell_periodic || max_offdiag < AUDIT_TOL,
    })
}
