//! Pure states, mixtures, and operators in Bloch, Wannier, or plane-wave
//! coordinates.
//!
//! Bloch and Wannier coordinates share the index layout `band·N + i`, where
//! `i` is the k-index or site index. Converting between them only needs the
//! discrete Fourier kernel, so it is done automatically whenever tags differ
//! but dimensions agree.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochBasis;
use crate::eigen::{diagonalize_hermitian, hermitian_asymmetry};
use crate::error::{Error, Result};
use crate::lattice::{bloch_phase, Mode};
use crate::wannier::kernel_entry;

pub const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const PROJECTOR_TOL: f64 = 1e-10;
const IMAG_ERROR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasisTag {
    Bloch { n_bands: usize, n_cells: usize },
    Wannier { n_bands: usize, n_cells: usize },
    PlaneWave { dim: usize },
}

impl BasisTag {
    pub fn dim(&self) -> usize {
        match *self {
            BasisTag::Bloch { n_bands, n_cells } | BasisTag::Wannier { n_bands, n_cells } => n_bands * n_cells,
            BasisTag::PlaneWave { dim } => dim,
        }
    }

    pub fn bloch(basis: &BlochBasis) -> Self {
        BasisTag::Bloch {
            n_bands: basis.n_bands(),
            n_cells: basis.n_cells(),
        }
    }

    pub fn wannier(basis: &BlochBasis) -> Self {
        BasisTag::Wannier {
            n_bands: basis.n_bands(),
            n_cells: basis.n_cells(),
        }
    }

    fn lattice_shape(&self) -> Option<(usize, usize)> {
        match *self {
            BasisTag::Bloch { n_bands, n_cells } | BasisTag::Wannier { n_bands, n_cells } => Some((n_bands, n_cells)),
            BasisTag::PlaneWave { .. } => None,
        }
    }
}

/// Matrix taking coordinates in `from` to coordinates in `to`, when both
/// are Bloch/Wannier tags of the same shape.
fn conversion(from: BasisTag, to: BasisTag) -> Result<Option<Array2<Complex64>>> {
    if from == to {
        return Ok(None);
    }
    let (Some(a), Some(b)) = (from.lattice_shape(), to.lattice_shape()) else {
        return Err(Error::BasisMismatch { left: from, right: to });
    };
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: to.dim(),
            got: from.dim(),
        });
    }
    let (n_bands, n_cells) = a;
    // Wannier amplitude ⟨W^n_R|s⟩ = Σ_ℓ conj(U_{Rℓ}) b_{nℓ}.
    let mut c = Array2::<Complex64>::zeros((n_bands * n_cells, n_bands * n_cells));
    for n in 0..n_bands {
        for r in 0..n_cells {
            for l in 0..n_cells {
                c[[n * n_cells + r, n * n_cells + l]] = kernel_entry(r, l, n_cells).conj();
            }
        }
    }
    Ok(Some(match from {
        BasisTag::Bloch { .. } => c,
        _ => c.t().mapv(|z| z.conj()),
    }))
}

fn dagger(m: &Array2<Complex64>) -> Array2<Complex64> {
    m.t().mapv(|z| z.conj())
}

fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    tag: BasisTag,
    amps: Array1<Complex64>,
    labels: Vec<String>,
}

impl StateVector {
    /// Fails unless `amps` has the tag's dimension and unit norm.
    pub fn new(tag: BasisTag, amps: Vec<Complex64>, labels: Vec<String>) -> Result<Self> {
        if amps.len() != tag.dim() {
            return Err(Error::DimensionMismatch {
                expected: tag.dim(),
                got: amps.len(),
            });
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            tag,
            amps: Array1::from(amps),
            labels,
        })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(tag: BasisTag, amps: Vec<Complex64>, labels: Vec<String>) -> Result<Self> {
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < NORM_TOL {
            return Err(Error::ZeroVector);
        }
        Self::new(tag, amps.into_iter().map(|z| z / norm).collect(), labels)
    }

    pub fn basis_vector(tag: BasisTag, index: usize, label: String) -> Result<Self> {
        if index >= tag.dim() {
            return Err(Error::DimensionMismatch {
                expected: tag.dim(),
                got: index + 1,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); tag.dim()];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(tag, amps, vec![label])
    }

    /// |ψ_{nℓ}⟩ in Bloch coordinates.
    pub fn bloch(basis: &BlochBasis, band: usize, k_index: usize) -> Result<Self> {
        basis.check_band(band)?;
        basis.check_k_index(k_index)?;
        Self::basis_vector(BasisTag::bloch(basis), basis.index(band, k_index), format!("psi[n={band},l={k_index}]"))
    }

    /// |W^n_R⟩ in Wannier coordinates.
    pub fn wannier(basis: &BlochBasis, band: usize, site: usize) -> Result<Self> {
        basis.check_band(band)?;
        if site >= basis.n_cells() {
            return Err(Error::OffGrid {
                position: site as f64 * basis.config().lattice_constant,
                lattice_constant: basis.config().lattice_constant,
                n_cells: basis.n_cells(),
            });
        }
        Self::basis_vector(BasisTag::wannier(basis), basis.index(band, site), format!("W[n={band},R={site}]"))
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn amps(&self) -> &Array1<Complex64> {
        &self.amps
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn in_basis(&self, tag: BasisTag) -> Result<Self> {
        Ok(match conversion(self.tag, tag)? {
            None => self.clone(),
            Some(c) => Self {
                tag,
                amps: c.dot(&self.amps),
                labels: self.labels.clone(),
            },
        })
    }

    pub fn to_wannier(&self) -> Result<Self> {
        match self.tag {
            BasisTag::Bloch { n_bands, n_cells } => self.in_basis(BasisTag::Wannier { n_bands, n_cells }),
            _ => self.in_basis(self.tag),
        }
    }

    pub fn to_bloch(&self) -> Result<Self> {
        match self.tag {
            BasisTag::Wannier { n_bands, n_cells } => self.in_basis(BasisTag::Bloch { n_bands, n_cells }),
            _ => self.in_basis(self.tag),
        }
    }

    /// Global phase multiplication.
    pub fn with_phase(&self, theta: f64) -> Self {
        let p = Complex64::from_polar(1.0, theta);
        Self {
            tag: self.tag,
            amps: self.amps.mapv(|z| z * p),
            labels: self.labels.clone(),
        }
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        let other = other.in_basis(self.tag)?;
        Ok(self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "basis_tag": self.tag,
            "labels": self.labels,
            "shape": [self.amps.len()],
            "data": flatten(self.amps.iter()),
        })
    }
}

fn flatten<'a>(values: impl Iterator<Item = &'a Complex64>) -> Vec<f64> {
    values.flat_map(|z| [z.re, z.im]).collect()
}

/// ψ_{nℓ} embedded in the plane-wave coordinates of `basis`.
pub fn to_plane_wave(state: &StateVector, basis: &BlochBasis) -> Result<StateVector> {
    if basis.mode() != Mode::PlaneWave {
        return Err(Error::RequiresPlaneWave);
    }
    let bloch = state.in_basis(BasisTag::bloch(basis))?;
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.ambient_dim()];
    for n in 0..basis.n_bands() {
        for l in 0..basis.n_cells() {
            let c = bloch.amps[basis.index(n, l)];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, z) in amps.iter_mut().zip(basis.ambient(n, l)) {
                *o += c * z;
            }
        }
    }
    StateVector::new(BasisTag::PlaneWave { dim: amps.len() }, amps, state.labels.clone())
}

/// Projects a plane-wave state onto the included bands. Fails if weight
/// outside the band span exceeds the norm tolerance.
pub fn from_plane_wave(state: &StateVector, basis: &BlochBasis) -> Result<StateVector> {
    if basis.mode() != Mode::PlaneWave {
        return Err(Error::RequiresPlaneWave);
    }
    if state.tag != (BasisTag::PlaneWave { dim: basis.ambient_dim() }) {
        return Err(Error::BasisMismatch {
            left: state.tag,
            right: BasisTag::PlaneWave { dim: basis.ambient_dim() },
        });
    }
    let amps: Vec<Complex64> = (0..basis.n_bands())
        .flat_map(|n| (0..basis.n_cells()).map(move |l| (n, l)))
        .map(|(n, l)| basis.ambient(n, l).iter().zip(state.amps.iter()).map(|(a, b)| a.conj() * b).sum())
        .collect();
    StateVector::new(BasisTag::bloch(basis), amps, state.labels.clone())
}

/// Normalized Σ c_i |s_i⟩.
pub fn superpose(states: &[StateVector], coeffs: &[Complex64]) -> Result<StateVector> {
    if states.is_empty() || states.len() != coeffs.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty state and coefficient lists, got {} and {}",
            states.len(),
            coeffs.len()
        )));
    }
    let tag = states[0].tag;
    if let Some(s) = states.iter().find(|s| s.tag != tag) {
        return Err(Error::BasisMismatch { left: tag, right: s.tag });
    }
    let mut amps = Array1::<Complex64>::zeros(tag.dim());
    for (s, c) in states.iter().zip(coeffs) {
        amps.scaled_add(*c, &s.amps);
    }
    let labels = states.iter().flat_map(|s| s.labels.iter().cloned()).collect();
    StateVector::normalized(tag, amps.to_vec(), labels)
}

/// (|s1⟩ + e^{iφ}|s2⟩)/√2.
pub fn phased_pair(first: &StateVector, second: &StateVector, phi: f64) -> Result<StateVector> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    superpose(
        &[first.clone(), second.clone()],
        &[Complex64::new(h, 0.0), Complex64::from_polar(h, phi)],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    tag: BasisTag,
    matrix: Array2<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace, and positivity.
    pub fn new(tag: BasisTag, matrix: Array2<Complex64>) -> Result<Self> {
        if matrix.dim() != (tag.dim(), tag.dim()) {
            return Err(Error::DimensionMismatch {
                expected: tag.dim(),
                got: matrix.nrows(),
            });
        }
        let asymmetry = hermitian_asymmetry(&matrix);
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        let trace: Complex64 = matrix.diag().sum();
        if (trace - 1.0).norm() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace {trace} is not 1")));
        }
        let min = diagonalize_hermitian(&matrix)?.values.first().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::InvalidArgument(format!("density matrix has negative eigenvalue {min}")));
        }
        Ok(Self { tag, matrix })
    }

    pub fn pure(state: &StateVector) -> Self {
        let a = &state.amps;
        let matrix = Array2::from_shape_fn((a.len(), a.len()), |(i, j)| a[i] * a[j].conj());
        Self { tag: state.tag, matrix }
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diag().sum()
    }

    pub fn in_basis(&self, tag: BasisTag) -> Result<Self> {
        Ok(match conversion(self.tag, tag)? {
            None => self.clone(),
            Some(c) => Self {
                tag,
                matrix: c.dot(&self.matrix).dot(&dagger(&c)),
            },
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_json(self.tag, &self.matrix, None)
    }
}

/// ρ = Σ w_i |s_i⟩⟨s_i|.
pub fn mixture(states: &[StateVector], weights: &[f64]) -> Result<DensityMatrix> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty state and weight lists, got {} and {}",
            states.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidWeights { sum });
    }
    let tag = states[0].tag;
    if let Some(s) = states.iter().find(|s| s.tag != tag) {
        return Err(Error::BasisMismatch { left: tag, right: s.tag });
    }
    let mut matrix = Array2::<Complex64>::zeros((tag.dim(), tag.dim()));
    for (s, &w) in states.iter().zip(weights) {
        matrix.scaled_add(Complex64::new(w, 0.0), DensityMatrix::pure(s).matrix());
    }
    DensityMatrix::new(tag, matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    WannierProjector { band: usize, site: usize },
    CellPeriodic,
    Translation,
    Custom { name: String },
}

impl Provenance {
    pub fn name(&self) -> String {
        match self {
            Provenance::WannierProjector { band, site } => format!("wannier_projector(n0={band},R0={site})"),
            Provenance::CellPeriodic => "cell_periodic_multiplier".into(),
            Provenance::Translation => "translation".into(),
            Provenance::Custom { name } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    tag: BasisTag,
    matrix: Array2<Complex64>,
    provenance: Provenance,
}

impl OperatorMatrix {
    /// Hermitian unless the provenance is translation (unitary). Projector
    /// provenance additionally requires idempotence and unit trace.
    pub fn new(tag: BasisTag, matrix: Array2<Complex64>, provenance: Provenance) -> Result<Self> {
        if matrix.dim() != (tag.dim(), tag.dim()) {
            return Err(Error::DimensionMismatch {
                expected: tag.dim(),
                got: matrix.nrows(),
            });
        }
        if provenance != Provenance::Translation {
            let asymmetry = hermitian_asymmetry(&matrix);
            if asymmetry > HERMITIAN_TOL * matrix.iter().fold(1.0f64, |m, z| m.max(z.norm())) {
                return Err(Error::NotHermitian { asymmetry });
            }
        }
        if let Provenance::WannierProjector { .. } = provenance {
            let dev = max_abs_diff(&matrix.dot(&matrix), &matrix);
            let trace: Complex64 = matrix.diag().sum();
            if dev > PROJECTOR_TOL || (trace - 1.0).norm() > PROJECTOR_TOL {
                return Err(Error::InvalidArgument(format!(
                    "projector check failed: |P² − P| = {dev:e}, trace = {trace}"
                )));
            }
        }
        Ok(Self { tag, matrix, provenance })
    }

    pub fn identity(tag: BasisTag) -> Self {
        Self {
            tag,
            matrix: Array2::eye(tag.dim()),
            provenance: Provenance::Custom { name: "identity".into() },
        }
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn name(&self) -> String {
        self.provenance.name()
    }

    pub fn in_basis(&self, tag: BasisTag) -> Result<Self> {
        Ok(match conversion(self.tag, tag)? {
            None => self.clone(),
            Some(c) => Self {
                tag,
                matrix: c.dot(&self.matrix).dot(&dagger(&c)),
                provenance: self.provenance.clone(),
            },
        })
    }

    pub fn idempotency_error(&self) -> f64 {
        max_abs_diff(&self.matrix.dot(&self.matrix), &self.matrix)
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_json(self.tag, &self.matrix, Some(&self.provenance))
    }
}

fn matrix_json(tag: BasisTag, m: &Array2<Complex64>, provenance: Option<&Provenance>) -> serde_json::Value {
    let mut v = serde_json::json!({
        "basis_tag": tag,
        "shape": [m.nrows(), m.ncols()],
        "data": flatten(m.iter()),
    });
    if let Some(p) = provenance {
        v["provenance"] = serde_json::to_value(p).expect("serializable");
    }
    v
}

/// Ô = |W^{n0}_{R0}⟩⟨W^{n0}_{R0}| in the Bloch basis: entries
/// (1/N)·e^{−iR0(k_ℓ − k_ℓ')} inside the n0 block, zero elsewhere.
pub fn wannier_projector(basis: &BlochBasis, band: usize, site: usize) -> Result<OperatorMatrix> {
    basis.check_band(band)?;
    let n_cells = basis.n_cells();
    if site >= n_cells {
        return Err(Error::OffGrid {
            position: site as f64 * basis.config().lattice_constant,
            lattice_constant: basis.config().lattice_constant,
            n_cells,
        });
    }
    let tag = BasisTag::bloch(basis);
    let mut m = Array2::<Complex64>::zeros((tag.dim(), tag.dim()));
    for l in 0..n_cells {
        for lp in 0..n_cells {
            let phase = bloch_phase(lp, site, n_cells) - bloch_phase(l, site, n_cells);
            m[[basis.index(band, l), basis.index(band, lp)]] = Complex64::from_polar(1.0 / n_cells as f64, phase);
        }
    }
    OperatorMatrix::new(tag, m, Provenance::WannierProjector { band, site })
}

/// Like [`wannier_projector`] but with R0 given as a position.
pub fn wannier_projector_at(basis: &BlochBasis, band: usize, position: f64) -> Result<OperatorMatrix> {
    let site = crate::lattice::make_rgrid(basis.config()).index_of(position)?;
    wannier_projector(basis, band, site)
}

/// |t⟩⟨t| for an arbitrary normalized target.
pub fn projector_onto(target: &StateVector, name: &str) -> OperatorMatrix {
    let a = &target.amps;
    OperatorMatrix {
        tag: target.tag,
        matrix: Array2::from_shape_fn((a.len(), a.len()), |(i, j)| a[i] * a[j].conj()),
        provenance: Provenance::Custom { name: name.into() },
    }
}

/// H = diag(E_n(k_ℓ)) in the Bloch basis.
pub fn hamiltonian(basis: &BlochBasis) -> OperatorMatrix {
    let tag = BasisTag::bloch(basis);
    let mut m = Array2::<Complex64>::zeros((tag.dim(), tag.dim()));
    for s in basis.states() {
        let i = basis.index(s.band, s.k_index);
        m[[i, i]] = Complex64::new(s.energy, 0.0);
    }
    OperatorMatrix {
        tag,
        matrix: m,
        provenance: Provenance::Custom { name: "hamiltonian".into() },
    }
}

/// ⟨bra|Ô|ket⟩, converting both states into the operator's basis.
pub fn matrix_element(op: &OperatorMatrix, bra: &StateVector, ket: &StateVector) -> Result<Complex64> {
    let bra = bra.in_basis(op.tag)?;
    let ket = ket.in_basis(op.tag)?;
    let o_ket = op.matrix.dot(&ket.amps);
    Ok(bra.amps.iter().zip(o_ket.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// Anything Born-rule probabilities and expectation values can be taken of.
pub trait QuantumState {
    fn basis_tag(&self) -> BasisTag;

    /// ⟨s|Ô|s⟩ or tr(ρÔ), without the reality check.
    fn raw_expectation(&self, op: &OperatorMatrix) -> Result<Complex64>;

    /// Populations ⟨W^n_R|ρ|W^n_R⟩ in Wannier index order.
    fn wannier_populations(&self) -> Result<Vec<f64>>;
}

impl QuantumState for StateVector {
    fn basis_tag(&self) -> BasisTag {
        self.tag
    }

    fn raw_expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        matrix_element(op, self, self)
    }

    fn wannier_populations(&self) -> Result<Vec<f64>> {
        Ok(self.to_wannier()?.amps.iter().map(|z| z.norm_sqr()).collect())
    }
}

impl QuantumState for DensityMatrix {
    fn basis_tag(&self) -> BasisTag {
        self.tag
    }

    fn raw_expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        let rho = self.in_basis(op.tag)?;
        Ok(rho.matrix.dot(&op.matrix).diag().sum())
    }

    fn wannier_populations(&self) -> Result<Vec<f64>> {
        let tag = match self.tag {
            BasisTag::Bloch { n_bands, n_cells } => BasisTag::Wannier { n_bands, n_cells },
            other => other,
        };
        Ok(self.in_basis(tag)?.matrix.diag().iter().map(|z| z.re).collect())
    }
}

/// Real expectation value; errors when the imaginary residue reaches 1e-10.
pub fn expectation<S: QuantumState + ?Sized>(op: &OperatorMatrix, state: &S) -> Result<f64> {
    let z = state.raw_expectation(op)?;
    if z.im.abs() >= IMAG_ERROR_TOL {
        return Err(Error::ImaginaryExpectation { residue: z.im.abs() });
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{solve_bands, tight_binding_basis};
    use crate::lattice::{make_kgrid, LatticeConfig};
    use crate::wannier::wannier;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn tb(n: usize) -> BlochBasis {
        tight_binding_basis(&LatticeConfig::tight_binding(n, 1.0).unwrap(), 1.0)
    }

    fn pw(n: usize) -> BlochBasis {
        solve_bands(&LatticeConfig::plane_wave(n, 1.0, 8.0, 3, 4).unwrap()).unwrap()
    }

    #[test]
    fn superpose_two_bloch_states() {
        let basis = pw(4);
        let a = StateVector::bloch(&basis, 0, 1).unwrap();
        let b = StateVector::bloch(&basis, 0, 3).unwrap();
        let s = phased_pair(&a, &b, 0.7).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!((s.amps()[1].norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s.amps()[3].norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        let single = superpose(&[a.clone()], &[Complex64::new(7.0, 0.0)]).unwrap();
        assert_eq!(single.amps(), a.amps());
        let neg = a.with_phase(PI);
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(superpose(&[a.clone(), neg], &[one, one]), Err(Error::ZeroVector)));
        let w = StateVector::wannier(&basis, 0, 0).unwrap();
        assert!(matches!(superpose(&[a, w], &[one, one]), Err(Error::BasisMismatch { .. })));
    }

    #[test]
    fn mixture_properties() {
        let basis = pw(4);
        let a = StateVector::bloch(&basis, 0, 1).unwrap();
        let b = StateVector::bloch(&basis, 2, 3).unwrap();
        let rho = mixture(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                let want = if i == j && (i == basis.index(0, 1) || i == basis.index(2, 3)) { 0.5 } else { 0.0 };
                assert_eq!(rho.matrix()[[i, j]], Complex64::new(want, 0.0));
            }
        }
        let pure = mixture(&[phased_pair(&a, &b, 1.0).unwrap()], &[1.0]).unwrap();
        let m = pure.matrix();
        assert!(max_abs_diff(&m.dot(m), m) < 1e-12);
        assert!((pure.trace() - 1.0).norm() < 1e-12);
        assert!(hermitian_asymmetry(m) < 1e-12);
        assert!(matches!(mixture(&[a.clone(), b.clone()], &[0.5, 0.6]), Err(Error::InvalidWeights { .. })));
        assert!(mixture(&[a, b], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn projector_at_origin_is_uniform() {
        let basis = pw(6);
        let p = wannier_projector(&basis, 1, 0).unwrap();
        for l in 0..6 {
            for lp in 0..6 {
                assert!((p.matrix()[[basis.index(1, l), basis.index(1, lp)]] - 1.0 / 6.0).norm() < 1e-15);
            }
        }
        assert!(p.idempotency_error() < 1e-10);
        assert!(wannier_projector(&basis, 0, 6).is_err());
        assert!(wannier_projector_at(&basis, 0, 0.5).is_err());
    }

    #[test]
    fn projector_entry_matches_outer_product_oracle() {
        // Oracle: explicit |W⟩ from the Wannier sum, outer product by hand.
        let basis = tb(8);
        let w = wannier(&basis, 0, 1).unwrap();
        let oracle = w.coeffs_bloch[1] * w.coeffs_bloch[0].conj();
        let p = wannier_projector(&basis, 0, 1).unwrap();
        let entry = p.matrix()[[1, 0]];
        assert!((entry - oracle).norm() < 1e-15);
        assert!((entry - Complex64::from_polar(1.0 / 8.0, -PI / 4.0)).norm() < 1e-15);
    }

    #[test]
    fn projector_matrix_elements() {
        let basis = pw(8);
        let k = make_kgrid(basis.config());
        let (n0, r0) = (1, 3);
        let p = wannier_projector(&basis, n0, r0).unwrap();
        let r = r0 as f64;
        for l in 0..8 {
            for lp in 0..8 {
                let bra = StateVector::bloch(&basis, n0, l).unwrap();
                let ket = StateVector::bloch(&basis, n0, lp).unwrap();
                let z = matrix_element(&p, &bra, &ket).unwrap();
                let want = Complex64::from_polar(1.0 / 8.0, -r * (k.get(l) - k.get(lp)));
                assert!((z - want).norm() < 1e-12);
                let other = StateVector::bloch(&basis, 0, lp).unwrap();
                assert!(matrix_element(&p, &bra, &other).unwrap().norm() < 1e-12);
            }
        }
        let w = StateVector::wannier(&basis, n0, r0).unwrap();
        assert!((matrix_element(&p, &w, &w).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn interference_expectation() {
        let basis = pw(8);
        let k = make_kgrid(basis.config());
        let (l1, l2) = (1, 4);
        let a = StateVector::bloch(&basis, 0, l1).unwrap();
        let b = StateVector::bloch(&basis, 0, l2).unwrap();
        let rho = mixture(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        for phi in [0.0, 0.4, PI / 3.0, 2.5] {
            let psi = phased_pair(&a, &b, phi).unwrap();
            for r0 in 0..8 {
                let p = wannier_projector(&basis, 0, r0).unwrap();
                // Oracle: explicit vector-matrix-vector product.
                let v = psi.amps();
                let oracle: Complex64 = (0..v.len())
                    .flat_map(|i| (0..v.len()).map(move |j| (i, j)))
                    .map(|(i, j)| v[i].conj() * p.matrix()[[i, j]] * v[j])
                    .sum();
                let e = expectation(&p, &psi).unwrap();
                let closed = (1.0 + ((k.get(l2) - k.get(l1)) * r0 as f64 + phi).cos()) / 8.0;
                assert!((e - oracle.re).abs() < 1e-12);
                assert!((e - closed).abs() < 1e-12);
                let em = expectation(&p, &rho).unwrap();
                assert!((em - 1.0 / 8.0).abs() < 1e-12);
                assert!((e - em - ((k.get(l2) - k.get(l1)) * r0 as f64 + phi).cos() / 8.0).abs() < 1e-10);
            }
        }
        let id = OperatorMatrix::identity(BasisTag::bloch(&basis));
        assert!((expectation(&id, &phased_pair(&a, &b, 1.0).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_round_trip_and_global_phase() {
        let basis = pw(6);
        let amps: Vec<Complex64> = (0..basis.dim()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let s = StateVector::normalized(BasisTag::bloch(&basis), amps, vec![]).unwrap();
        let back = s.to_wannier().unwrap().to_bloch().unwrap();
        for (x, y) in s.amps().iter().zip(back.amps()) {
            assert!((x - y).norm() < 1e-12);
        }
        let p = wannier_projector(&basis, 2, 4).unwrap();
        let e = expectation(&p, &s).unwrap();
        assert!((expectation(&p, &s.with_phase(1.234)).unwrap() - e).abs() < 1e-12);
        let pw_state = to_plane_wave(&s, &basis).unwrap();
        let back = from_plane_wave(&pw_state, &basis).unwrap();
        for (x, y) in s.amps().iter().zip(back.amps()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn relative_phase_moves_the_peak() {
        let basis = tb(8);
        let a = StateVector::bloch(&basis, 0, 0).unwrap();
        let b = StateVector::bloch(&basis, 0, 1).unwrap();
        let argmax = |phi: f64| {
            let psi = phased_pair(&a, &b, phi).unwrap();
            (0..8)
                .map(|r| expectation(&wannier_projector(&basis, 0, r).unwrap(), &psi).unwrap())
                .enumerate()
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap()
                .0
        };
        // peak where Δk·R + φ ≡ 0, Δk = π/4
        assert_eq!(argmax(0.0), 0);
        assert_eq!(argmax(-PI / 2.0), 2);
        assert_eq!(argmax(PI), 4);
    }

    #[test]
    fn operator_conversion_and_json() {
        let basis = tb(4);
        let p = wannier_projector(&basis, 0, 2).unwrap();
        let pw_ = p.in_basis(BasisTag::wannier(&basis)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == 2 && j == 2 { 1.0 } else { 0.0 };
                assert!((pw_.matrix()[[i, j]] - want).norm() < 1e-12);
            }
        }
        let json = p.to_json();
        assert_eq!(json["shape"], serde_json::json!([4, 4]));
        assert_eq!(json["data"].as_array().unwrap().len(), 32);
        assert_eq!(json["basis_tag"]["kind"], "bloch");
        assert_eq!(json["provenance"]["kind"], "wannier_projector");
        let dim_mismatch = StateVector::bloch(&tb(5), 0, 0).unwrap();
        assert!(matches!(matrix_element(&p, &dim_mismatch, &dim_mismatch), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn expectation_rejects_imaginary_residue() {
        let tag = BasisTag::PlaneWave { dim: 2 };
        let m = ndarray::arr2(&[[Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)], [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)]]);
        assert!(OperatorMatrix::new(tag, m.clone(), Provenance::Custom { name: "x".into() }).is_err());
        let op = OperatorMatrix { tag, matrix: m, provenance: Provenance::Custom { name: "x".into() } };
        let s = StateVector::normalized(tag, vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)], vec![]).unwrap();
        assert!(matches!(expectation(&op, &s), Err(Error::ImaginaryExpectation { .. })));
    }
}
