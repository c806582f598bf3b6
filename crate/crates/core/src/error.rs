use thiserror::Error;

use crate::state::BasisTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("operation requires plane_wave mode")]
    RequiresPlaneWave,

    #[error("matrix is not Hermitian (max |H - H^dagger| = {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("cannot fix gauge for band {band} at k-index {k_index}: value and derivative vanish at x0")]
    GaugeUndetermined { band: usize, k_index: usize },

    #[error("band index {band} out of range (n_bands = {n_bands})")]
    BandOutOfRange { band: usize, n_bands: usize },

    #[error("k-index {k_index} out of range (N = {n_cells})")]
    KIndexOutOfRange { k_index: usize, n_cells: usize },

    #[error("position {position} is not a lattice site (a = {lattice_constant}, N = {n_cells})")]
    OffGrid {
        position: f64,
        lattice_constant: f64,
        n_cells: usize,
    },

    #[error("basis mismatch: {left:?} vs {right:?}")]
    BasisMismatch { left: BasisTag, right: BasisTag },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("superposition vanishes after summation")]
    ZeroVector,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("mixture weights must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidWeights { sum: f64 },

    #[error("expectation value has imaginary residue {residue:e}")]
    ImaginaryExpectation { residue: f64 },

    #[error("harmonic set is not Hermitian at j = {j}")]
    NonHermitianHarmonics { j: i64 },

    #[error("delta_k = {delta_k} is not a nonzero multiple of 2pi/(N a) on the ring")]
    NoFringe { delta_k: f64 },

    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
