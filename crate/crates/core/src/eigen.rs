//! Dense Hermitian eigensolver based on cyclic complex Jacobi rotations.
//!
//! Each rotation first removes the phase of the pivot a_pq with a diagonal
//! unitary and then applies the classical real rotation, so the combined
//! 2×2 transform is
//!
//! ```text
//!     G = [[ c,            s           ],
//!          [ -s·e^{-iα},   c·e^{-iα}   ]]      a_pq = |a_pq|·e^{iα}
//! ```
//!
//! and A ← G†·A·G zeroes the (p, q) pair exactly.

use std::cmp::Ordering;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const HERMITIAN_TOL: f64 = 1e-12;
/// Relative gap below which two eigenvalues are treated as degenerate when
/// ordering eigenvectors.
const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column i is the eigenvector for `values[i]`.
    pub vectors: Array2<Complex64>,
}

/// max |H − H†| over all entries.
pub fn hermitian_asymmetry(h: &Array2<Complex64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[[i, j]] - h[[j, i]].conj()).norm());
        }
    }
    worst
}

fn max_abs(h: &Array2<Complex64>) -> f64 {
    h.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn off_norm(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]].norm_sqr();
            }
        }
    }
    s.sqrt()
}

pub fn diagonalize_hermitian(h: &Array2<Complex64>) -> Result<Eigen> {
    let (rows, cols) = h.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let asymmetry = hermitian_asymmetry(h);
    if asymmetry > HERMITIAN_TOL * max_abs(h).max(1.0) {
        return Err(Error::NotHermitian { asymmetry });
    }
    let n = rows;
    let mut a = h.clone();
    // Symmetrize so rounding in the input cannot bias the rotations.
    for i in 0..n {
        a[[i, i]] = Complex64::new(a[[i, i]].re, 0.0);
        for j in i + 1..n {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]].conj());
            a[[i, j]] = avg;
            a[[j, i]] = avg.conj();
        }
    }
    let mut v = Array2::<Complex64>::eye(n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let mut sweep = 0;
    loop {
        let off = off_norm(&a);
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: sweep, off });
        }
        sweep += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q, sweep);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let tol = DEGENERACY_TOL * scale.max(1.0);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] - values[order[start]] <= tol {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&i, &j| tie_break(&v, i, j));
        }
        start = end;
    }

    let mut vectors = Array2::<Complex64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(Eigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
    })
}

fn rotate(a: &mut Array2<Complex64>, v: &mut Array2<Complex64>, p: usize, q: usize, sweep: usize) {
    let apq = a[[p, q]];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[[p, p]].re;
    let aqq = a[[q, q]].re;
    // Negligible pivot relative to both diagonals: drop it.
    if sweep > 4 && r * 1e18 < app.abs() && r * 1e18 < aqq.abs() {
        a[[p, q]] = Complex64::new(0.0, 0.0);
        a[[q, p]] = Complex64::new(0.0, 0.0);
        return;
    }
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let phase = Complex64::from_polar(1.0, -apq.arg());
    // G columns: g_p = (c, -s e^{-iα}), g_q = (s, c e^{-iα}).
    let gpp = Complex64::new(c, 0.0);
    let gqp = -s * phase;
    let gpq = Complex64::new(s, 0.0);
    let gqq = c * phase;

    let n = a.nrows();
    // A ← A·G
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = akp * gpp + akq * gqp;
        a[[k, q]] = akp * gpq + akq * gqq;
    }
    // A ← G†·A
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = gpp.conj() * apk + gqp.conj() * aqk;
        a[[q, k]] = gpq.conj() * apk + gqq.conj() * aqk;
    }
    a[[p, q]] = Complex64::new(0.0, 0.0);
    a[[q, p]] = Complex64::new(0.0, 0.0);
    a[[p, p]] = Complex64::new(a[[p, p]].re, 0.0);
    a[[q, q]] = Complex64::new(a[[q, q]].re, 0.0);
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = vkp * gpp + vkq * gqp;
        v[[k, q]] = vkp * gpq + vkq * gqq;
    }
}

/// Degenerate eigenvectors: descending |first nonzero component|, then by
/// the position of that component.
fn tie_break(v: &Array2<Complex64>, i: usize, j: usize) -> Ordering {
    let lead = |col: usize| {
        let c = v.column(col);
        let idx = c.iter().position(|z| z.norm() > 1e-12).unwrap_or(c.len());
        (idx, c.get(idx).map_or(0.0, |z| z.norm()))
    };
    let (ii, mi) = lead(i);
    let (ij, mj) = lead(j);
    mj.partial_cmp(&mi).unwrap_or(Ordering::Equal).then(ii.cmp(&ij))
}
