//! Solves for shifted Laplacian systems `(αL + βI) x = b`.
//!
//! The ADMM penalty changes every iteration, so instead of refactorizing a
//! Cholesky factor per value of `β` the dense path caches one symmetric
//! eigendecomposition `L = QΛQᵀ` and applies `Q (αΛ + βI)⁻¹ Qᵀ` for any
//! shift. Large Laplacians fall back to Jacobi-preconditioned CG.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::SparseLaplacian;

/// Laplacians up to this size get the cached eigendecomposition.
pub const DEFAULT_DENSE_LIMIT: usize = 256;

const CG_RTOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub enum ShiftedSolver {
    /// `L = 0`, the system is diagonal.
    Identity { n: usize },
    Spectral { q: DMatrix<f64>, eigenvalues: DVector<f64> },
    Iterative { l: SparseLaplacian },
}

impl ShiftedSolver {
    pub fn new(l: &SparseLaplacian, dense_limit: usize) -> Self {
        if l.is_zero() {
            ShiftedSolver::Identity { n: l.n() }
        } else if l.n() <= dense_limit {
            let eig = SymmetricEigen::new(l.to_dense());
            ShiftedSolver::Spectral {
                q: eig.eigenvectors,
                eigenvalues: eig.eigenvalues,
            }
        } else {
            ShiftedSolver::Iterative { l: l.clone() }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ShiftedSolver::Identity { n } => *n,
            ShiftedSolver::Spectral { q, .. } => q.nrows(),
            ShiftedSolver::Iterative { l } => l.n(),
        }
    }

    /// Solves `(αL + βI) X = B` column by column. `warm` seeds the
    /// iterative path.
    pub fn solve(&self, alpha: f64, beta: f64, rhs: &DMatrix<f64>, warm: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.n() {
            return Err(Error::arg(format!(
                "rhs has {} rows, system is {}x{}",
                rhs.nrows(),
                self.n(),
                self.n()
            )));
        }
        if !(beta > 0.0) || alpha < 0.0 {
            return Err(Error::Numeric(format!(
                "shifted Laplacian system with alpha={alpha}, beta={beta} is not positive definite"
            )));
        }
        match self {
            ShiftedSolver::Identity { .. } => Ok(rhs / beta),
            ShiftedSolver::Spectral { q, eigenvalues } => {
                let mut proj = q.transpose() * rhs;
                for (r, &lam) in eigenvalues.iter().enumerate() {
                    let s = 1.0 / (alpha * lam.max(0.0) + beta);
                    proj.row_mut(r).scale_mut(s);
                }
                Ok(q * proj)
            }
            ShiftedSolver::Iterative { l } => {
                let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
                for c in 0..rhs.ncols() {
                    let b: Vec<f64> = rhs.column(c).iter().copied().collect();
                    let x0 = warm.map(|w| w.column(c).iter().copied().collect::<Vec<_>>());
                    let x = pcg(l, alpha, beta, &b, x0)?;
                    out.column_mut(c).copy_from_slice(&x);
                }
                Ok(out)
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for `(αL + βI) x = b`.
pub fn pcg(l: &SparseLaplacian, alpha: f64, beta: f64, b: &[f64], x0: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let n = l.n();
    if b.len() != n {
        return Err(Error::arg("pcg: rhs length mismatch"));
    }
    if !(beta > 0.0) || alpha < 0.0 {
        return Err(Error::Numeric(format!(
            "shifted Laplacian system with alpha={alpha}, beta={beta} is not positive definite"
        )));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = (0..n).map(|p| 1.0 / (alpha * l.diag(p) + beta)).collect();
    let mut x = x0.filter(|v| v.len() == n).unwrap_or_else(|| vec![0.0; n]);
    let mut ax = vec![0.0; n];
    l.shifted_matvec(alpha, beta, &x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..(10 * n).max(100) {
        if dot(&r, &r).sqrt() <= CG_RTOL * bnorm {
            return Ok(x);
        }
        l.shifted_matvec(alpha, beta, &p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let ratio = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= 1e-8 * bnorm {
        Ok(x)
    } else {
        Err(Error::Numeric("conjugate gradients did not converge".into()))
    }
}
