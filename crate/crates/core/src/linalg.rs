//! Dense complex linear algebra: ranks, kernels, minimum-norm solves, and the
//! spectral split of operators that are self-adjoint for a Gram inner product.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::forms::{C64, ZERO};

/// Relative singular-value / eigenvalue threshold separating the numerical kernel.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Spectral gaps below this relative size are reported as near-degenerate.
pub const GAP_WARNING: f64 = 1e-7;

pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel · σ_max`; the zero matrix has rank 0.
pub fn rank(m: &DMatrix<C64>, rel: f64) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel * top).count()
}

/// Euclidean-orthonormal basis of the numerical kernel, one column per vector.
pub fn nullspace(m: &DMatrix<C64>, rel: f64) -> DMatrix<C64> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to a square matrix so the SVD returns the full right factor.
    let rows = m.nrows().max(cols);
    let mut sq = DMatrix::zeros(rows, cols);
    sq.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = SVD::new(sq, false, true);
    let vt = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top == 0.0 || svd.singular_values[i] <= rel * top)
        .collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        for c in 0..cols {
            out[(c, k)] = vt[(i, c)].conj();
        }
    }
    out
}

/// Moore–Penrose pseudoinverse with relative cutoff.
pub fn pinv(m: &DMatrix<C64>, rel: f64) -> DMatrix<C64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = SVD::new(m.clone(), true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if top == 0.0 || s <= rel * top {
            continue;
        }
        let v = vt.row(i).adjoint();
        let uh = u.column(i).adjoint();
        out += (v * uh) / C64::new(s, 0.0);
    }
    out
}

/// Euclidean minimum-norm least-squares solution of `A x = b`.
pub fn lstsq_min_norm(a: &DMatrix<C64>, b: &DVector<C64>) -> DVector<C64> {
    pinv(a, RANK_CUTOFF) * b
}

/// Distance from `b` to the column space of `a`.
pub fn distance_to_image(a: &DMatrix<C64>, b: &DVector<C64>) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return b.norm();
    }
    (a * lstsq_min_norm(a, b) - b).norm()
}

/// `(A + A^H)/2`.
pub fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Inverse of a Hermitian positive definite Gram matrix via Cholesky.
pub fn gram_inverse(g: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if g.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = Cholesky::new(hermitian_part(g)).ok_or_else(|| Error::Contract("Gram matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Spectral data of an operator `A` with `G A = A^H G` for a positive Gram `G`.
#[derive(Clone, Debug)]
pub struct GramSpectral {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Absolute threshold below which eigenvalues count as kernel.
    pub cutoff: f64,
    /// Smallest eigenvalue above the cutoff divided by the largest (1 when none).
    pub relative_gap: f64,
    /// Moore–Penrose inverse for the Gram inner product: zero on the kernel.
    pub green: DMatrix<C64>,
    /// Gram-orthogonal projector onto the kernel.
    pub projector: DMatrix<C64>,
}

impl GramSpectral {
    pub fn new(a: &DMatrix<C64>, gram: &DMatrix<C64>, rel: f64) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Ok(Self {
                eigenvalues: Vec::new(),
                kernel_dim: 0,
                cutoff: 0.0,
                relative_gap: 1.0,
                green: DMatrix::zeros(0, 0),
                projector: DMatrix::zeros(0, 0),
            });
        }
        let chol = Cholesky::new(hermitian_part(gram))
            .ok_or_else(|| Error::Contract("Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::Contract("singular Cholesky factor".into()))?;
        let l_inv_h = l_inv.adjoint();
        let l_h = l.adjoint();
        let tilde = hermitian_part(&(&l_h * a * &l_inv_h));
        let eig = SymmetricEigen::new(tilde);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let top = eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let cutoff = rel * top;
        let mut green_t = DMatrix::<C64>::zeros(d, d);
        let mut proj_t = DMatrix::<C64>::zeros(d, d);
        let mut kernel_dim = 0;
        let mut smallest = f64::INFINITY;
        for &i in &order {
            let lam = eig.eigenvalues[i];
            let v = eig.eigenvectors.column(i);
            let outer = &v * v.adjoint();
            if top == 0.0 || lam.abs() <= cutoff {
                kernel_dim += 1;
                proj_t += outer;
            } else {
                smallest = smallest.min(lam.abs());
                green_t += outer / C64::new(lam, 0.0);
            }
        }
        let relative_gap = if smallest.is_finite() && top > 0.0 { smallest / top } else { 1.0 };
        if relative_gap < GAP_WARNING {
            log::warn!("near-degenerate spectrum: relative gap {relative_gap:.3e} (cutoff {rel:.1e})");
        }
        Ok(Self {
            eigenvalues,
            kernel_dim,
            cutoff,
            relative_gap,
            green: &l_inv_h * green_t * &l_h,
            projector: &l_inv_h * proj_t * &l_h,
        })
    }

    pub fn apply_green(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.green * v
    }

    pub fn apply_projector(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.projector * v
    }
}

/// `v^H G u`.
pub fn gram_inner(g: &DMatrix<C64>, u: &DVector<C64>, v: &DVector<C64>) -> C64 {
    if u.is_empty() {
        return ZERO;
    }
    (v.adjoint() * g * u)[(0, 0)]
}
