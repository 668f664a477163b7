//! Matrix-free solvers on plain `f64` slices with the Euclidean inner product.
//!
//! The `L²` quadrature inner product is `h²` times the Euclidean one, so
//! symmetry, definiteness and orthogonality carry over unchanged.

mod expm;
mod lobpcg;
mod minres;
mod pcg;

pub(crate) use expm::lanczos_expm;
pub(crate) use lobpcg::{lobpcg, EigenProblem};
pub(crate) use minres::minres_run;
pub(crate) use pcg::pcg;

use nalgebra::{DMatrix, SymmetricEigen};

pub(crate) type LinOp<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

#[derive(Clone, Debug)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct SolveStats {
    pub iterations: usize,
    /// Final true residual relative to the right-hand side.
    pub relative_residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s·x`
pub(crate) fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Ascending eigenpairs of a dense symmetric matrix; eigenvectors as columns.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Dense matrix of a linear operator, assembled column by column.
pub(crate) fn assemble_dense(dim: usize, op: &LinOp<'_>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        let col = op(&e);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
        e[j] = 0.0;
    }
    // Symmetrize away FFT round-off.
    let t = m.transpose();
    (m + t) * 0.5
}
