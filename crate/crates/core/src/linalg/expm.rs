use nalgebra::DMatrix;

use super::{axpy, dot, norm, sorted_symmetric_eigen, LinOp};
use crate::error::{Error, Result};

const MAX_KRYLOV_DIM: usize = 160;

/// `exp(-t A) u` for symmetric positive semi-definite `A` by Lanczos with full
/// reorthogonalization. Halves `t` and composes when the Krylov space runs out.
pub(crate) fn lanczos_expm(a: &LinOp<'_>, t: f64, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    match lanczos_expm_once(a, t, u, tol)? {
        Some(v) => Ok(v),
        None => {
            if t < 1e-14 {
                return Err(Error::NonConvergence {
                    what: "Lanczos matrix exponential",
                    iterations: MAX_KRYLOV_DIM,
                    residual: f64::NAN,
                });
            }
            let half = lanczos_expm(a, 0.5 * t, u, tol)?;
            lanczos_expm(a, 0.5 * t, &half, tol)
        }
    }
}

fn lanczos_expm_once(a: &LinOp<'_>, t: f64, u: &[f64], tol: f64) -> Result<Option<Vec<f64>>> {
    let dim = u.len();
    let beta0 = norm(u);
    if beta0 == 0.0 {
        return Ok(Some(vec![0.0; dim]));
    }
    let max_m = MAX_KRYLOV_DIM.min(dim);
    let mut basis: Vec<Vec<f64>> = vec![u.iter().map(|v| v / beta0).collect()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    loop {
        let m = basis.len();
        let mut w = a(&basis[m - 1]);
        let alpha = dot(&w, &basis[m - 1]);
        alphas.push(alpha);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(&mut w, -c, q);
            }
        }
        let beta = norm(&w);
        let exhausted = beta <= 1e-13 * alpha.abs().max(1.0) || m == dim;

        if m % 4 == 0 || exhausted || m == max_m {
            let coeffs = small_expm_first_column(&alphas, &betas, t);
            let converged = match &previous {
                Some(prev) => {
                    let diff: f64 = coeffs
                        .iter()
                        .zip(prev.iter().chain(std::iter::repeat(&0.0)))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    diff <= tol * norm(&coeffs).max(f64::MIN_POSITIVE)
                }
                None => false,
            };
            if converged || exhausted {
                let mut out = vec![0.0; dim];
                for (c, q) in coeffs.iter().zip(&basis) {
                    axpy(&mut out, beta0 * c, q);
                }
                return Ok(Some(out));
            }
            if m == max_m {
                return Ok(None);
            }
            previous = Some(coeffs);
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
}

/// First column of `exp(-t T)` for the tridiagonal `T`.
fn small_expm_first_column(alphas: &[f64], betas: &[f64], t: f64) -> Vec<f64> {
    let m = alphas.len();
    let tri = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let (vals, vecs) = sorted_symmetric_eigen(tri);
    (0..m)
        .map(|i| {
            (0..m)
                .map(|k| vecs[(i, k)] * (-t * vals[k]).exp() * vecs[(0, k)])
                .sum()
        })
        .collect()
}
