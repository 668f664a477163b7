use super::{axpy, dot, norm, LinOp, SolveStats};
use crate::error::{Error, Result};

/// Preconditioned conjugate gradients for a symmetric positive definite operator.
///
/// Stops once the true residual satisfies `‖b - Ax‖ ≤ tol‖b‖`.
pub(crate) fn pcg(
    a: &LinOp<'_>,
    precond: &LinOp<'_>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; b.len()],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; b.len()]);
    let mut r: Vec<f64> = if x0.is_some() {
        let ax = a(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    } else {
        b.to_vec()
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut it = 0;
    loop {
        let rel = norm(&r) / b_norm;
        if rel <= tol {
            // Guard against drift between recursive and true residual.
            let ax = a(&x);
            let true_r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let true_rel = norm(&true_r) / b_norm;
            if true_rel <= tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        relative_residual: true_rel,
                    },
                ));
            }
            r = true_r;
            z = precond(&r);
            p = z.clone();
            rz = dot(&r, &z);
        }
        if it >= max_iter {
            return Err(Error::NonConvergence {
                what: "preconditioned conjugate gradient",
                iterations: it,
                residual: rel,
            });
        }
        let ap = a(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Inconsistency(format!(
                "operator not positive definite in CG (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        it += 1;
    }
}
