use super::{axpy, dot, norm, LinOp, SolveStats};
use crate::error::{Error, Result};

/// Preconditioned MINRES for a symmetric (possibly indefinite) operator with
/// a symmetric positive definite preconditioner. Hands back the last iterate
/// when the tolerance is not met, together with a convergence flag. Nearly singular systems, as met in
/// Newton steps, still yield a useful least-residual direction.
pub(crate) fn minres_run(
    a: &LinOp<'_>,
    precond: &LinOp<'_>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats, bool)> {
    let dim = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; dim];
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
            true,
        ));
    }
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return Err(Error::Inconsistency("MINRES preconditioner is not positive definite".into()));
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; dim];
    let mut w2 = vec![0.0; dim];
    let mut it = 0;
    let check_true = |x: &[f64]| -> f64 {
        let ax = a(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        norm(&r) / b_norm
    };
    while it < max_iter {
        it += 1;
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        y = a(&v);
        if it >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = dot(&v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y);
        y = precond(&r2);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            return Err(Error::Inconsistency("MINRES preconditioner is not positive definite".into()));
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((vi, w1i), w2i)| (vi - oldeps * w1i - delta * w2i) * denom)
            .collect();
        axpy(&mut x, phi, &w);
        if phibar <= tol * beta1 || beta == 0.0 {
            let rel = check_true(&x);
            if rel <= tol * 10.0 || beta == 0.0 {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        relative_residual: rel,
                    },
                    true,
                ));
            }
        }
    }
    let rel = check_true(&x);
    Ok((
        x,
        SolveStats {
            iterations: it,
            relative_residual: rel,
        },
        false,
    ))
}
