//! Block locally optimal preconditioned conjugate gradient (LOBPCG) for the
//! lowest eigenpairs of a symmetric pencil `A x = θ B x`, with optional
//! Euclidean orthogonality constraints.
//!
//! Every Rayleigh-Ritz step re-orthonormalizes the trial basis `[X, W, P]`
//! in the `B` inner product and drops nearly dependent directions, which
//! keeps the iteration stable down to small residuals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{axpy, dot, norm, sorted_symmetric_eigen, LinOp};
use crate::error::{Error, Result};

pub(crate) struct EigenProblem<'a> {
    pub dim: usize,
    pub a: &'a LinOp<'a>,
    /// `None` means the identity.
    pub b: Option<&'a LinOp<'a>>,
    pub precond: &'a LinOp<'a>,
    /// Euclidean-orthonormal vectors the eigenvectors must be orthogonal to.
    pub constraints: &'a [Vec<f64>],
}

impl EigenProblem<'_> {
    fn apply_b(&self, x: &[f64]) -> Vec<f64> {
        match self.b {
            Some(b) => b(x),
            None => x.to_vec(),
        }
    }

    fn project(&self, x: &mut [f64]) {
        for _ in 0..2 {
            for c in self.constraints {
                let s = dot(c, x);
                axpy(x, -s, c);
            }
        }
    }
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct LobpcgOutput {
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Lowest `nev` eigenpairs. `block` (≥ `nev`) extra vectors speed up
/// convergence and resolve multiplicities up to the block size.
pub(crate) fn lobpcg(
    problem: &EigenProblem<'_>,
    nev: usize,
    block: usize,
    tol: f64,
    max_iter: usize,
) -> Result<LobpcgOutput> {
    let dim = problem.dim;
    let free = dim.saturating_sub(problem.constraints.len());
    if nev == 0 || nev > free {
        return Err(Error::Domain(format!(
            "cannot compute {nev} eigenpairs in a space of dimension {free}"
        )));
    }
    let block = block.max(nev).min(free);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_10b9);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            problem.project(&mut v);
            v
        })
        .collect();
    let mut p: Vec<Vec<f64>> = Vec::new();

    let (mut values, mut vecs, mut spread) = rayleigh_ritz(problem, &x, block)?;
    x = vecs.drain(..).map(|r| r.x).collect();
    // Residuals are measured against the largest Ritz value seen, which
    // keeps the test meaningful for eigenvalues at or near zero.
    let mut a_scale = spread;

    let mut residuals = vec![f64::INFINITY; block];
    for it in 0..=max_iter {
        let ax: Vec<Vec<f64>> = x.iter().map(|v| (problem.a)(v)).collect();
        let bx: Vec<Vec<f64>> = x.iter().map(|v| problem.apply_b(v)).collect();
        let mut w = Vec::with_capacity(block);
        for i in 0..block {
            let mut r = ax[i].clone();
            axpy(&mut r, -values[i], &bx[i]);
            // Constrained stationarity only asks the residual to vanish on
            // the complement of the constraints.
            problem.project(&mut r);
            let scale = (norm(&ax[i]) + values[i].abs() * norm(&bx[i])).max(a_scale * norm(&bx[i]));
            residuals[i] = norm(&r) / scale.max(f64::MIN_POSITIVE);
            if residuals[i] > tol * 0.1 {
                let mut t = (problem.precond)(&r);
                problem.project(&mut t);
                w.push(t);
            }
        }
        if residuals[..nev].iter().all(|&r| r <= tol) {
            return Ok(LobpcgOutput {
                values: values[..nev].to_vec(),
                vectors: x[..nev].to_vec(),
                residuals: residuals[..nev].to_vec(),
                iterations: it,
            });
        }
        if it == max_iter {
            break;
        }
        let mut basis = x.clone();
        let n_x = basis.len();
        basis.extend(w);
        basis.extend(p.iter().cloned());
        let (new_values, ritz, new_spread) = rayleigh_ritz_with_split(problem, &basis, block, n_x)?;
        values = new_values;
        spread = new_spread;
        a_scale = a_scale.max(spread);
        x = Vec::with_capacity(block);
        p = Vec::with_capacity(block);
        for r in ritz {
            x.push(r.x);
            if let Some(d) = r.direction {
                p.push(d);
            }
        }
    }
    let worst = residuals[..nev].iter().copied().fold(0.0, f64::max);
    Err(Error::NonConvergence {
        what: "LOBPCG eigensolver",
        iterations: max_iter,
        residual: worst,
    })
}

struct RitzVector {
    x: Vec<f64>,
    /// Component outside the current iterate block (the next search direction).
    direction: Option<Vec<f64>>,
}

fn rayleigh_ritz(
    problem: &EigenProblem<'_>,
    basis: &[Vec<f64>],
    keep: usize,
) -> Result<(Vec<f64>, Vec<RitzVector>, f64)> {
    rayleigh_ritz_with_split(problem, basis, keep, basis.len())
}

/// Rayleigh-Ritz on `span(basis)`. Columns with original index `< n_x` come
/// from the current iterate; the rest feed the next search direction.
fn rayleigh_ritz_with_split(
    problem: &EigenProblem<'_>,
    basis: &[Vec<f64>],
    keep: usize,
    n_x: usize,
) -> Result<(Vec<f64>, Vec<RitzVector>, f64)> {
    let (q, origin) = b_orthonormalize(problem, basis);
    let m = q.len();
    if m < keep {
        return Err(Error::Inconsistency(format!(
            "trial subspace collapsed to dimension {m} < {keep}"
        )));
    }
    let aq: Vec<Vec<f64>> = q.iter().map(|v| (problem.a)(v)).collect();
    let g = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i])));
    let (theta, y) = sorted_symmetric_eigen(g);
    let dim = problem.dim;
    let mut out = Vec::with_capacity(keep);
    for k in 0..keep {
        let mut xk = vec![0.0; dim];
        let mut dk = vec![0.0; dim];
        let mut has_dir = false;
        for i in 0..m {
            let c = y[(i, k)];
            axpy(&mut xk, c, &q[i]);
            if origin[i] >= n_x {
                axpy(&mut dk, c, &q[i]);
                has_dir = true;
            }
        }
        out.push(RitzVector {
            x: xk,
            direction: has_dir.then_some(dk),
        });
    }
    let spread = theta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    Ok((theta[..keep].to_vec(), out, spread))
}

/// Modified Gram-Schmidt (two passes) in the `B` inner product, dropping
/// vectors whose norm collapses. Returns the basis and the original index
/// of each kept vector.
fn b_orthonormalize(
    problem: &EigenProblem<'_>,
    basis: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    let mut bq: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    let mut origin = Vec::with_capacity(basis.len());
    for (idx, v) in basis.iter().enumerate() {
        let mut s = v.clone();
        problem.project(&mut s);
        let mut bs = problem.apply_b(&s);
        let n0 = dot(&s, &bs).max(0.0).sqrt();
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for (qj, bqj) in q.iter().zip(&bq) {
                let c = dot(qj, &bs);
                axpy(&mut s, -c, qj);
                axpy(&mut bs, -c, bqj);
            }
        }
        // Refresh B·s to shed accumulated update error.
        let bs = problem.apply_b(&s);
        let n1 = dot(&s, &bs).max(0.0).sqrt();
        if n1 <= 1e-10 * n0 {
            continue;
        }
        let inv = 1.0 / n1;
        q.push(s.iter().map(|v| v * inv).collect());
        bq.push(bs.iter().map(|v| v * inv).collect());
        origin.push(idx);
    }
    (q, origin)
}
