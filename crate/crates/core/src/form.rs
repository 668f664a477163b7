//! Lowest eigenpairs of Schrödinger-type forms `κ(-Δ) + diag(v)` on the grid.
//!
//! Vectors are Euclidean-normalized; divide by `h` for `L²`-normalized fields.
//! The eigenvalues are the same in both inner products.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::TorusGrid;
use crate::linalg::{assemble_dense, dot, lobpcg, norm, sorted_symmetric_eigen, EigenProblem};

/// Largest grid handled by dense eigendecomposition.
pub(crate) const DENSE_FORM_MAX_N: usize = 16;

/// Eigenvalues closer than this (relative to `max(1, |μ|)`) form one cluster.
pub(crate) const CLUSTER_GAP: f64 = 1e-9;

const EIGEN_TOL: f64 = 1e-11;
const EIGEN_MAX_ITER: usize = 3000;

pub(crate) struct Form<'a> {
    pub grid: &'a TorusGrid,
    pub kappa: f64,
    pub potential: &'a [f64],
}

pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `‖A x - μ x‖` for each unit vector `x`.
    pub residuals: Vec<f64>,
}

impl Form<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.grid.laplacian_values(x);
        for ((o, v), xi) in out.iter_mut().zip(self.potential).zip(x) {
            *o = -self.kappa * *o + v * xi;
        }
        out
    }

    /// `(κ(-Δ) + σ)⁻¹` with `σ` chosen to keep it comparable to the form.
    fn preconditioner_shift(&self) -> f64 {
        let mean = self.potential.iter().sum::<f64>() / self.potential.len() as f64;
        let min = self.potential.iter().copied().fold(f64::INFINITY, f64::min);
        1.0 + (mean - min).max(0.0)
    }

    /// Lowest `count` eigenpairs with degenerate clusters put in canonical form.
    pub fn lowest(&self, count: usize) -> Result<Eigenpairs> {
        let dim = self.grid.len();
        let count = count.min(dim);
        let mut extra = 4;
        loop {
            let k = (count + extra).min(dim);
            let (values, vectors) = self.raw_lowest(k)?;
            let end = cluster_end(&values, count.saturating_sub(1));
            if end + 1 < k || k == dim {
                let mut pairs = Eigenpairs {
                    values,
                    vectors,
                    residuals: Vec::new(),
                };
                canonicalize(self.grid, &mut pairs, count);
                pairs.values.truncate(count);
                pairs.vectors.truncate(count);
                pairs.residuals = pairs
                    .vectors
                    .iter()
                    .zip(&pairs.values)
                    .map(|(x, &mu)| {
                        let mut r = self.apply(x);
                        for (ri, xi) in r.iter_mut().zip(x) {
                            *ri -= mu * xi;
                        }
                        norm(&r)
                    })
                    .collect();
                return Ok(pairs);
            }
            extra *= 2;
        }
    }

    fn raw_lowest(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let dim = self.grid.len();
        if self.grid.n() <= DENSE_FORM_MAX_N {
            let (values, vecs) = sorted_symmetric_eigen(assemble_dense(dim, &|x| self.apply(x)));
            let vectors = (0..k).map(|c| vecs.column(c).iter().copied().collect()).collect();
            return Ok((values[..k].to_vec(), vectors));
        }
        let sigma = self.preconditioner_shift();
        let kappa = self.kappa;
        let a = |x: &[f64]| self.apply(x);
        let precond = |x: &[f64]| {
            self.grid
                .apply_radial_multiplier(x, |k2| 1.0 / (kappa * k2 + sigma))
        };
        let problem = EigenProblem {
            dim,
            a: &a,
            b: None,
            precond: &precond,
            constraints: &[],
        };
        let block = (k + 4).min(dim);
        let out = lobpcg(&problem, k, block, EIGEN_TOL, EIGEN_MAX_ITER)?;
        Ok((out.values, out.vectors))
    }
}

/// Last index of the cluster containing `i`.
pub(crate) fn cluster_end(values: &[f64], i: usize) -> usize {
    let mut end = i;
    while end + 1 < values.len() && same_cluster(values[end], values[end + 1]) {
        end += 1;
    }
    end
}

fn same_cluster(a: f64, b: f64) -> bool {
    (b - a).abs() < CLUSTER_GAP * a.abs().max(b.abs()).max(1.0)
}

/// Resolves every cluster meeting the first `count` pairs: Gram-Schmidt of
/// the projections of `cos(k·x)`, `sin(k·x)` (canonical wavenumber order)
/// onto the cluster, then sign so the first largest-magnitude entry is positive.
pub(crate) fn canonicalize(grid: &TorusGrid, pairs: &mut Eigenpairs, count: usize) {
    let mut start = 0;
    while start < count.min(pairs.values.len()) {
        let end = cluster_end(&pairs.values, start);
        if end > start {
            let basis = pairs.vectors[start..=end].to_vec();
            let resolved = resolve_cluster(grid, &basis);
            let mean = pairs.values[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            for (off, v) in resolved.into_iter().enumerate() {
                pairs.vectors[start + off] = v;
                pairs.values[start + off] = mean;
            }
        }
        start = end + 1;
    }
    for v in pairs.vectors.iter_mut().take(count) {
        fix_sign(v);
    }
}

fn resolve_cluster(grid: &TorusGrid, basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = basis.len();
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(d);
    let n = grid.n();
    'outer: for (k1, k2) in grid.wavenumbers() {
        for use_sin in [false, true] {
            let mut cand: Vec<f64> = (0..grid.len())
                .map(|idx| {
                    let (i, j) = grid.node(idx);
                    let phase = 2.0 * PI * ((k1 * i as i64 + k2 * j as i64) as f64) / n as f64;
                    if use_sin {
                        phase.sin()
                    } else {
                        phase.cos()
                    }
                })
                .collect();
            let cn = norm(&cand);
            if cn < 1e-8 {
                continue;
            }
            cand.iter_mut().for_each(|v| *v /= cn);
            let mut p = vec![0.0; cand.len()];
            for q in basis {
                let s = dot(q, &cand);
                p.iter_mut().zip(q).for_each(|(pi, qi)| *pi += s * qi);
            }
            for _ in 0..2 {
                for a in &accepted {
                    let s = dot(a, &p);
                    p.iter_mut().zip(a).for_each(|(pi, ai)| *pi -= s * ai);
                }
            }
            let pn = norm(&p);
            if pn > 1e-3 {
                p.iter_mut().for_each(|v| *v /= pn);
                accepted.push(p);
                if accepted.len() == d {
                    break 'outer;
                }
            }
        }
    }
    // Fourier modes span the space, so this only triggers on round-off.
    for q in basis {
        if accepted.len() == d {
            break;
        }
        let mut p = q.clone();
        for a in &accepted {
            let s = dot(a, &p);
            p.iter_mut().zip(a).for_each(|(pi, ai)| *pi -= s * ai);
        }
        let pn = norm(&p);
        if pn > 1e-6 {
            p.iter_mut().for_each(|v| *v /= pn);
            accepted.push(p);
        }
    }
    accepted
}

fn fix_sign(v: &mut [f64]) {
    let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() >= peak * (1.0 - 1e-8)) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
