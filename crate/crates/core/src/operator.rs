//! The discrete Anderson operator `H = Δ + ξ`, its shift `H_c = H - c`, the
//! energy norm, resolvent, heat semigroup and Green function.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::Form;
use crate::grid::{GridField, TorusGrid};
use crate::linalg::{assemble_dense, dot, lanczos_expm, pcg, sorted_symmetric_eigen};
use crate::noise::NoiseSample;

/// Largest grid whose heat semigroup uses a full eigendecomposition.
pub const DENSE_HEAT_MAX_N: usize = 48;

const SOLVE_TOL: f64 = 1e-11;
const SOLVE_MAX_ITER: usize = 5000;

/// Heat-kernel samples with `d²/t` above this sit below the double-precision
/// floor relative to the kernel peak and are left out of the diagnostics.
pub const RESOLVABLE_EXPONENT: f64 = 25.0;

/// Top of the spectrum of `Δ + v` and the shift `c = max(λ_max, 0) + 1`.
pub fn compute_shift(xi: &NoiseSample) -> Result<(f64, f64)> {
    shift_for_potential(xi.grid(), xi.field.values())
}

fn shift_for_potential(grid: &TorusGrid, potential: &[f64]) -> Result<(f64, f64)> {
    // λ_max(Δ + v) = -λ_min(-Δ - v)
    let neg: Vec<f64> = potential.iter().map(|v| -v).collect();
    let form = Form {
        grid,
        kappa: 1.0,
        potential: &neg,
    };
    let lambda_max = -form.lowest(1)?.values[0];
    Ok((lambda_max.max(0.0) + 1.0, lambda_max))
}

struct HeatBasis {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// `H = Δ + ξ` for a frozen noise sample. Immutable once built; the dense
/// heat basis is computed on first use and shared between threads.
pub struct AndersonOperator {
    grid: TorusGrid,
    xi: NoiseSample,
    renormalization: f64,
    /// Multiplicative part of `H`: `ξ - c_ren`.
    potential: Vec<f64>,
    /// `c - ξ + c_ren`, the multiplicative part of `-H_c`.
    shifted: Vec<f64>,
    c: f64,
    lambda_max_h: f64,
    heat: OnceLock<HeatBasis>,
}

impl std::fmt::Debug for AndersonOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AndersonOperator")
            .field("n", &self.grid.n())
            .field("seed", &self.xi.seed)
            .field("c", &self.c)
            .field("lambda_max_h", &self.lambda_max_h)
            .field("renormalization", &self.renormalization)
            .finish()
    }
}

impl AndersonOperator {
    pub fn new(xi: NoiseSample) -> Result<Self> {
        Self::build(xi, 0.0)
    }

    /// Subtracts `(1/2π) ln n` from `ξ`, for studies of the drift as `n` grows.
    pub fn renormalized(xi: NoiseSample) -> Result<Self> {
        let n = xi.grid().n() as f64;
        Self::build(xi, n.ln() / (2.0 * PI))
    }

    fn build(xi: NoiseSample, renormalization: f64) -> Result<Self> {
        let grid = xi.grid().clone();
        let potential: Vec<f64> = xi.field.values().iter().map(|v| v - renormalization).collect();
        let (c, lambda_max_h) = shift_for_potential(&grid, &potential)?;
        let shifted = potential.iter().map(|v| c - v).collect();
        Ok(AndersonOperator {
            grid,
            xi,
            renormalization,
            potential,
            shifted,
            c,
            lambda_max_h,
            heat: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn xi(&self) -> &NoiseSample {
        &self.xi
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda_max_h(&self) -> f64 {
        self.lambda_max_h
    }

    /// Constant subtracted from `ξ` (zero unless built with [`renormalized`](Self::renormalized)).
    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    fn check(&self, u: &GridField) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::Shape(format!(
                "field lives on a {0}×{0} grid, operator on {1}×{1}",
                u.grid().n(),
                self.grid.n()
            )));
        }
        Ok(())
    }

    pub fn apply_h(&self, u: &GridField) -> Result<GridField> {
        self.check(u)?;
        let mut out = self.grid.laplacian_values(u.values());
        for ((o, v), x) in out.iter_mut().zip(&self.potential).zip(u.values()) {
            *o += v * x;
        }
        Ok(GridField::from_vec_unchecked(&self.grid, out))
    }

    /// `(-H_c) u = (-H + c) u`.
    pub fn apply_neg_hc(&self, u: &GridField) -> Result<GridField> {
        self.check(u)?;
        Ok(GridField::from_vec_unchecked(&self.grid, self.neg_hc_values(u.values())))
    }

    pub(crate) fn neg_hc_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.grid.laplacian_values(x);
        for ((o, s), xi) in out.iter_mut().zip(&self.shifted).zip(x) {
            *o = -*o + s * xi;
        }
        out
    }

    /// Multiplicative part `c - ξ` of `-H_c`.
    pub(crate) fn shifted_potential(&self) -> &[f64] {
        &self.shifted
    }

    /// `⟨u, v⟩_ℰ = ⟨(-H_c) u, v⟩`.
    pub fn energy_inner(&self, u: &GridField, v: &GridField) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.grid.cell_measure() * dot(&self.neg_hc_values(u.values()), v.values()))
    }

    pub fn energy_norm(&self, u: &GridField) -> Result<f64> {
        Ok(self.energy_inner(u, u)?.max(0.0).sqrt())
    }

    /// Solves `(-H_c + λ) u = rhs` for `λ ≥ 0`.
    pub fn resolvent_solve(&self, lambda: f64, rhs: &GridField) -> Result<GridField> {
        self.check(rhs)?;
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("resolvent needs λ >= 0, got {lambda}")));
        }
        let extra = vec![lambda; self.grid.len()];
        let x = self.solve_with_potential(&extra, rhs.values(), None)?;
        Ok(GridField::from_vec_unchecked(&self.grid, x))
    }

    /// Solves `(-H_c + diag(extra)) x = b`; the operator must be positive definite.
    pub(crate) fn solve_with_potential(
        &self,
        extra: &[f64],
        b: &[f64],
        x0: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let diag: Vec<f64> = self.shifted.iter().zip(extra).map(|(s, e)| s + e).collect();
        let mean_extra = extra.iter().sum::<f64>() / extra.len() as f64;
        let sigma = (self.c + mean_extra).max(1.0);
        let a = |x: &[f64]| {
            let mut out = self.grid.laplacian_values(x);
            for ((o, d), xi) in out.iter_mut().zip(&diag).zip(x) {
                *o = -*o + d * xi;
            }
            out
        };
        let precond = |r: &[f64]| self.grid.shifted_inverse_laplacian(r, sigma);
        let (x, _) = pcg(&a, &precond, b, x0, SOLVE_TOL, SOLVE_MAX_ITER)?;
        Ok(x)
    }

    /// `(-H_c)⁻¹ b` on raw values.
    pub(crate) fn inverse_neg_hc(&self, b: &[f64]) -> Result<Vec<f64>> {
        let zero = vec![0.0; b.len()];
        self.solve_with_potential(&zero, b, None)
    }

    fn heat_basis(&self) -> &HeatBasis {
        self.heat.get_or_init(|| {
            let m = assemble_dense(self.grid.len(), &|x| self.neg_hc_values(x));
            let (values, vectors) = sorted_symmetric_eigen(m);
            HeatBasis { values, vectors }
        })
    }

    /// `e^{t H_c} u` for `t > 0`.
    pub fn heat_apply(&self, t: f64, u: &GridField) -> Result<GridField> {
        self.check(u)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("heat semigroup needs t > 0, got {t}")));
        }
        let out = if self.grid.n() <= DENSE_HEAT_MAX_N {
            let basis = self.heat_basis();
            let coeffs = basis.vectors.tr_mul(&DVector::from_column_slice(u.values()));
            let scaled = DVector::from_iterator(
                coeffs.len(),
                coeffs.iter().zip(&basis.values).map(|(c, mu)| c * (-t * mu).exp()),
            );
            (&basis.vectors * scaled).as_slice().to_vec()
        } else {
            lanczos_expm(&|x| self.neg_hc_values(x), t, u.values(), 1e-13)?
        };
        Ok(GridField::from_vec_unchecked(&self.grid, out))
    }

    /// `G(·, x0)`, solving `(-H_c) G = δ_{x0}`.
    pub fn green_function(&self, x0: (usize, usize)) -> Result<GridField> {
        let n = self.grid.n();
        if x0.0 >= n || x0.1 >= n {
            return Err(Error::Domain(format!("node {x0:?} outside the {n}×{n} grid")));
        }
        self.resolvent_solve(0.0, &GridField::dirac(&self.grid, x0))
    }

    /// Positivity, Gaussian sandwich, decay rate and Green log-comparison of
    /// the semigroup at the given times.
    pub fn heat_kernel_diagnostics(&self, times: &[f64]) -> Result<HeatKernelReport> {
        if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Domain("diagnostic times must lie in (0, 1]".into()));
        }
        let grid = &self.grid;
        let n = grid.n();
        let h = grid.h();
        let sources = self.sources();

        let mut min_kernel = f64::INFINITY;
        let mut nonpositive = Vec::new();
        let mut nonpositive_count = 0;
        // (d²/t, t, p)
        let mut fit = Vec::new();
        for &t in times {
            for &y in &sources {
                let column = self.heat_apply(t, &GridField::dirac(grid, y))?;
                for idx in 0..grid.len() {
                    let x = grid.node(idx);
                    let d = grid.geodesic_dist(x, y);
                    if d * d / t > RESOLVABLE_EXPONENT {
                        continue;
                    }
                    let p = column.values()[idx];
                    min_kernel = min_kernel.min(p);
                    if p <= 0.0 {
                        nonpositive_count += 1;
                        if nonpositive.len() < 100 {
                            nonpositive.push(KernelSample { t, x, y, value: p });
                        }
                    } else if d >= 4.0 * h - 1e-12 {
                        fit.push((d * d / t, t, p));
                    }
                }
            }
        }
        if fit.len() < 2 {
            return Err(Error::Domain(format!(
                "grid n = {n} leaves fewer than two resolvable kernel samples with d >= 4h"
            )));
        }
        // log p + log t = C - B d²/t
        let m = fit.len() as f64;
        let (sx, sy) = fit
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, t, p)| (a + x, b + p.ln() + t.ln()));
        let (mx, my) = (sx / m, sy / m);
        let (sxy, sxx) = fit.iter().fold((0.0, 0.0), |(a, b), &(x, t, p)| {
            let dy = p.ln() + t.ln() - my;
            (a + (x - mx) * dy, b + (x - mx) * (x - mx))
        });
        if sxx == 0.0 {
            return Err(Error::Domain("kernel samples do not spread in d²/t".into()));
        }
        let decay = -sxy / sxx;
        if !(decay > 0.0) {
            return Err(Error::Inconsistency(format!(
                "heat kernel does not decay with distance (fitted rate {decay:e})"
            )));
        }
        let a2 = decay.max(1.0 / decay);
        let a1 = fit.iter().fold(1.0_f64, |acc, &(x, t, p)| {
            let lower = (-a2 * x).exp() / (t * p);
            let upper = p * t * (x / a2).exp();
            acc.max(lower).max(upper)
        });

        let one = GridField::constant(grid, 1.0);
        let mut epsilon = f64::INFINITY;
        for &t in times {
            let top = self.heat_apply(t, &one)?.max();
            epsilon = epsilon.min(-top.ln() / t);
        }

        let (green_ratio_low, green_ratio_high) = self.green_ratios(&sources)?;
        Ok(HeatKernelReport {
            a1,
            a2,
            epsilon,
            min_kernel,
            green_ratio_low,
            green_ratio_high,
            nonpositive_count,
            nonpositive,
        })
    }

    fn sources(&self) -> Vec<(usize, usize)> {
        let n = self.grid.n();
        let mut s = vec![(0, 0), (n / 2, n / 4), (n / 4, 3 * n / 4)];
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Range of `G(x, y) / |ln d(x, y)|` over `min(4h, 0.1) ≤ d ≤ 0.3`.
    fn green_ratios(&self, sources: &[(usize, usize)]) -> Result<(Option<f64>, Option<f64>)> {
        let lo_d = (4.0 * self.grid.h()).min(0.1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &y in sources {
            let g = self.green_function(y)?;
            for idx in 0..self.grid.len() {
                let d = self.grid.geodesic_dist(self.grid.node(idx), y);
                if d >= lo_d - 1e-12 && d <= 0.3 {
                    let r = g.values()[idx] / d.ln().abs();
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
        if lo.is_finite() {
            Ok((Some(lo), Some(hi)))
        } else {
            Ok((None, None))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub t: f64,
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub value: f64,
}

/// Output of [`AndersonOperator::heat_kernel_diagnostics`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelReport {
    pub a1: f64,
    pub a2: f64,
    pub epsilon: f64,
    pub min_kernel: f64,
    /// `None` when no grid distance falls in the comparison window.
    pub green_ratio_low: Option<f64>,
    pub green_ratio_high: Option<f64>,
    pub nonpositive_count: usize,
    /// First non-positive kernel values found, if any.
    pub nonpositive: Vec<KernelSample>,
}
