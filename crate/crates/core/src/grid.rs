//! Discrete geometry and calculus on the flat torus `[0, 2π)²`.
//!
//! Fields are stored row-major over `(i, j)` where node `(i, j)` sits at
//! `(i·h, j·h)`. Spectral coefficients use the normalization
//! `û_k = n⁻² Σ_x u(x) e^{-i k·x}`, so the continuous `L²` inner product
//! becomes `4π² Σ_k û_k conj(v̂_k)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Total measure of the torus, `4π²`.
pub const TORUS_MEASURE: f64 = 4.0 * PI * PI;

struct Plans {
    n: usize,
    h: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `|k|²` for every coefficient, in FFT storage order.
    k_squared: Vec<f64>,
}

/// Uniform `n × n` grid on the flat torus, with cached FFT plans.
///
/// Cloning is cheap; clones share the plans.
#[derive(Clone)]
pub struct TorusGrid {
    plans: Arc<Plans>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.plans.n)
            .field("h", &self.plans.h)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.plans.n == other.plans.n
    }
}

impl Eq for TorusGrid {}

impl TorusGrid {
    /// Builds an `n × n` grid; `n` must be even and at least 2.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Domain(format!(
                "grid size must be a positive even integer, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut k_squared = Vec::with_capacity(n * n);
        for a in 0..n {
            let k1 = signed_wavenumber(a, n) as f64;
            for b in 0..n {
                let k2 = signed_wavenumber(b, n) as f64;
                k_squared.push(k1 * k1 + k2 * k2);
            }
        }
        Ok(TorusGrid {
            plans: Arc::new(Plans {
                n,
                h: 2.0 * PI / n as f64,
                forward,
                inverse,
                k_squared,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.plans.n
    }

    /// Grid spacing `2π / n`.
    pub fn h(&self) -> f64 {
        self.plans.h
    }

    /// Number of nodes, `n²`.
    pub fn len(&self) -> usize {
        self.plans.n * self.plans.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h²` of a single cell.
    pub fn cell_measure(&self) -> f64 {
        self.plans.h * self.plans.h
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.plans.n + j
    }

    pub fn node(&self, idx: usize) -> (usize, usize) {
        (idx / self.plans.n, idx % self.plans.n)
    }

    /// Physical coordinates of node `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.plans.h, j as f64 * self.plans.h)
    }

    /// Wavenumbers in canonical order: lexicographic on `(k₁, k₂)` with
    /// each component in `[-n/2, n/2)`.
    pub fn wavenumbers(&self) -> Vec<(i64, i64)> {
        let half = (self.plans.n / 2) as i64;
        let mut out = Vec::with_capacity(self.len());
        for k1 in -half..half {
            for k2 in -half..half {
                out.push((k1, k2));
            }
        }
        out
    }

    /// Position of wavenumber `k` in canonical order.
    pub fn canonical_index(&self, k: (i64, i64)) -> usize {
        let n = self.plans.n as i64;
        let half = n / 2;
        let a = (wrap_wavenumber(k.0, n) + half) as usize;
        let b = (wrap_wavenumber(k.1, n) + half) as usize;
        a * self.plans.n + b
    }

    fn fft_index(&self, k: (i64, i64)) -> usize {
        let n = self.plans.n as i64;
        let a = k.0.rem_euclid(n) as usize;
        let b = k.1.rem_euclid(n) as usize;
        a * self.plans.n + b
    }

    /// Geodesic distance between two nodes.
    pub fn geodesic_dist(&self, x: (usize, usize), y: (usize, usize)) -> f64 {
        let h = self.plans.h;
        let d1 = periodic_gap(x.0, y.0, self.plans.n) as f64 * h;
        let d2 = periodic_gap(x.1, y.1, self.plans.n) as f64 * h;
        (d1 * d1 + d2 * d2).sqrt()
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.plans.n;
        let plan = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        plan.process(data);
        transpose_square(data, n);
        plan.process(data);
        transpose_square(data, n);
    }

    /// Normalized forward transform, coefficients in FFT storage order.
    pub(crate) fn forward_raw(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        let scale = 1.0 / self.len() as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
        buf
    }

    /// Inverse of [`forward_raw`](Self::forward_raw), keeping the real part.
    pub(crate) fn inverse_raw(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut coeffs, true);
        coeffs.into_iter().map(|c| c.re).collect()
    }

    /// Applies the radial Fourier multiplier `m(|k|²)`.
    pub(crate) fn apply_radial_multiplier(
        &self,
        values: &[f64],
        multiplier: impl Fn(f64) -> f64,
    ) -> Vec<f64> {
        let mut coeffs = self.forward_raw(values);
        for (c, &k2) in coeffs.iter_mut().zip(&self.plans.k_squared) {
            *c *= multiplier(k2);
        }
        self.inverse_raw(coeffs)
    }

    /// Spectral Laplacian, symbol `-|k|²`.
    pub(crate) fn laplacian_values(&self, values: &[f64]) -> Vec<f64> {
        self.apply_radial_multiplier(values, |k2| -k2)
    }

    /// Exact inverse of `-Δ + sigma` for `sigma > 0`.
    pub(crate) fn shifted_inverse_laplacian(&self, values: &[f64], sigma: f64) -> Vec<f64> {
        self.apply_radial_multiplier(values, |k2| 1.0 / (k2 + sigma))
    }

    /// Largest `|k|²` represented on the grid.
    pub fn max_k_squared(&self) -> f64 {
        let half = (self.plans.n / 2) as f64;
        2.0 * half * half
    }
}

fn signed_wavenumber(a: usize, n: usize) -> i64 {
    if a < n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

fn wrap_wavenumber(k: i64, n: i64) -> i64 {
    let r = k.rem_euclid(n);
    if r < n / 2 {
        r
    } else {
        r - n
    }
}

fn periodic_gap(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Real-valued function sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridField {
    /// Wraps raw values; rejects wrong length or non-finite entries.
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}×{} grid, got {}",
                grid.len(),
                grid.n(),
                grid.n(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {pos}")));
        }
        Ok(GridField {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, value: f64) -> Self {
        GridField {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x₁, x₂)` at every node.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.point(i, j);
                values.push(f(x1, x2));
            }
        }
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    /// Discrete Dirac at node `(i, j)`, normalized so that
    /// `inner_l2(δ, φ) = φ(i, j)`.
    pub fn dirac(grid: &TorusGrid, node: (usize, usize)) -> Self {
        let mut values = vec![0.0; grid.len()];
        values[grid.index(node.0, node.1)] = 1.0 / grid.cell_measure();
        GridField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.grid == other.grid
    }

    pub(crate) fn check_grid(&self, other: &GridField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "grid mismatch: {} vs {}",
                self.grid.n(),
                other.grid.n()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination. Panics if the grids differ.
    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        assert!(self.same_grid(other), "zip_map on mismatched grids");
        GridField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn abs(&self) -> GridField {
        self.map(f64::abs)
    }

    /// Quadrature `h² Σ u`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_measure() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `L²` norm, infallible shorthand for `norm_lp(self, 2)`.
    pub fn l2(&self) -> f64 {
        dot(&self.values, &self.values).sqrt() * self.grid.h()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Complex spectral coefficients in canonical wavenumber order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Coefficients in canonical order (see [`TorusGrid::wavenumbers`]).
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of wavenumber `k` (taken modulo `n`).
    pub fn coeff(&self, k: (i64, i64)) -> Complex64 {
        self.coeffs[self.grid.canonical_index(k)]
    }

    /// Largest `|c(-k) - conj(c(k))|`, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.grid
            .wavenumbers()
            .into_iter()
            .map(|k| (self.coeff((-k.0, -k.1)) - self.coeff(k).conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

/// `L²` inner product by the quadrature `h² Σ u v`.
pub fn inner_l2(u: &GridField, v: &GridField) -> Result<f64> {
    u.check_grid(v)?;
    Ok(u.grid.cell_measure() * dot(&u.values, &v.values))
}

/// `L^p` norm for `p ≥ 1`; pass `f64::INFINITY` for the sup norm.
pub fn norm_lp(u: &GridField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    if p == 2.0 {
        return Ok(u.l2());
    }
    // Scale by the max entry so large p does not overflow.
    let peak = u.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = u.values.iter().map(|v| (v.abs() / peak).powf(p)).sum();
    Ok(peak * (u.grid.cell_measure() * sum).powf(1.0 / p))
}

/// Geodesic distance between two grid nodes.
pub fn geodesic_dist(grid: &TorusGrid, x: (usize, usize), y: (usize, usize)) -> f64 {
    grid.geodesic_dist(x, y)
}

pub fn dft_forward(u: &GridField) -> SpectralField {
    let grid = &u.grid;
    let raw = grid.forward_raw(&u.values);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for k in grid.wavenumbers() {
        coeffs[grid.canonical_index(k)] = raw[grid.fft_index(k)];
    }
    SpectralField {
        grid: grid.clone(),
        coeffs,
    }
}

pub fn dft_inverse(u_hat: &SpectralField) -> GridField {
    let grid = &u_hat.grid;
    let mut raw = vec![Complex64::new(0.0, 0.0); grid.len()];
    for k in grid.wavenumbers() {
        raw[grid.fft_index(k)] = u_hat.coeffs[grid.canonical_index(k)];
    }
    GridField::from_vec_unchecked(grid, grid.inverse_raw(raw))
}

/// Periodic convolution `(w ⋆ u)(x) = h² Σ_y w(x - y) u(y)`, computed spectrally.
pub fn convolve(u: &GridField, w: &GridField) -> Result<GridField> {
    u.check_grid(w)?;
    let grid = &u.grid;
    let mut cu = grid.forward_raw(&u.values);
    let cw = grid.forward_raw(&w.values);
    for (a, b) in cu.iter_mut().zip(&cw) {
        *a *= *b * TORUS_MEASURE;
    }
    Ok(GridField::from_vec_unchecked(grid, grid.inverse_raw(cu)))
}

/// Adjoint of `u ↦ w ⋆ u` in `L²`: convolution with `x ↦ w(-x)`.
pub(crate) fn convolve_adjoint(z: &GridField, w: &GridField) -> GridField {
    let grid = &z.grid;
    let mut cz = grid.forward_raw(&z.values);
    let cw = grid.forward_raw(&w.values);
    for (a, b) in cz.iter_mut().zip(&cw) {
        *a *= b.conj() * TORUS_MEASURE;
    }
    GridField::from_vec_unchecked(grid, grid.inverse_raw(cz))
}
