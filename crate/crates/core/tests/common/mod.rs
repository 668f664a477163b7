//! Brute-force reference implementations used by the integration tests.
//! Nothing here calls into the FFT or iterative solvers of the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

use anderson_core::{GridField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense { n, data: vec![0.0; n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn add_diag(&mut self, d: &[f64]) {
        for (i, v) in d.iter().enumerate() {
            self.data[i * self.n + i] += v;
        }
    }
}

/// 1-D spectral second derivative on `n` points of `[0, 2π)`:
/// `L[i][j] = -(1/n) Σ_k k² cos(2πk(i-j)/n)`, `k ∈ [-n/2, n/2)`.
pub fn laplacian_1d(n: usize) -> Dense {
    let half = (n / 2) as i64;
    let mut l = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (-half..half)
                .map(|k| {
                    let k = k as f64;
                    k * k * (2.0 * PI * k * (i as f64 - j as f64) / n as f64).cos()
                })
                .sum();
            l.set(i, j, -s / n as f64);
        }
    }
    l
}

/// `L₁ ⊗ I + I ⊗ L₁` on the row-major `n × n` grid.
pub fn laplacian_2d(n: usize) -> Dense {
    let l1 = laplacian_1d(n);
    let mut l = Dense::zeros(n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                // Vary the first index with the second fixed, and vice versa.
                let r = i * n + j;
                l.data[r * n * n + k * n + j] += l1.get(i, k);
                l.data[r * n * n + i * n + k] += l1.get(j, k);
            }
        }
    }
    l
}

/// `-Δ + diag(v)`.
pub fn schrodinger(n: usize, v: &[f64]) -> Dense {
    let mut m = laplacian_2d(n);
    m.data.iter_mut().for_each(|x| *x = -*x);
    m.add_diag(v);
    m
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap();
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    m[row * n + k] -= f * m[col * n + k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (x[row] - s) / m[row * n + row];
    }
    x
}

/// Cyclic Jacobi for a symmetric matrix. Eigenvalues ascending, eigenvectors
/// as unit columns in the same order.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.n;
    let mut m = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    (values, vectors)
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: &Dense) -> Dense {
    let n = a.n;
    let mut l = Dense::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            if i == j {
                l.set(i, i, (a.get(i, i) - s).sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    l
}

/// Smallest `λ` with `A x = λ B x`, `B` SPD, restricted to the orthogonal
/// complement of `exclude` (Euclidean, assumed orthonormal).
pub fn min_generalized_on_complement(a: &Dense, b: &Dense, exclude: &[Vec<f64>]) -> f64 {
    let n = a.n;
    // Orthonormal basis of the complement by Gram-Schmidt over the unit vectors.
    let mut basis: Vec<Vec<f64>> = exclude.to_vec();
    for e in 0..n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let s: f64 = q.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    let comp = &basis[exclude.len()..];
    let k = comp.len();
    let project = |m: &Dense| {
        let mq: Vec<Vec<f64>> = comp.iter().map(|q| m.matvec(q)).collect();
        let mut out = Dense::zeros(k);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, comp[i].iter().zip(&mq[j]).map(|(x, y)| x * y).sum());
            }
        }
        out
    };
    let ak = project(a);
    let bk = project(b);
    let l = cholesky(&bk);
    // C = L⁻¹ A L⁻ᵀ, built column by column with triangular solves.
    let lower_solve = |rhs: &[f64]| {
        let mut x = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|j| l.get(i, j) * x[j]).sum();
            x[i] = (rhs[i] - s) / l.get(i, i);
        }
        x
    };
    let mut y = Dense::zeros(k); // y = L⁻¹ A, row-major
    for col in 0..k {
        let column: Vec<f64> = (0..k).map(|i| ak.get(i, col)).collect();
        let s = lower_solve(&column);
        for i in 0..k {
            y.set(i, col, s[i]);
        }
    }
    let mut c = Dense::zeros(k);
    for row in 0..k {
        let r: Vec<f64> = (0..k).map(|j| y.get(row, j)).collect();
        let s = lower_solve(&r);
        for j in 0..k {
            c.set(row, j, s[j]);
        }
    }
    // Symmetrize against roundoff.
    for i in 0..k {
        for j in 0..i {
            let m = 0.5 * (c.get(i, j) + c.get(j, i));
            c.set(i, j, m);
            c.set(j, i, m);
        }
    }
    jacobi_eigen(&c).0[0]
}

/// Torus heat kernel of `-Δ + c` by the method of images:
/// `e^{-ct} Σ_m (4πt)⁻¹ exp(-|x - y + 2πm|²/4t)`.
pub fn theta_heat_kernel(t: f64, c: f64, dx: f64, dy: f64) -> f64 {
    let mut s = 0.0;
    for m1 in -6i32..=6 {
        for m2 in -6i32..=6 {
            let a = dx + 2.0 * PI * m1 as f64;
            let b = dy + 2.0 * PI * m2 as f64;
            s += (-(a * a + b * b) / (4.0 * t)).exp();
        }
    }
    (-c * t).exp() * s / (4.0 * PI * t)
}

/// `(w ⋆ u)(x) = h² Σ_y w(x - y) u(y)` by direct double sum.
pub fn convolve_direct(u: &GridField, w: &GridField) -> Vec<f64> {
    let grid = u.grid();
    let n = grid.n();
    let h2 = grid.cell_measure();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += w.at((i + n - k) % n, (j + n - l) % n) * u.at(k, l);
                }
            }
            out[i * n + j] = h2 * s;
        }
    }
    out
}

pub fn uniform_field(grid: &TorusGrid, seed: u64, amplitude: f64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
    GridField::new(grid, values).unwrap()
}

/// Random trigonometric polynomial with `|k|_∞ ≤ kmax`, scaled to sup norm `amplitude`.
pub fn smooth_field(grid: &TorusGrid, seed: u64, kmax: i32, amplitude: f64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            terms.push((k1 as f64, k2 as f64, a, b));
        }
    }
    let raw = GridField::from_fn(grid, |x, y| {
        terms
            .iter()
            .map(|&(k1, k2, a, b)| a * (k1 * x + k2 * y).cos() + b * (k1 * x + k2 * y).sin())
            .sum()
    });
    let peak = raw.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    raw.scale(amplitude / peak)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `‖a - b‖ / ‖b‖` in the Euclidean norm.
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}
