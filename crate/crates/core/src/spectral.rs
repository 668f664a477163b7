//! Potentials `a` and the spectral theory of the form `-H_c + a`: Kato
//! moduli, resolvent decay, form-bound constants, eigenpairs and the gap `δ`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::Form;
use crate::grid::{convolve, norm_lp, GridField, TorusGrid};
use crate::linalg::{dot, lobpcg, norm, EigenProblem};
use crate::operator::AndersonOperator;

/// Eigenvalues at most this far above zero count as non-positive when
/// determining the index `m`.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// A potential `a` together with the `L^p` class it is claimed to lie in.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    field: GridField,
    declared_p: f64,
}

impl Potential {
    /// `declared_p` must exceed 1; `f64::INFINITY` declares a bounded potential.
    pub fn new(field: GridField, declared_p: f64) -> Result<Self> {
        if !(declared_p > 1.0) {
            return Err(Error::Domain(format!(
                "potentials must be declared in L^p with p > 1, got {declared_p}"
            )));
        }
        if !norm_lp(&field, declared_p.min(1e6))?.is_finite() {
            return Err(Error::Domain("potential has infinite declared norm".into()));
        }
        Ok(Potential { field, declared_p })
    }

    pub fn constant(grid: &TorusGrid, value: f64) -> Self {
        Potential {
            field: GridField::constant(grid, value),
            declared_p: f64::INFINITY,
        }
    }

    /// `amplitude · max(d(x, center), h)^{-2/q}`, which lies in `L^p` for
    /// `p < q`; declared at `p = (1 + q)/2`.
    pub fn spike(grid: &TorusGrid, center: (usize, usize), amplitude: f64, q: f64) -> Result<Self> {
        if !(q > 1.0) || !amplitude.is_finite() {
            return Err(Error::Domain(format!("spike needs q > 1 and finite amplitude, got q = {q}")));
        }
        let h = grid.h();
        let values = (0..grid.len())
            .map(|idx| amplitude * grid.geodesic_dist(grid.node(idx), center).max(h).powf(-2.0 / q))
            .collect();
        Potential::new(GridField::new(grid, values)?, 0.5 * (1.0 + q))
    }

    /// Seeded random trigonometric polynomial with `|k|_∞ ≤ 3`, scaled to sup norm `amplitude`.
    pub fn smooth_random(grid: &TorusGrid, seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for k1 in -3i32..=3 {
            for k2 in -3i32..=3 {
                let w = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                terms.push((k1 as f64, k2 as f64, w * a, w * b));
            }
        }
        let raw = GridField::from_fn(grid, |x, y| {
            terms
                .iter()
                .map(|&(k1, k2, a, b)| {
                    let phase = k1 * x + k2 * y;
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        });
        let peak = norm_lp(&raw, f64::INFINITY).unwrap_or(1.0).max(f64::MIN_POSITIVE);
        Potential {
            field: raw.scale(amplitude / peak),
            declared_p: f64::INFINITY,
        }
    }

    /// Parses `const:<v>`, `negconst:<v>`, `spike[:<amplitude>[:<q>]]` or
    /// `random:<seed>[:<amplitude>]`, with an optional `builtin:` prefix.
    pub fn builtin(grid: &TorusGrid, spec: &str) -> Result<Self> {
        let body = spec.strip_prefix("builtin:").unwrap_or(spec);
        let mut parts = body.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize, default: Option<f64>| -> Result<f64> {
            match args.get(i) {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("bad number `{s}` in potential `{spec}`"))),
                None => default.ok_or_else(|| {
                    Error::Domain(format!("potential `{spec}` is missing argument {}", i + 1))
                }),
            }
        };
        let n = grid.n();
        match name {
            "const" => Ok(Potential::constant(grid, num(0, None)?)),
            "negconst" => Ok(Potential::constant(grid, -num(0, None)?)),
            "spike" => Potential::spike(grid, (n / 2, n / 2), num(0, Some(1.0))?, num(1, Some(2.0))?),
            "random" => {
                let seed = args
                    .first()
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::Domain(format!("potential `{spec}` needs an integer seed")))?;
                Ok(Potential::smooth_random(grid, seed, num(1, Some(1.0))?))
            }
            _ => Err(Error::Domain(format!("unknown builtin potential `{spec}`"))),
        }
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn declared_p(&self) -> f64 {
        self.declared_p
    }

    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }
}

/// Lowest eigenpairs of `-H_c + a`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// `L²`-orthonormal eigenfields.
    pub eigenfields: Vec<GridField>,
    /// Largest index with `μ_m ≤ 0`, or `-1`.
    pub m: i64,
    pub delta: f64,
    /// `‖(-H_c + a) e_i - μ_i e_i‖_{L²}`.
    pub residuals: Vec<f64>,
}

/// JSON summary of a [`Spectrum`] (the eigenfields are dumped separately).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub m: i64,
    pub delta: f64,
    pub residuals: Vec<f64>,
}

impl Spectrum {
    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            eigenvalues: self.eigenvalues.clone(),
            m: self.m,
            delta: self.delta,
            residuals: self.residuals.clone(),
        }
    }
}

fn check_grid(op: &AndersonOperator, a: &Potential) -> Result<()> {
    if a.grid() != op.grid() {
        return Err(Error::Shape("potential and operator live on different grids".into()));
    }
    Ok(())
}

/// `sup_x ∫_{d(x,y)<r} |ln d(x,y)| |a(y)| dy`, with `|ln(h/2)|` at `y = x`.
pub fn kato_modulus_log(a: &Potential, r: f64) -> Result<f64> {
    let grid = a.grid();
    let h = grid.h();
    if !(r > h && r < 1.0) {
        return Err(Error::Domain(format!("Kato radius must satisfy h < r < 1, got r = {r} with h = {h}")));
    }
    let kernel = GridField::from_vec_unchecked(
        grid,
        (0..grid.len())
            .map(|idx| {
                let d = grid.geodesic_dist((0, 0), grid.node(idx));
                if idx == 0 {
                    (0.5 * h).ln().abs()
                } else if d < r {
                    d.ln().abs()
                } else {
                    0.0
                }
            })
            .collect(),
    );
    Ok(convolve(&a.field.abs(), &kernel)?.max().max(0.0))
}

/// Nodes of the geometric time grid used by [`kato_modulus_heat`].
pub const KATO_TIME_NODES: usize = 16;

/// `sup_x ∫_0^T (e^{s H_c}|a|)(x) ds` by trapezoid on a geometric grid over
/// `[T/256, T]`, closed with the exact value `|a|` at `s = 0`.
pub fn kato_modulus_heat(op: &AndersonOperator, a: &Potential, t_max: f64) -> Result<f64> {
    check_grid(op, a)?;
    if !(t_max > 0.0 && t_max <= 1.0) {
        return Err(Error::Domain(format!("Kato time must lie in (0, 1], got {t_max}")));
    }
    let abs_a = a.field.abs();
    let last = (KATO_TIME_NODES - 1) as f64;
    let mut s_prev = 0.0;
    let mut f_prev = abs_a.clone();
    let mut acc = GridField::zeros(op.grid());
    for j in 0..KATO_TIME_NODES {
        let s = t_max * 256f64.powf(j as f64 / last - 1.0);
        let f = op.heat_apply(s, &abs_a)?;
        acc = acc.add(&f.add(&f_prev).scale(0.5 * (s - s_prev)));
        s_prev = s;
        f_prev = f;
    }
    Ok(acc.max().max(0.0))
}

/// `‖(-H_c + λ)⁻¹|a|‖_∞`.
pub fn resolvent_sup_norm(op: &AndersonOperator, a: &Potential, lambda: f64) -> Result<f64> {
    check_grid(op, a)?;
    norm_lp(&op.resolvent_solve(lambda, &a.field.abs())?, f64::INFINITY)
}

/// Smallest `m_η ≥ 0` with `⟨u, |a|u⟩ ≤ η‖u‖_ℰ² + m_η‖u‖²` on the grid.
pub fn form_bound_constant(op: &AndersonOperator, a: &Potential, eta: f64) -> Result<f64> {
    check_grid(op, a)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("η must be positive, got {eta}")));
    }
    // λ_max(|a| - η(-H_c)) = -λ_min(η(-Δ) + η(c - ξ) - |a|)
    let potential: Vec<f64> = op
        .shifted_potential()
        .iter()
        .zip(a.field.values())
        .map(|(s, v)| eta * s - v.abs())
        .collect();
    let form = Form {
        grid: op.grid(),
        kappa: eta,
        potential: &potential,
    };
    Ok((-form.lowest(1)?.values[0]).max(0.0))
}

/// Lowest `count` eigenpairs of `-H_c + a`, the index `m` and the gap `δ`.
pub fn eigendecompose(op: &AndersonOperator, a: &Potential, count: usize) -> Result<Spectrum> {
    check_grid(op, a)?;
    let grid = op.grid();
    if count == 0 || count > grid.len() {
        return Err(Error::Domain(format!(
            "eigenpair count must lie in 1..={}, got {count}",
            grid.len()
        )));
    }
    let potential = form_potential(op, a);
    let form = Form {
        grid,
        kappa: 1.0,
        potential: &potential,
    };
    let pairs = form.lowest(count)?;
    let m = pairs
        .values
        .iter()
        .rposition(|&mu| mu <= ZERO_EIGENVALUE_TOL)
        .map_or(-1, |i| i as i64);
    if m + 1 >= count as i64 && count < grid.len() {
        return Err(Error::Domain(format!(
            "all {count} computed eigenvalues are non-positive; request more to locate m"
        )));
    }
    let inv_h = 1.0 / grid.h();
    let eigenfields = pairs
        .vectors
        .iter()
        .map(|v| GridField::from_vec_unchecked(grid, v.iter().map(|x| x * inv_h).collect()))
        .collect();
    let mut spectrum = Spectrum {
        eigenvalues: pairs.values,
        eigenfields,
        m,
        delta: f64::NAN,
        residuals: pairs.residuals,
    };
    spectrum.delta = gap_delta(op, a, &spectrum)?;
    Ok(spectrum)
}

fn form_potential(op: &AndersonOperator, a: &Potential) -> Vec<f64> {
    op.shifted_potential()
        .iter()
        .zip(a.field.values())
        .map(|(s, v)| s + v)
        .collect()
}

/// `δ = min ⟨(-H_c + a)v, v⟩ / ⟨(-H_c)v, v⟩` over `v ⊥ e_0, …, e_m`.
pub fn gap_delta(op: &AndersonOperator, a: &Potential, spectrum: &Spectrum) -> Result<f64> {
    check_grid(op, a)?;
    let grid = op.grid();
    let m1 = (spectrum.m + 1) as usize;
    if spectrum.eigenfields.len() < m1 {
        return Err(Error::Domain("spectrum lacks the eigenfields e_0..e_m".into()));
    }
    let h = grid.h();
    let mut constraints: Vec<Vec<f64>> = Vec::with_capacity(m1);
    for e in &spectrum.eigenfields[..m1] {
        let mut v: Vec<f64> = e.values().iter().map(|x| x * h).collect();
        for _ in 0..2 {
            for c in &constraints {
                let s = dot(c, &v);
                v.iter_mut().zip(c).for_each(|(vi, ci)| *vi -= s * ci);
            }
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        constraints.push(v);
    }
    if constraints.len() + 1 > grid.len() {
        return Err(Error::Domain("no complement left above the negative eigenspace".into()));
    }
    let potential = form_potential(op, a);
    let form = Form {
        grid,
        kappa: 1.0,
        potential: &potential,
    };
    let apply_a = |x: &[f64]| form.apply(x);
    let apply_b = |x: &[f64]| op.neg_hc_values(x);
    let sigma = op.c().max(1.0);
    let precond = |x: &[f64]| grid.shifted_inverse_laplacian(x, sigma);
    let problem = EigenProblem {
        dim: grid.len(),
        a: &apply_a,
        b: Some(&apply_b),
        precond: &precond,
        constraints: &constraints,
    };
    let delta = lobpcg(&problem, 1, 4, 1e-11, 3000)?.values[0];
    if !(delta > 0.0) {
        return Err(Error::Inconsistency(format!(
            "gap δ = {delta:e} is not positive above the index m = {}",
            spectrum.m
        )));
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSample;
    use std::f64::consts::PI;

    fn zero_op(n: usize) -> AndersonOperator {
        AndersonOperator::new(NoiseSample::zero(&TorusGrid::new(n).unwrap())).unwrap()
    }

    #[test]
    fn laplacian_spectrum_and_delta() {
        let op = zero_op(8);
        let s = eigendecompose(&op, &Potential::constant(op.grid(), 0.0), 6).unwrap();
        let expected = [1.0, 2.0, 2.0, 2.0, 2.0, 3.0];
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(s.m, -1);
        assert!((s.delta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shifted_down_spectrum() {
        let op = zero_op(8);
        let s = eigendecompose(&op, &Potential::constant(op.grid(), -3.0), 12).unwrap();
        assert!((s.eigenvalues[0] + 2.0).abs() < 1e-10);
        // levels -2, -1 (×4), 0 (×4), 2: zero counts as non-positive.
        assert_eq!(s.m, 8);
        assert!(s.delta > 0.0);
    }

    #[test]
    fn constant_potential_examples() {
        let op = zero_op(16);
        let one = Potential::constant(op.grid(), 1.0);
        for lambda in [0.0, 1.0, 10.0] {
            let v = resolvent_sup_norm(&op, &one, lambda).unwrap();
            assert!((v - 1.0 / (1.0 + lambda)).abs() < 1e-10);
        }
        assert!((form_bound_constant(&op, &one, 0.5).unwrap() - 0.5).abs() < 1e-10);
        assert!(form_bound_constant(&op, &one, 1.0).unwrap() < 1e-10);
        for t in [1.0, 0.25] {
            let k = kato_modulus_heat(&op, &one, t).unwrap();
            assert!((k - (1.0 - (-t).exp())).abs() < 2e-3 * t, "T={t}: {k}");
        }
    }

    #[test]
    fn log_modulus_matches_radial_integral() {
        let g = TorusGrid::new(256).unwrap();
        let r: f64 = 0.1;
        let exact = PI * r * r * (0.5 - r.ln());
        let got = kato_modulus_log(&Potential::constant(&g, 1.0), r).unwrap();
        assert!((got / exact - 1.0).abs() < 0.1, "{got} vs {exact}");
        assert!(kato_modulus_log(&Potential::constant(&g, 1.0), 0.01).is_err());
    }

    #[test]
    fn builtin_parsing() {
        let g = TorusGrid::new(16).unwrap();
        assert_eq!(Potential::builtin(&g, "builtin:const:2").unwrap().field().at(3, 3), 2.0);
        let s = Potential::builtin(&g, "spike").unwrap();
        assert_eq!(s.declared_p(), 1.5);
        assert!((s.field().at(8, 8) - g.h().powf(-1.0)).abs() < 1e-12);
        let r = Potential::builtin(&g, "random:4:2").unwrap();
        assert!((norm_lp(r.field(), f64::INFINITY).unwrap() - 2.0).abs() < 1e-12);
        assert!(Potential::builtin(&g, "bogus").is_err());
    }
}
