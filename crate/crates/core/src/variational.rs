//! Energy functional `Φ(u) = ½‖u‖_ℰ² + ∫(½ a u² - F(x, u))` for
//! `-H_c u + a u = f(x, u)`, and searches for its critical points.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};
use crate::linalg::{dot, minres_run, norm};
use crate::operator::AndersonOperator;
use crate::spectral::{Potential, Spectrum};

/// Solutions with smaller `L²` norm are treated as the trivial solution.
pub const NONTRIVIAL_L2: f64 = 1e-3;

type PointFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// A nonlinearity `f(x, z)` with derivative and antiderivative, plus the
/// exponents it is claimed to satisfy: `|f| ≲ 1 + |z|^{ℓ-1}` and
/// `γ F ≤ z f` for `|z| ≥ k`. The spatial argument is a node index.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    f: PointFn,
    dfdz: PointFn,
    antiderivative: PointFn,
    pub ell: f64,
    pub gamma: f64,
    pub k: f64,
    pub odd: bool,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("ell", &self.ell)
            .field("gamma", &self.gamma)
            .field("k", &self.k)
            .field("odd", &self.odd)
            .finish()
    }
}

impl Nonlinearity {
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        dfdz: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        antiderivative: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        ell: f64,
        gamma: f64,
        k: f64,
        odd: bool,
    ) -> Self {
        Nonlinearity {
            name: name.into(),
            f: Arc::new(f),
            dfdz: Arc::new(dfdz),
            antiderivative: Arc::new(antiderivative),
            ell,
            gamma,
            k,
            odd,
        }
    }

    /// `f(z) = z³`.
    pub fn pow3() -> Self {
        Self::custom(
            "pow3",
            |_, z| z * z * z,
            |_, z| 3.0 * z * z,
            |_, z| 0.25 * z.powi(4),
            4.0,
            4.0,
            1.0,
            true,
        )
    }

    /// `f(z) = z|z|^e` for `e > 0`; growth exponent and `γ` are both `e + 2`.
    pub fn pow(e: f64) -> Result<Self> {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::Domain(format!("pow nonlinearity needs exponent > 0, got {e}")));
        }
        Ok(Self::custom(
            format!("pow:{e}"),
            move |_, z| z * z.abs().powf(e),
            move |_, z| (e + 1.0) * z.abs().powf(e),
            move |_, z| z.abs().powf(e + 2.0) / (e + 2.0),
            e + 2.0,
            e + 2.0,
            1.0,
            true,
        ))
    }

    /// Piecewise-linear `f` through `(z_i, f_i)` (strictly increasing `z_i`
    /// with `0` among the nodes), extended linearly beyond the table, with
    /// `F` integrated exactly from 0.
    pub fn tabulated(z: Vec<f64>, values: Vec<f64>, ell: f64, gamma: f64, k: f64) -> Result<Self> {
        if z.len() != values.len() || z.len() < 2 {
            return Err(Error::Shape("tabulated nonlinearity needs matching tables of length >= 2".into()));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("table nodes must increase strictly and values be finite".into()));
        }
        let zero = z
            .iter()
            .position(|&x| x == 0.0)
            .ok_or_else(|| Error::Domain("table must contain the node z = 0".into()))?;
        // Cumulative integral at each node, measured from 0.
        let mut cumulative = vec![0.0; z.len()];
        for i in zero + 1..z.len() {
            cumulative[i] = cumulative[i - 1] + 0.5 * (values[i] + values[i - 1]) * (z[i] - z[i - 1]);
        }
        for i in (0..zero).rev() {
            cumulative[i] = cumulative[i + 1] - 0.5 * (values[i] + values[i + 1]) * (z[i + 1] - z[i]);
        }
        let odd = z.len() % 2 == 1
            && (0..z.len()).all(|i| {
                let j = z.len() - 1 - i;
                (z[i] + z[j]).abs() <= 1e-12 * z[j].abs().max(1.0)
                    && (values[i] + values[j]).abs() <= 1e-12 * values[j].abs().max(1.0)
            });
        let table = Arc::new((z, values, cumulative));
        let segment = {
            let table = table.clone();
            move |zq: f64| -> usize {
                let zs = &table.0;
                match zs.partition_point(|&x| x <= zq) {
                    0 => 0,
                    p if p >= zs.len() => zs.len() - 2,
                    p => p - 1,
                }
            }
        };
        let (t1, s1) = (table.clone(), segment.clone());
        let (t2, s2) = (table.clone(), segment.clone());
        let (t3, s3) = (table, segment);
        Ok(Self::custom(
            "tabulated",
            move |_, zq| {
                let i = s1(zq);
                let (z, f, _) = &*t1;
                f[i] + (f[i + 1] - f[i]) * (zq - z[i]) / (z[i + 1] - z[i])
            },
            move |_, zq| {
                let i = s2(zq);
                let (z, f, _) = &*t2;
                (f[i + 1] - f[i]) / (z[i + 1] - z[i])
            },
            move |_, zq| {
                let i = s3(zq);
                let (z, f, c) = &*t3;
                let slope = (f[i + 1] - f[i]) / (z[i + 1] - z[i]);
                let dz = zq - z[i];
                c[i] + f[i] * dz + 0.5 * slope * dz * dz
            },
            ell,
            gamma,
            k,
            odd,
        ))
    }

    /// Parses `pow3` or `pow:<e>`.
    pub fn builtin(spec: &str) -> Result<Self> {
        match spec {
            "pow3" => Ok(Self::pow3()),
            s => match s.strip_prefix("pow:") {
                Some(e) => Self::pow(
                    e.parse()
                        .map_err(|_| Error::Domain(format!("bad exponent in nonlinearity `{spec}`")))?,
                ),
                None => Err(Error::Domain(format!("unknown nonlinearity `{spec}`"))),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self, x: usize, z: f64) -> f64 {
        (self.f)(x, z)
    }

    pub fn dfdz(&self, x: usize, z: f64) -> f64 {
        (self.dfdz)(x, z)
    }

    /// `F(x, z) = ∫_0^z f(x, r) dr`.
    pub fn antiderivative(&self, x: usize, z: f64) -> f64 {
        (self.antiderivative)(x, z)
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &z)| self.f(i, z)).collect()
    }

    fn apply_derivative(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &z)| self.dfdz(i, z)).collect()
    }
}

/// Constants found by [`check_assumption_a`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Smallest `C` with `|f| ≤ C(1 + |z|^{ℓ-1})` on the samples.
    pub c_f: f64,
    /// Smallest `C'` with `|∂_z f| ≤ C'(1 + |z|^{ℓ-2})` on the samples.
    pub c_f_prime: f64,
    /// `F ≥ c₁|z|^γ - c₂` on the samples.
    pub c1: f64,
    pub c2: f64,
    /// Largest `|f(x, z)/z|` at `|z| = 1e-6`.
    pub small_z_ratio: f64,
    pub samples: usize,
}

/// Checks the structural conditions on `f` over the sample points and
/// reports the constants; any violation is an error naming a witness.
pub fn check_assumption_a(
    nl: &Nonlinearity,
    z_samples: &[f64],
    x_samples: &[usize],
) -> Result<AssumptionReport> {
    let z_max = z_samples.iter().fold(0.0_f64, |m, z| m.max(z.abs()));
    if x_samples.is_empty() || z_max < 10.0 * nl.k {
        return Err(Error::Domain(format!(
            "samples must cover |z| up to 10k = {}, got {z_max}",
            10.0 * nl.k
        )));
    }
    if !(nl.ell > 2.0 && nl.gamma > 2.0 && nl.k > 0.0) {
        return Err(Error::Domain(format!(
            "need ℓ > 2, γ > 2, k > 0; got ℓ = {}, γ = {}, k = {}",
            nl.ell, nl.gamma, nl.k
        )));
    }
    let mut violations = Vec::new();
    let mut c_f = 0.0_f64;
    let mut c_f_prime = 0.0_f64;
    let mut c1 = f64::INFINITY;
    let mut small_z_ratio = 0.0_f64;
    for &x in x_samples {
        let f0 = nl.antiderivative(x, 0.0);
        if f0.abs() > 1e-12 {
            violations.push(format!("F({x}, 0) = {f0:e} is not zero"));
        }
        for zs in [1e-6, -1e-6] {
            small_z_ratio = small_z_ratio.max((nl.f(x, zs) / zs).abs());
        }
        for &z in z_samples {
            let f = nl.f(x, z);
            let big_f = nl.antiderivative(x, z);
            let az = z.abs();
            c_f = c_f.max(f.abs() / (1.0 + az.powf(nl.ell - 1.0)));
            c_f_prime = c_f_prime.max(nl.dfdz(x, z).abs() / (1.0 + az.powf(nl.ell - 2.0)));
            let scale = 1e-10 * (1.0 + big_f.abs() + (z * f).abs());
            if big_f < -scale {
                violations.push(format!("F({x}, {z}) = {big_f:e} < 0"));
            }
            if az >= nl.k {
                if nl.gamma * big_f > z * f + scale {
                    violations.push(format!(
                        "γF = {:e} exceeds z f = {:e} at (x, z) = ({x}, {z})",
                        nl.gamma * big_f,
                        z * f
                    ));
                }
                c1 = c1.min(big_f / az.powf(nl.gamma));
            }
            let quad = simpson(|r| nl.f(x, r), z, 2000);
            if (quad - big_f).abs() > 1e-8 * big_f.abs().max(1.0) {
                violations.push(format!("F({x}, {z}) = {big_f:e} differs from ∫f = {quad:e}"));
            }
            if nl.odd && (nl.f(x, -z) + f).abs() > 1e-12 * f.abs().max(1.0) {
                violations.push(format!("f is declared odd but f({x}, -{z}) != -f({x}, {z})"));
            }
        }
    }
    if small_z_ratio > 1e-2 {
        violations.push(format!("f(x, z)/z does not vanish at 0 (ratio {small_z_ratio:e} at |z| = 1e-6)"));
    }
    if !(c1 > 0.0) {
        violations.push(format!("no c₁ > 0 with F ≥ c₁|z|^γ - c₂ (best {c1:e})"));
    }
    if !violations.is_empty() {
        violations.truncate(20);
        return Err(Error::Domain(format!("assumption violated: {}", violations.join("; "))));
    }
    let c2 = x_samples
        .iter()
        .flat_map(|&x| z_samples.iter().map(move |&z| (x, z)))
        .map(|(x, z)| c1 * z.abs().powf(nl.gamma) - nl.antiderivative(x, z))
        .fold(0.0_f64, f64::max);
    Ok(AssumptionReport {
        c_f,
        c_f_prime,
        c1,
        c2,
        small_z_ratio,
        samples: x_samples.len() * z_samples.len(),
    })
}

fn simpson(f: impl Fn(f64) -> f64, z: f64, intervals: usize) -> f64 {
    let step = z / intervals as f64;
    let mut acc = f(0.0) + f(z);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * step);
    }
    acc * step / 3.0
}

/// `-H_c u + a u = f(x, u)` on a shared grid.
pub struct Problem {
    op: AndersonOperator,
    a: Potential,
    nl: Nonlinearity,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("op", &self.op)
            .field("nl", &self.nl)
            .finish()
    }
}

impl Problem {
    pub fn new(op: AndersonOperator, a: Potential, nl: Nonlinearity) -> Result<Self> {
        if op.grid() != a.grid() {
            return Err(Error::Shape("operator and potential live on different grids".into()));
        }
        Ok(Problem { op, a, nl })
    }

    pub fn op(&self) -> &AndersonOperator {
        &self.op
    }

    pub fn potential(&self) -> &Potential {
        &self.a
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn grid(&self) -> &TorusGrid {
        self.op.grid()
    }

    fn check(&self, u: &GridField) -> Result<()> {
        if u.grid() != self.grid() {
            return Err(Error::Shape("field and problem live on different grids".into()));
        }
        Ok(())
    }

    fn energy_values(&self, u: &[f64]) -> Result<f64> {
        let w = self.grid().cell_measure();
        let quad = dot(&self.op.neg_hc_values(u), u);
        let rest: f64 = u
            .iter()
            .zip(self.a.field().values())
            .enumerate()
            .map(|(i, (&z, &a))| 0.5 * a * z * z - self.nl.antiderivative(i, z))
            .sum();
        let phi = w * (0.5 * quad + rest);
        if !phi.is_finite() {
            return Err(Error::Overflow("energy is not finite for this field".into()));
        }
        Ok(phi)
    }

    /// `(-H_c + a) u - f(u)` on raw values.
    fn residual_values(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.op.neg_hc_values(u);
        let f = self.nl.apply(u);
        for (((ri, &ui), &ai), fi) in r.iter_mut().zip(u).zip(self.a.field().values()).zip(f) {
            *ri += ai * ui - fi;
        }
        r
    }

    fn l2(&self, v: &[f64]) -> f64 {
        self.grid().h() * norm(v)
    }

    /// Residual `L²` norm and `ℰ`-norm of the `ℰ`-gradient.
    fn residual_norms(&self, u: &[f64]) -> Result<(f64, f64)> {
        let r = self.residual_values(u);
        let g = self.op.inverse_neg_hc(&r)?;
        let w = self.grid().cell_measure();
        Ok((self.l2(&r), (w * dot(&r, &g)).max(0.0).sqrt()))
    }

    /// `‖r‖` in the dual of `ℰ`.
    fn dual_norm(&self, r: &[f64]) -> Result<f64> {
        let g = self.op.inverse_neg_hc(r)?;
        Ok((self.grid().cell_measure() * dot(r, &g)).max(0.0).sqrt())
    }

    fn energy_norm_values(&self, u: &[f64]) -> f64 {
        (self.grid().cell_measure() * dot(&self.op.neg_hc_values(u), u)).max(0.0).sqrt()
    }
}

pub fn energy(problem: &Problem, u: &GridField) -> Result<f64> {
    problem.check(u)?;
    problem.energy_values(u.values())
}

/// `L²` representative `(-H_c + a)u - f(u)` of `Φ'(u)` and its `ℰ`-Riesz
/// representative `(-H_c)⁻¹` of that.
pub fn energy_gradient(problem: &Problem, u: &GridField) -> Result<(GridField, GridField)> {
    problem.check(u)?;
    let grid = problem.grid();
    let r = problem.residual_values(u.values());
    let g = problem.op.inverse_neg_hc(&r)?;
    Ok((GridField::new(grid, r)?, GridField::new(grid, g)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phi: f64,
    /// `ℰ`-norm of the `ℰ`-gradient.
    pub grad_norm: f64,
    pub u_norm_e: f64,
}

/// Evidence of the linking geometry around the solution search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryWitness {
    /// Radius of the sphere in `ℰ_{>m}` on which sampled `Φ` stayed positive.
    pub r1: f64,
    pub min_phi_on_sphere: f64,
    pub samples: usize,
    /// `ℰ`-norm of a point along `e_{m+1}` where `Φ < 0`.
    pub r2: f64,
    pub phi_at_r2: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: GridField,
    pub phi: f64,
    pub residual_l2: f64,
    pub grad_e_norm: f64,
    pub iterations: usize,
    pub method: String,
    pub trace: Vec<TraceEntry>,
    pub seed: Option<u64>,
    /// One line per deflation or restart event.
    pub history: Vec<String>,
    pub converged: bool,
    /// Set by the Picard baseline when iterates blow up.
    pub diverged: bool,
    pub witness: Option<GeometryWitness>,
}

/// The scalar part of a [`SolveResult`], as written to `result_<i>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub phi: f64,
    pub residual_l2: f64,
    pub grad_e_norm: f64,
    pub iterations: usize,
    pub method: String,
    pub u_norm_l2: f64,
    pub converged: bool,
    pub diverged: bool,
    pub seed: Option<u64>,
    pub history: Vec<String>,
    pub witness: Option<GeometryWitness>,
}

impl SolveResult {
    pub fn summary(&self) -> ResultSummary {
        ResultSummary {
            phi: self.phi,
            residual_l2: self.residual_l2,
            grad_e_norm: self.grad_e_norm,
            iterations: self.iterations,
            method: self.method.clone(),
            u_norm_l2: self.u.l2(),
            converged: self.converged,
            diverged: self.diverged,
            seed: self.seed,
            history: self.history.clone(),
            witness: self.witness.clone(),
        }
    }

    /// `residual_l2 ≤ tol (1 + ‖u‖_{L²})`.
    pub fn passes(&self, tol: f64) -> bool {
        self.residual_l2 <= tol * (1.0 + self.u.l2())
    }
}

fn finish(
    problem: &Problem,
    u: Vec<f64>,
    method: &str,
    iterations: usize,
    trace: Vec<TraceEntry>,
) -> Result<SolveResult> {
    let (residual_l2, grad_e_norm) = problem.residual_norms(&u)?;
    let phi = problem.energy_values(&u)?;
    Ok(SolveResult {
        u: GridField::new(problem.grid(), u)?,
        phi,
        residual_l2,
        grad_e_norm,
        iterations,
        method: method.into(),
        trace,
        seed: None,
        history: Vec::new(),
        converged: false,
        diverged: false,
        witness: None,
    })
}

/// Iterates `u ← (-H_c)⁻¹(f(u) - a u)`; stops once `residual_l2 ≤ tol`, or
/// flags divergence when `‖u‖_{L²}` passes `1e8`.
pub fn picard_baseline(problem: &Problem, u0: &GridField, max_iter: usize, tol: f64) -> Result<SolveResult> {
    problem.check(u0)?;
    let mut u = u0.values().to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut it = 0;
    loop {
        let size = problem.l2(&u);
        if !(size <= 1e8) {
            diverged = true;
            break;
        }
        let (res, grad) = problem.residual_norms(&u)?;
        trace.push(TraceEntry {
            phi: problem.energy_values(&u).unwrap_or(f64::INFINITY),
            grad_norm: grad,
            u_norm_e: problem.energy_norm_values(&u),
        });
        if res <= tol {
            converged = true;
            break;
        }
        if it == max_iter {
            break;
        }
        let rhs: Vec<f64> = problem
            .nl
            .apply(&u)
            .iter()
            .zip(&u)
            .zip(problem.a.field().values())
            .map(|((f, z), a)| f - a * z)
            .collect();
        u = problem.op.inverse_neg_hc(&rhs)?;
        it += 1;
    }
    if diverged {
        // Report the last iterate as is; residual norms would overflow.
        let field = GridField::from_vec_unchecked(problem.grid(), u.iter().map(|v| v.clamp(-1e300, 1e300)).collect());
        return Ok(SolveResult {
            phi: f64::NAN,
            residual_l2: f64::INFINITY,
            grad_e_norm: f64::INFINITY,
            u: field,
            iterations: it,
            method: "picard".into(),
            trace,
            seed: None,
            history: Vec::new(),
            converged: false,
            diverged: true,
            witness: None,
        });
    }
    let mut out = finish(problem, u, "picard", it, trace)?;
    out.converged = converged;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountainPassParams {
    /// Start radius in `ℰ` along `e_{m+1}` when `m ≥ 0`; defaults to the
    /// maximizer of `Φ` on that ray.
    pub r1: Option<f64>,
    pub path_points: usize,
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seeds the perturbations and the geometry samples.
    pub seed: u64,
    /// Radius in `L²` of the deflation around known solutions.
    pub rho_defl: f64,
}

impl Default for MountainPassParams {
    fn default() -> Self {
        MountainPassParams {
            r1: None,
            path_points: 41,
            step: 0.1,
            tol: 1e-6,
            max_iter: 5000,
            seed: 0,
            rho_defl: 0.5,
        }
    }
}

const NEWTON_MAX_ITER: usize = 60;
const PATH_STALL_WINDOW: usize = 50;
const MINIMAX_MAX_ITER: usize = 2000;
const MAX_RESTARTS: usize = 10;

fn spectrum_grid_check(problem: &Problem, spectrum: &Spectrum) -> Result<()> {
    if spectrum.eigenfields.iter().any(|e| e.grid() != problem.grid()) {
        return Err(Error::Shape("spectrum computed on a different grid".into()));
    }
    if spectrum.eigenfields.len() < (spectrum.m + 2) as usize {
        return Err(Error::Domain(format!(
            "spectrum must include e_(m+1) (m = {}, {} pairs computed)",
            spectrum.m,
            spectrum.eigenfields.len()
        )));
    }
    Ok(())
}

/// Finds a nontrivial critical point with `Φ > 0`: path deformation from
/// `0` to a point with `Φ < 0` when `m = -1`, otherwise Newton with
/// deflation of `0` started on the `e_{m+1}` ray. Restarts after a failed
/// Newton run first settle on a linking saddle over `ℰ_{≤m} ⊕ R⁺v`.
pub fn mountain_pass_solve(
    problem: &Problem,
    spectrum: &Spectrum,
    params: &MountainPassParams,
) -> Result<SolveResult> {
    spectrum_grid_check(problem, spectrum)?;
    if params.path_points < 3 || !(params.step > 0.0) || !(params.tol > 0.0) {
        return Err(Error::Domain("need path_points >= 3, step > 0, tol > 0".into()));
    }
    let direction = &spectrum.eigenfields[(spectrum.m + 1) as usize];
    let dir = direction.values().to_vec();
    let witness = geometry_witness(problem, spectrum, params.seed)?;
    let newton = Newton {
        problem,
        tol: params.tol,
        rho: params.rho_defl,
    };
    let zero = vec![0.0; problem.grid().len()];

    if spectrum.m < 0 {
        let mut out = path_search(problem, &dir, params, &newton, &zero)?;
        out.witness = Some(witness);
        out.seed = Some(params.seed);
        return Ok(out);
    }

    let e_norm = problem.energy_norm_values(&dir);
    let radius = match params.r1 {
        Some(r) => r,
        None => ray_maximizer(problem, &dir)? * e_norm,
    };
    let mut history = Vec::new();
    for restart in 0..=MAX_RESTARTS {
        let seed = params.seed.wrapping_add(restart as u64);
        let mut u0: Vec<f64> = dir.iter().map(|v| radius * v / e_norm).collect();
        let bump = smooth_random(problem.grid(), seed);
        let scale = 0.05 * problem.l2(&u0) / problem.l2(&bump).max(f64::MIN_POSITIVE);
        u0.iter_mut().zip(&bump).for_each(|(u, b)| *u += scale * b);
        let mut trace = Vec::new();
        if restart > 0 {
            // Linking saddle: maximize over E_{≤m} ⊕ R⁺v, descend in v.
            let support: Vec<&[f64]> = spectrum.eigenfields[..=spectrum.m as usize]
                .iter()
                .map(|e| e.values())
                .collect();
            let minimax = Minimax::new(problem, &support)?;
            match minimax.saddle(u0, params.tol, &mut trace)? {
                Some(approx) => u0 = approx,
                None => {
                    history.push(format!("restart {restart}: minimax search did not settle"));
                    continue;
                }
            }
        }
        match newton.run(u0, std::slice::from_ref(&zero), &mut trace)? {
            Some((u, its)) => {
                let phi = problem.energy_values(&u)?;
                if problem.l2(&u) >= NONTRIVIAL_L2 && phi > 0.0 {
                    let mut out = finish(problem, u, "deflated-newton", its, trace)?;
                    out.converged = out.passes(params.tol);
                    history.push(format!("restart {restart}: converged with Φ = {phi:.6e}"));
                    out.history = history;
                    out.witness = Some(witness);
                    out.seed = Some(seed);
                    return Ok(out);
                }
                history.push(format!("restart {restart}: rejected critical point with Φ = {phi:.6e}"));
            }
            None => history.push(format!("restart {restart}: Newton did not converge")),
        }
    }
    Err(Error::NotFound(format!(
        "no nontrivial critical point with Φ > 0 after {MAX_RESTARTS} restarts ({})",
        history.join("; ")
    )))
}

fn path_search(
    problem: &Problem,
    dir: &[f64],
    params: &MountainPassParams,
    newton: &Newton<'_>,
    zero: &[f64],
) -> Result<SolveResult> {
    let grid_len = problem.grid().len();
    // Endpoint with Φ < 0 along the ray.
    let mut s = ray_maximizer(problem, dir)?;
    let mut endpoint: Vec<f64>;
    let mut tries = 0;
    loop {
        s *= 2.0;
        endpoint = dir.iter().map(|v| s * v).collect();
        if problem.energy_values(&endpoint)? < 0.0 {
            break;
        }
        tries += 1;
        if tries > 60 {
            return Err(Error::NotFound("Φ stays non-negative along the first eigenfield".into()));
        }
    }
    let count = params.path_points;
    let mut path: Vec<Vec<f64>> = (0..count)
        .map(|j| {
            let t = j as f64 / (count - 1) as f64;
            endpoint.iter().map(|v| t * v).collect()
        })
        .collect();
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut peak: Vec<f64> = vec![0.0; grid_len];
    while iterations < params.max_iter {
        let energies: Vec<f64> = path
            .iter()
            .map(|p| problem.energy_values(p))
            .collect::<Result<_>>()?;
        let k = (1..count - 1)
            .max_by(|&a, &b| energies[a].total_cmp(&energies[b]))
            .unwrap_or(1);
        peak = path[k].clone();
        let r = problem.residual_values(&peak);
        let g = problem.op.inverse_neg_hc(&r)?;
        let gnorm = (problem.grid().cell_measure() * dot(&r, &g)).max(0.0).sqrt();
        let u_norm = problem.energy_norm_values(&peak);
        trace.push(TraceEntry {
            phi: energies[k],
            grad_norm: gnorm,
            u_norm_e: u_norm,
        });
        iterations += 1;
        if gnorm <= params.tol * (1.0 + u_norm) {
            history.push(format!("path phase converged at iteration {iterations} (gradient {gnorm:.3e})"));
            break;
        }
        // The discrete maximum sits at a node, so the gradient keeps a
        // tangential part of the size of the node spacing; stop once the
        // peak level stops moving and let Newton finish.
        if trace.len() > PATH_STALL_WINDOW {
            let before = trace[trace.len() - 1 - PATH_STALL_WINDOW].phi;
            if before - energies[k] <= 1e-10 * (1.0 + energies[k].abs()) {
                history.push(format!("path phase stalled at iteration {iterations} (gradient {gnorm:.3e})"));
                break;
            }
        }
        let mut alpha = params.step;
        let mut moved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = peak.iter().zip(&g).map(|(p, gi)| p - alpha * gi).collect();
            if problem.energy_values(&cand)? < energies[k] {
                path[k] = cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            history.push(format!("path phase stalled at iteration {iterations}"));
            break;
        }
        path = reparametrize(&path);
    }
    let mut newton_trace = Vec::new();
    let found = newton.run(peak.clone(), &[zero.to_vec()], &mut newton_trace)?;
    trace.extend(newton_trace);
    let u = match found {
        Some((u, its)) => {
            iterations += its;
            history.push(format!("newton refinement converged in {its} steps"));
            u
        }
        None => {
            return Err(Error::NotFound(format!(
                "Newton refinement from the path maximum failed after {iterations} path iterations"
            )))
        }
    };
    let phi = problem.energy_values(&u)?;
    if problem.l2(&u) < NONTRIVIAL_L2 || !(phi > 0.0) {
        return Err(Error::NotFound(format!(
            "search ended at a critical point with ‖u‖ = {:.3e}, Φ = {phi:.3e}",
            problem.l2(&u)
        )));
    }
    let mut out = finish(problem, u, "mountain-pass-path", iterations, trace)?;
    out.converged = out.passes(params.tol);
    out.history = history;
    Ok(out)
}

/// Resamples a polyline at equal `ℓ²` arclength, keeping the endpoints.
fn reparametrize(path: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let count = path.len();
    let mut cumulative = vec![0.0; count];
    for j in 1..count {
        let d: f64 = path[j].iter().zip(&path[j - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        cumulative[j] = cumulative[j - 1] + d;
    }
    let total = cumulative[count - 1];
    if total == 0.0 {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for j in 0..count {
        let target = total * j as f64 / (count - 1) as f64;
        while seg + 2 < count && cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { ((target - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[seg].iter().zip(&path[seg + 1]).map(|(a, b)| a + t * (b - a)).collect());
    }
    out[0] = path[0].clone();
    out[count - 1] = path[count - 1].clone();
    out
}

/// The `s > 0` maximizing `Φ(s e)`.
fn ray_maximizer(problem: &Problem, e: &[f64]) -> Result<f64> {
    let phi = |s: f64| -> Result<f64> {
        let u: Vec<f64> = e.iter().map(|v| s * v).collect();
        problem.energy_values(&u)
    };
    let mut s = 1e-3 / problem.energy_norm_values(e).max(f64::MIN_POSITIVE);
    let mut prev = phi(s)?;
    let mut grow = 0;
    loop {
        let next = phi(2.0 * s)?;
        if next < prev {
            break;
        }
        prev = next;
        s *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NotFound("Φ does not turn down along the search ray".into()));
        }
    }
    // Maximum lies in [s/2, 2s]; golden section.
    let (mut lo, mut hi) = (0.5 * s, 2.0 * s);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = phi(x1)?;
    let mut f2 = phi(x2)?;
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = phi(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = phi(x1)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Seeded random trigonometric field with `|k|_∞ ≤ 4`.
fn smooth_random(grid: &TorusGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = grid.n();
    let mut coeffs = Vec::new();
    for k1 in -4i64..=4 {
        for k2 in -4i64..=4 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            coeffs.push((k1, k2, a, b));
        }
    }
    (0..grid.len())
        .map(|idx| {
            let (i, j) = grid.node(idx);
            coeffs
                .iter()
                .map(|&(k1, k2, a, b)| {
                    let phase = 2.0 * std::f64::consts::PI * ((k1 * i as i64 + k2 * j as i64) as f64) / n as f64;
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
        .collect()
}

const GEOMETRY_SAMPLES: usize = 100;

fn geometry_witness(problem: &Problem, spectrum: &Spectrum, seed: u64) -> Result<GeometryWitness> {
    let m1 = (spectrum.m + 1) as usize;
    let h2 = problem.grid().cell_measure();
    let basis: Vec<&[f64]> = spectrum.eigenfields[..m1].iter().map(|e| e.values()).collect();
    let mut directions = Vec::with_capacity(GEOMETRY_SAMPLES);
    for s in 0..GEOMETRY_SAMPLES {
        let mut v = smooth_random(problem.grid(), seed ^ 0x9e37_79b9_7f4a_7c15 ^ s as u64);
        for _ in 0..2 {
            for e in &basis {
                let c = h2 * dot(e, &v);
                v.iter_mut().zip(e.iter()).for_each(|(vi, ei)| *vi -= c * ei);
            }
        }
        let en = problem.energy_norm_values(&v);
        v.iter_mut().for_each(|x| *x /= en);
        directions.push(v);
    }
    let mut r1 = 1.0;
    let mut min_phi = f64::NEG_INFINITY;
    for _ in 0..60 {
        min_phi = directions
            .iter()
            .map(|v| {
                let u: Vec<f64> = v.iter().map(|x| r1 * x).collect();
                problem.energy_values(&u)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_phi > 0.0 {
            break;
        }
        r1 *= 0.5;
    }
    if !(min_phi > 0.0) {
        return Err(Error::NotFound("no sphere in ℰ_{>m} with Φ > 0 found".into()));
    }
    let e = spectrum.eigenfields[m1].values();
    let mut s = ray_maximizer(problem, e)?;
    let mut phi_r2;
    let mut tries = 0;
    loop {
        s *= 2.0;
        let u: Vec<f64> = e.iter().map(|v| s * v).collect();
        phi_r2 = problem.energy_values(&u)?;
        if phi_r2 < 0.0 {
            break;
        }
        tries += 1;
        if tries > 60 {
            return Err(Error::NotFound("Φ stays non-negative along e_(m+1)".into()));
        }
    }
    Ok(GeometryWitness {
        r1,
        min_phi_on_sphere: min_phi,
        samples: GEOMETRY_SAMPLES,
        r2: s * problem.energy_norm_values(e),
        phi_at_r2: phi_r2,
    })
}

/// Newton's method on the residual with multiplicative deflation
/// `Π (1 + max(0, 1/‖u - u_j‖² - 1/ρ²))` around known roots.
struct Newton<'a> {
    problem: &'a Problem,
    tol: f64,
    rho: f64,
}

impl Newton<'_> {
    fn run(
        &self,
        mut u: Vec<f64>,
        deflated: &[Vec<f64>],
        trace: &mut Vec<TraceEntry>,
    ) -> Result<Option<(Vec<f64>, usize)>> {
        let p = self.problem;
        let grid = p.grid();
        let h = grid.h();
        let a = p.a.field().values();
        let shifted = p.op.shifted_potential();
        let sigma = (p.op.c() + p.a.field().mean().max(0.0)).max(1.0);
        let inv_rho2 = 1.0 / (self.rho * self.rho);
        let deflation = |u: &[f64]| -> (f64, Vec<f64>) {
            // M(u) and ∇ln M(u) in ℓ² coordinates.
            let mut m = 1.0;
            let mut grad = vec![0.0; u.len()];
            for root in deflated {
                let diff: Vec<f64> = u.iter().zip(root).map(|(x, y)| x - y).collect();
                let d2 = h * h * dot(&diff, &diff);
                let extra = 1.0 / d2 - inv_rho2;
                if extra > 0.0 {
                    let mj = 1.0 + extra;
                    m *= mj;
                    let coef = -2.0 * h * h / (d2 * d2 * mj);
                    grad.iter_mut().zip(&diff).for_each(|(g, d)| *g += coef * d);
                }
            }
            (m, grad)
        };
        let mut r = p.residual_values(&u);
        let mut merit = deflation(&u).0 * p.dual_norm(&r)?;
        for it in 0..NEWTON_MAX_ITER {
            if !u.iter().all(|v| v.is_finite()) {
                return Ok(None);
            }
            let res = p.l2(&r);
            let size = p.l2(&u);
            let g = p.op.inverse_neg_hc(&r)?;
            trace.push(TraceEntry {
                phi: p.energy_values(&u).unwrap_or(f64::NAN),
                grad_norm: (grid.cell_measure() * dot(&r, &g)).max(0.0).sqrt(),
                u_norm_e: p.energy_norm_values(&u),
            });
            if res <= 1e-3 * self.tol * (1.0 + size) {
                return Ok(Some((u, it)));
            }
            let fp = p.nl.apply_derivative(&u);
            let diag: Vec<f64> = shifted
                .iter()
                .zip(a)
                .zip(&fp)
                .map(|((s, ai), d)| s + ai - d)
                .collect();
            let jac = |x: &[f64]| {
                let mut out = grid.laplacian_values(x);
                for ((o, d), xi) in out.iter_mut().zip(&diag).zip(x) {
                    *o = -*o + d * xi;
                }
                out
            };
            let precond = |x: &[f64]| grid.shifted_inverse_laplacian(x, sigma);
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let (delta, _, _) = minres_run(&jac, &precond, &neg_r, 1e-11, 4 * grid.len().max(500))?;
            let (_, grad_ln_m) = deflation(&u);
            let denom = 1.0 - dot(&grad_ln_m, &delta);
            let tau = if denom.abs() > 1e-12 { 1.0 / denom } else { 1.0 };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let cand: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + lambda * tau * d).collect();
                let rc = p.residual_values(&cand);
                let mc = deflation(&cand).0 * p.dual_norm(&rc)?;
                if mc.is_finite() && mc < merit {
                    u = cand;
                    r = rc;
                    merit = mc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                let res = p.l2(&r);
                if res <= self.tol * (1.0 + p.l2(&u)) {
                    return Ok(Some((u, it + 1)));
                }
                return Ok(None);
            }
        }
        let res = p.l2(&r);
        if res <= self.tol * (1.0 + p.l2(&u)) {
            Ok(Some((u, NEWTON_MAX_ITER)))
        } else {
            Ok(None)
        }
    }
}

/// Local minimax search: for a direction `v` it maximizes `Φ` over
/// `span(support) ⊕ R⁺v`, then moves `v` against the `ℰ`-gradient at that
/// maximizer. Settles near saddle points whose unstable directions are the
/// support plus `v`.
struct Minimax<'a> {
    problem: &'a Problem,
    /// `ℰ`-orthonormal basis of the support.
    basis: Vec<Vec<f64>>,
}

struct Peak {
    t: Vec<f64>,
    u: Vec<f64>,
    phi: f64,
}

impl<'a> Minimax<'a> {
    fn new(problem: &'a Problem, support: &[&[f64]]) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for s in support {
            if let Some(b) = e_orthonormalize(problem, s.to_vec(), &basis) {
                basis.push(b);
            }
        }
        Ok(Minimax { problem, basis })
    }

    fn e_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.problem.grid().cell_measure() * dot(&self.problem.op.neg_hc_values(x), y)
    }

    /// Maximizer of `Φ(t₀ v + Σ tᵢ bᵢ)` by damped Newton ascent from `t`.
    fn peak(&self, v: &[f64], t: Vec<f64>) -> Result<Peak> {
        let p = self.problem;
        let w = p.grid().cell_measure();
        let dims: Vec<&[f64]> = std::iter::once(v).chain(self.basis.iter().map(|b| b.as_slice())).collect();
        let d = dims.len();
        let a = p.a.field().values();
        // Gram of the quadratic part ½‖u‖_ℰ² + ½∫a u².
        let quad = DMatrix::from_fn(d, d, |i, j| {
            let e = if i == j { 1.0 } else { 0.0 };
            let ai: f64 = dims[i].iter().zip(dims[j]).zip(a).map(|((x, y), z)| x * y * z).sum();
            e + w * ai
        });
        let combine = |t: &[f64]| -> Vec<f64> {
            let mut u = vec![0.0; v.len()];
            for (ti, phi) in t.iter().zip(&dims) {
                u.iter_mut().zip(phi.iter()).for_each(|(ui, x)| *ui += ti * x);
            }
            u
        };
        let value = |t: &[f64]| -> Result<f64> { p.energy_values(&combine(t)) };
        let mut t = DVector::from_vec(t);
        let mut phi = value(t.as_slice())?;
        for _ in 0..200 {
            let u = combine(t.as_slice());
            let f = p.nl.apply(&u);
            let fp = p.nl.apply_derivative(&u);
            let grad = DVector::from_fn(d, |i, _| {
                (&quad * &t)[i] - w * dot(&f, dims[i])
            });
            if grad.norm() <= 1e-13 * (1.0 + t.norm()) * (1.0 + phi.abs()) {
                break;
            }
            let hess = DMatrix::from_fn(d, d, |i, j| {
                let nl: f64 = dims[i].iter().zip(dims[j]).zip(&fp).map(|((x, y), z)| x * y * z).sum();
                quad[(i, j)] - w * nl
            });
            let step = match (-&hess).cholesky() {
                Some(ch) => ch.solve(&grad),
                None => grad.clone(),
            };
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let cand = &t + alpha * &step;
                let pc = value(cand.as_slice())?;
                if pc > phi {
                    t = cand;
                    phi = pc;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let t = t.as_slice().to_vec();
        let u = combine(&t);
        Ok(Peak { t, u, phi })
    }

    /// Runs the search from direction `v0`; returns the last maximizer once
    /// its gradient is small enough for Newton to take over.
    fn saddle(&self, v0: Vec<f64>, tol: f64, trace: &mut Vec<TraceEntry>) -> Result<Option<Vec<f64>>> {
        let p = self.problem;
        let Some(mut v) = e_orthonormalize(p, v0, &self.basis) else {
            return Ok(None);
        };
        let mut t = vec![0.0; self.basis.len() + 1];
        t[0] = ray_maximizer(p, &v)?;
        let mut peak = self.peak(&v, t)?;
        for _ in 0..MINIMAX_MAX_ITER {
            if peak.t[0] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
                peak.t[0] = -peak.t[0];
            }
            let r = p.residual_values(&peak.u);
            let mut g = p.op.inverse_neg_hc(&r)?;
            let gnorm = self.e_inner(&g, &r.iter().map(|x| x / p.grid().cell_measure()).collect::<Vec<_>>())
                .max(0.0);
            let gnorm = (gnorm * p.grid().cell_measure()).sqrt();
            let size = p.energy_norm_values(&peak.u);
            trace.push(TraceEntry {
                phi: peak.phi,
                grad_norm: gnorm,
                u_norm_e: size,
            });
            if gnorm <= (1e-3 * tol).max(1e-4) * (1.0 + size) {
                return Ok(Some(peak.u));
            }
            for dir in std::iter::once(v.as_slice()).chain(self.basis.iter().map(|b| b.as_slice())) {
                let c = self.e_inner(dir, &g);
                g.iter_mut().zip(dir).for_each(|(gi, di)| *gi -= c * di);
            }
            let gperp = self.e_inner(&g, &g).max(0.0).sqrt();
            let t0 = peak.t[0].max(f64::MIN_POSITIVE);
            let mut s = 1.0 / t0;
            let mut moved = false;
            for _ in 0..30 {
                let cand: Vec<f64> = v.iter().zip(&g).map(|(x, gi)| x - s * gi).collect();
                if let Some(cand) = e_orthonormalize(p, cand, &self.basis) {
                    let next = self.peak(&cand, peak.t.clone())?;
                    if next.phi <= peak.phi - 0.25 * t0 * s * gperp * gperp {
                        v = cand;
                        peak = next;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                // Descent exhausted; hand what we have to Newton.
                return Ok(Some(peak.u));
            }
        }
        Ok(Some(peak.u))
    }
}

/// `x` with its `ℰ`-projection on `basis` removed, `ℰ`-normalized; `None`
/// when almost nothing is left.
fn e_orthonormalize(problem: &Problem, mut x: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let w = problem.grid().cell_measure();
    let before = problem.energy_norm_values(&x);
    for _ in 0..2 {
        for b in basis {
            let c = w * dot(&problem.op.neg_hc_values(b), &x);
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= c * bi);
        }
    }
    let after = problem.energy_norm_values(&x);
    if !(after > 1e-6 * before) {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= after);
    Some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FountainParams {
    pub tol: f64,
    pub rho_defl: f64,
    /// Number of eigenfield directions tried, counted from `e_{m+1}`.
    pub max_starts: usize,
}

impl Default for FountainParams {
    fn default() -> Self {
        FountainParams {
            tol: 1e-6,
            rho_defl: 0.5,
            max_starts: 32,
        }
    }
}

/// Result of [`fountain_solve`]; `complete` is false when fewer solutions
/// than requested were found.
#[derive(Clone, Debug)]
pub struct FountainOutcome {
    pub solutions: Vec<SolveResult>,
    pub complete: bool,
    pub history: Vec<String>,
}

/// Saddle searches started along `e_{m+1}, e_{m+2}, …`, each a local
/// minimax over `ℰ_{≤m}`, the solutions found so far and the start direction,
/// finished by Newton deflating `0` and `±u` for every solution found.
/// Solutions sharing an energy level with an earlier one are deflated but
/// not returned, so the returned list has strictly increasing `Φ`.
pub fn fountain_solve(
    problem: &Problem,
    spectrum: &Spectrum,
    n_solutions: usize,
    params: &FountainParams,
) -> Result<FountainOutcome> {
    spectrum_grid_check(problem, spectrum)?;
    if !problem.nl.odd {
        return Err(Error::Domain("fountain search needs an odd nonlinearity".into()));
    }
    let newton = Newton {
        problem,
        tol: params.tol,
        rho: params.rho_defl,
    };
    let grid_len = problem.grid().len();
    let mut roots: Vec<Vec<f64>> = vec![vec![0.0; grid_len]];
    let mut found: Vec<SolveResult> = Vec::new();
    let mut history = Vec::new();
    let first = (spectrum.m + 1) as usize;
    let last = spectrum.eigenfields.len().min(first + params.max_starts);
    for j in first..last {
        if found.len() >= n_solutions {
            break;
        }
        let mut support: Vec<&[f64]> = spectrum.eigenfields[..first].iter().map(|e| e.values()).collect();
        support.extend(found.iter().map(|s| s.u.values()));
        let minimax = Minimax::new(problem, &support)?;
        let mut trace = Vec::new();
        let Some(u0) = minimax.saddle(spectrum.eigenfields[j].values().to_vec(), params.tol, &mut trace)? else {
            history.push(format!("start e_{j}: direction lies in the support"));
            continue;
        };
        let Some((u, its)) = newton.run(u0, &roots, &mut trace)? else {
            history.push(format!("start e_{j}: no convergence"));
            continue;
        };
        if problem.l2(&u) < NONTRIVIAL_L2 {
            history.push(format!("start e_{j}: trivial"));
            continue;
        }
        let distinct = found.iter().all(|other| {
            let o = other.u.values();
            let minus: f64 = u.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let plus: f64 = u.iter().zip(o).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
            problem.grid().h() * minus.min(plus) > 1e-2
        });
        let phi = problem.energy_values(&u)?;
        let new_level = found
            .iter()
            .all(|other| (other.phi - phi).abs() > 1e-9 * (1.0 + phi.abs()));
        roots.push(u.clone());
        roots.push(u.iter().map(|v| -v).collect());
        if !distinct {
            history.push(format!("start e_{j}: repeated solution"));
            continue;
        }
        if !new_level {
            history.push(format!("start e_{j}: distinct solution on an existing level Φ = {phi:.9e}, deflated only"));
            continue;
        }
        let mut out = finish(problem, u, "fountain-deflated-newton", its, trace)?;
        out.converged = out.passes(params.tol);
        if !out.converged {
            history.push(format!("start e_{j}: residual {:.3e} above tolerance", out.residual_l2));
            continue;
        }
        out.history.push(format!("start e_{j}, {} roots deflated", roots.len() - 2));
        history.push(format!("start e_{j}: solution with Φ = {phi:.9e}"));
        found.push(out);
    }
    found.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let complete = found.len() >= n_solutions;
    Ok(FountainOutcome {
        solutions: found,
        complete,
        history,
    })
}

/// Palais-Smale style summary of a solver trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsReport {
    pub phi_converged: bool,
    pub gradient_vanishing: bool,
    pub bounded: bool,
    /// `phi_converged && gradient_vanishing`.
    pub converged: bool,
    /// Gradients vanish while iterates are unbounded.
    pub flagged: bool,
    pub tail_spread: f64,
    pub final_grad: f64,
    pub max_norm: f64,
}

/// Norm above which a trace counts as unbounded.
pub const PS_NORM_BOUND: f64 = 1e6;

pub fn ps_diagnostics(trace: &[TraceEntry]) -> PsReport {
    if trace.is_empty() {
        return PsReport {
            phi_converged: false,
            gradient_vanishing: false,
            bounded: true,
            converged: false,
            flagged: false,
            tail_spread: f64::NAN,
            final_grad: f64::NAN,
            max_norm: 0.0,
        };
    }
    let last = trace[trace.len() - 1];
    let tail_len = (trace.len() / 10).max(2).min(trace.len());
    let tail = &trace[trace.len() - tail_len..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.phi), hi.max(e.phi)));
    let tail_spread = hi - lo;
    let phi_converged = tail_spread.is_finite() && tail_spread < 1e-8 * (1.0 + last.phi.abs());
    let gradient_vanishing = last.grad_norm <= 1e-6 * (1.0 + last.u_norm_e);
    let max_norm = trace.iter().fold(0.0_f64, |m, e| {
        if e.u_norm_e.is_finite() {
            m.max(e.u_norm_e)
        } else {
            f64::INFINITY
        }
    });
    let bounded = max_norm <= PS_NORM_BOUND;
    PsReport {
        phi_converged,
        gradient_vanishing,
        bounded,
        converged: phi_converged && gradient_vanishing,
        flagged: gradient_vanishing && !bounded,
        tail_spread,
        final_grad: last.grad_norm,
        max_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSample;
    use crate::spectral::eigendecompose;
    use std::f64::consts::PI;

    fn flat_problem(n: usize, nl: Nonlinearity) -> Problem {
        let g = TorusGrid::new(n).unwrap();
        let op = AndersonOperator::new(NoiseSample::zero(&g)).unwrap();
        Problem::new(op, Potential::constant(&g, 0.0), nl).unwrap()
    }

    #[test]
    fn assumption_examples() {
        let z: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.1).collect();
        let x = [0, 5];
        let rep = check_assumption_a(&Nonlinearity::pow3(), &z, &x).unwrap();
        assert!((rep.c1 - 0.25).abs() < 1e-12 && rep.c2 == 0.0);
        assert!(check_assumption_a(&Nonlinearity::pow(2.0).unwrap(), &z, &x).is_ok());
        let linear = Nonlinearity::custom("linear", |_, z| z, |_, _| 1.0, |_, z| 0.5 * z * z, 4.0, 4.0, 1.0, true);
        assert!(check_assumption_a(&linear, &z, &x).is_err());
    }

    #[test]
    fn tabulated_matches_cubic() {
        let z: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
        let f: Vec<f64> = z.iter().map(|v| v * v * v).collect();
        let nl = Nonlinearity::tabulated(z, f, 4.0, 4.0, 1.0).unwrap();
        assert!(nl.odd);
        assert!((nl.f(0, 1.025) - 1.025f64.powi(3)).abs() < 1e-2);
        assert!((nl.antiderivative(0, 2.0) - 4.0).abs() < 1e-2);
        assert_eq!(nl.antiderivative(0, 0.0), 0.0);
    }

    #[test]
    fn energy_of_constant_solution() {
        let p = flat_problem(16, Nonlinearity::pow3());
        let one = GridField::constant(p.grid(), 1.0);
        assert!((energy(&p, &one).unwrap() - PI * PI).abs() < 1e-10);
        let (r, _) = energy_gradient(&p, &one).unwrap();
        assert!(r.l2() < 1e-10);
    }

    #[test]
    fn picard_on_constant_rhs() {
        let unit = Nonlinearity::custom("one", |_, _| 1.0, |_, _| 0.0, |_, z| z, 4.0, 4.0, 1.0, false);
        let p = flat_problem(8, unit);
        let out = picard_baseline(&p, &GridField::zeros(p.grid()), 10, 1e-10).unwrap();
        assert!(out.converged);
        assert!(out.u.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn flat_mountain_pass_finds_constant() {
        let p = flat_problem(16, Nonlinearity::pow3());
        let s = eigendecompose(p.op(), p.potential(), 6).unwrap();
        let out = mountain_pass_solve(&p, &s, &MountainPassParams::default()).unwrap();
        assert!(out.passes(1e-6));
        assert!((out.phi - PI * PI).abs() < 1e-6, "Φ = {}", out.phi);
    }

    #[test]
    fn ps_synthetic_traces() {
        let flat: Vec<TraceEntry> = (0..20)
            .map(|_| TraceEntry { phi: 1.0, grad_norm: 1.0, u_norm_e: 1.0 })
            .collect();
        assert!(!ps_diagnostics(&flat).converged);
        let blowup: Vec<TraceEntry> = (0..20)
            .map(|i| TraceEntry { phi: 0.0, grad_norm: 1.0, u_norm_e: 10f64.powi(i) })
            .collect();
        assert!(!ps_diagnostics(&blowup).bounded);
    }
}
