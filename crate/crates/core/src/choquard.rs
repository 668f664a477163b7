//! Self-dual variational treatment of `(-H_c + a) u = (w ⋆ f(u)) g(u)`, by
//! default `f = |u|^p`, `g = |u|^{q-2} u` with `w ≤ 0`.
//!
//! With `A = -H_c + a`, `φ(u) = ½⟨A u, u⟩` and `Λu = -(w ⋆ f(u)) g(u)`, the
//! functional `I(u) = φ(u) + φ*(-Λu) + ⟨Λu, u⟩` is non-negative and vanishes
//! exactly at solutions; for quadratic `φ` it equals `½⟨r, A⁻¹ r⟩`,
//! `r = A u + Λu`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve, convolve_adjoint, dot, norm_lp, GridField, TorusGrid};
use crate::operator::AndersonOperator;
use crate::spectral::Potential;
use crate::variational::{SolveResult, TraceEntry, NONTRIVIAL_L2};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Pointwise maps `f`, `g` of the nonlocal term and their derivatives.
#[derive(Clone)]
pub struct ChoquardMaps {
    pub f: ScalarFn,
    pub df: ScalarFn,
    pub g: ScalarFn,
    pub dg: ScalarFn,
}

impl ChoquardMaps {
    /// `f = |z|^p`, `g = |z|^{q-2} z` (taken as 0 at `z = 0`).
    pub fn power(p: f64, q: f64) -> Self {
        ChoquardMaps {
            f: Arc::new(move |z: f64| z.abs().powf(p)),
            df: Arc::new(move |z: f64| {
                if z == 0.0 {
                    if p > 1.0 { 0.0 } else { f64::NAN }
                } else {
                    p * z.abs().powf(p - 1.0) * z.signum()
                }
            }),
            g: Arc::new(move |z: f64| if z == 0.0 { 0.0 } else { z.abs().powf(q - 2.0) * z }),
            dg: Arc::new(move |z: f64| {
                if z == 0.0 {
                    if q > 2.0 { 0.0 } else if q == 2.0 { 1.0 } else { f64::NAN }
                } else {
                    (q - 1.0) * z.abs().powf(q - 2.0)
                }
            }),
        }
    }
}

pub struct ChoquardProblem {
    op: AndersonOperator,
    a: Potential,
    w: GridField,
    p: f64,
    q: f64,
    maps: ChoquardMaps,
}

impl fmt::Debug for ChoquardProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChoquardProblem")
            .field("op", &self.op)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish()
    }
}

impl ChoquardProblem {
    pub fn new(op: AndersonOperator, a: Potential, w: GridField, p: f64, q: f64) -> Result<Self> {
        Self::with_maps(op, a, w, p, q, ChoquardMaps::power(p, q))
    }

    /// General maps with `|f(z)| ≲ 1 + |z|^p` and `|g(z)| ≲ 1 + |z|^{q-1}`.
    pub fn with_maps(
        op: AndersonOperator,
        a: Potential,
        w: GridField,
        p: f64,
        q: f64,
        maps: ChoquardMaps,
    ) -> Result<Self> {
        if op.grid() != a.grid() || op.grid() != w.grid() {
            return Err(Error::Shape("operator, potential and kernel live on different grids".into()));
        }
        if !(p >= 1.0) || !(q > 1.0) {
            return Err(Error::Domain(format!("need p >= 1 and q > 1, got p = {p}, q = {q}")));
        }
        let amin = a.field().min();
        if !(amin >= 0.0) || !a.field().is_finite() {
            return Err(Error::Domain(format!("potential must be bounded and non-negative (min {amin})")));
        }
        let wmax = w.max();
        if !(wmax <= 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("interaction kernel must be non-positive (max {wmax})")));
        }
        Ok(ChoquardProblem { op, a, w, p, q, maps })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.op.grid()
    }

    pub fn op(&self) -> &AndersonOperator {
        &self.op
    }

    pub fn potential(&self) -> &Potential {
        &self.a
    }

    pub fn kernel(&self) -> &GridField {
        &self.w
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    fn check(&self, u: &GridField) -> Result<()> {
        if u.grid() != self.grid() {
            return Err(Error::Shape("field and problem live on different grids".into()));
        }
        Ok(())
    }

    fn apply_a(&self, u: &GridField) -> Vec<f64> {
        let mut out = self.op.neg_hc_values(u.values());
        for ((o, a), x) in out.iter_mut().zip(self.a.field().values()).zip(u.values()) {
            *o += a * x;
        }
        out
    }

    fn solve_a(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.op.solve_with_potential(self.a.field().values(), rhs, None)
    }

    fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.grid().cell_measure() * dot(x, y)
    }

    /// `w ⋆ f(u)`.
    fn potential_term(&self, u: &GridField) -> GridField {
        let fu = u.map(|z| (self.maps.f)(z));
        convolve(&fu, &self.w).expect("grids checked")
    }
}

/// `Λu = -(w ⋆ f(u)) g(u)`.
pub fn lambda_apply(prob: &ChoquardProblem, u: &GridField) -> Result<GridField> {
    prob.check(u)?;
    let conv = prob.potential_term(u);
    Ok(conv.zip_map(u, |c, z| -c * (prob.maps.g)(z)))
}

/// `L²` adjoint of the derivative of `Λ` at `u`, applied to `z`.
fn lambda_derivative_adjoint(prob: &ChoquardProblem, u: &GridField, z: &GridField) -> GridField {
    let conv = prob.potential_term(u);
    let zg = z.zip_map(u, |zi, ui| zi * (prob.maps.g)(ui));
    let back = convolve_adjoint(&zg, &prob.w);
    let vals = (0..u.values().len())
        .map(|i| {
            let ui = u.values()[i];
            -(prob.maps.df)(ui) * back.values()[i] - conv.values()[i] * (prob.maps.dg)(ui) * z.values()[i]
        })
        .collect();
    GridField::from_vec_unchecked(prob.grid(), vals)
}

/// Both sides of `|⟨Λu, v⟩| ≤ ‖w‖₁ ‖f(u)‖₂ ‖g(u)‖_{2q/(q-1)} ‖v‖_{2q}`; for
/// the power maps the middle factors are `‖u‖_{2p}^p ‖u‖_{2q}^{q-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn lambda_bound_check(prob: &ChoquardProblem, u: &GridField, v: &GridField) -> Result<BoundReport> {
    prob.check(u)?;
    prob.check(v)?;
    let lu = lambda_apply(prob, u)?;
    let lhs = prob.inner(lu.values(), v.values()).abs();
    let q = prob.q;
    let fu = u.map(|z| (prob.maps.f)(z));
    let gu = u.map(|z| (prob.maps.g)(z));
    let rhs = norm_lp(&prob.w, 1.0)? * norm_lp(&fu, 2.0)? * norm_lp(&gu, 2.0 * q / (q - 1.0))? * norm_lp(v, 2.0 * q)?;
    if lhs > rhs * (1.0 + 1e-8) {
        return Err(Error::Inconsistency(format!(
            "Hölder bound violated: |⟨Λu, v⟩| = {lhs:e} > {rhs:e}"
        )));
    }
    Ok(BoundReport { lhs, rhs })
}

/// `φ(u) = ½‖u‖_ℰ² + ½∫a u²`.
pub fn quadratic_energy(prob: &ChoquardProblem, u: &GridField) -> Result<f64> {
    prob.check(u)?;
    Ok(0.5 * prob.inner(&prob.apply_a(u), u.values()))
}

/// `φ*(p) = sup_u (⟨p, u⟩ - φ(u)) = ½⟨p, A⁻¹p⟩`.
pub fn fenchel_conjugate_quadratic(prob: &ChoquardProblem, p_field: &GridField) -> Result<f64> {
    prob.check(p_field)?;
    let x = prob.solve_a(p_field.values())?;
    Ok(0.5 * prob.inner(p_field.values(), &x))
}

/// `I(u)` by the residual form and by the Fenchel form, in that order.
pub fn selfdual_value_forms(prob: &ChoquardProblem, u: &GridField) -> Result<(f64, f64)> {
    prob.check(u)?;
    let lu = lambda_apply(prob, u)?;
    let au = prob.apply_a(u);
    let r: Vec<f64> = au.iter().zip(lu.values()).map(|(a, l)| a + l).collect();
    let z = prob.solve_a(&r)?;
    let residual_form = 0.5 * prob.inner(&r, &z);
    let phi = 0.5 * prob.inner(&au, u.values());
    let conj = fenchel_conjugate_quadratic(prob, &lu.scale(-1.0))?;
    let fenchel_form = phi + conj + prob.inner(lu.values(), u.values());
    Ok((residual_form, fenchel_form))
}

/// `I(u) = ½⟨r, A⁻¹r⟩`, cross-checked against the Fenchel form.
pub fn selfdual_value(prob: &ChoquardProblem, u: &GridField) -> Result<f64> {
    let (value, fenchel) = selfdual_value_forms(prob, u)?;
    if value < -1e-8 {
        return Err(Error::Inconsistency(format!("self-dual value is negative: {value:e}")));
    }
    if (value - fenchel).abs() > 1e-8 * (1.0 + value.abs()) {
        return Err(Error::Inconsistency(format!(
            "residual form {value:e} and Fenchel form {fenchel:e} of I disagree"
        )));
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfdualParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SelfdualParams {
    fn default() -> Self {
        SelfdualParams {
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

struct Evaluation {
    value: f64,
    r: Vec<f64>,
    z: Vec<f64>,
}

fn evaluate(prob: &ChoquardProblem, u: &GridField) -> Result<Evaluation> {
    let lu = lambda_apply(prob, u)?;
    let r: Vec<f64> = prob.apply_a(u).iter().zip(lu.values()).map(|(a, l)| a + l).collect();
    let z = prob.solve_a(&r)?;
    let value = 0.5 * prob.inner(&r, &z);
    if !value.is_finite() {
        return Err(Error::Overflow("self-dual value is not finite".into()));
    }
    Ok(Evaluation { value, r, z })
}

/// Minimizes `I` by descent along `-A⁻¹∇I` with Armijo backtracking, so the
/// recorded `I` values never increase. `phi` of the result holds `I(ū)`.
pub fn selfdual_minimize(prob: &ChoquardProblem, init: &GridField, params: &SelfdualParams) -> Result<SolveResult> {
    prob.check(init)?;
    let grid = prob.grid();
    let mut u = init.clone();
    let mut ev = evaluate(prob, &u)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let residual_l2 = grid.h() * crate::linalg::norm(&ev.r);
        // ∇I = A z + Λ'(u)ᵀ z = r + Λ'(u)ᵀ z with z = A⁻¹ r.
        let zf = GridField::from_vec_unchecked(grid, ev.z.clone());
        let back = lambda_derivative_adjoint(prob, &u, &zf);
        let grad: Vec<f64> = ev.r.iter().zip(back.values()).map(|(r, b)| r + b).collect();
        let dir = prob.solve_a(&grad)?;
        let slope = prob.inner(&grad, &dir);
        trace.push(TraceEntry {
            phi: ev.value,
            grad_norm: slope.max(0.0).sqrt(),
            u_norm_e: prob.op.energy_norm(&u)?,
        });
        if ev.value <= params.tol * params.tol && residual_l2 <= params.tol * (1.0 + u.l2()) {
            break;
        }
        if iterations == params.max_iter {
            return Err(Error::NonConvergence {
                what: "self-dual descent",
                iterations,
                residual: ev.value,
            });
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = GridField::from_vec_unchecked(
                grid,
                u.values().iter().zip(&dir).map(|(x, d)| x - alpha * d).collect(),
            );
            if let Ok(next) = evaluate(prob, &cand) {
                if next.value <= ev.value - 1e-4 * alpha * slope {
                    u = cand;
                    ev = next;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NonConvergence {
                what: "self-dual descent line search",
                iterations,
                residual: ev.value,
            });
        }
    }
    let residual_l2 = grid.h() * crate::linalg::norm(&ev.r);
    let grad_e_norm = trace.last().map_or(0.0, |t| t.grad_norm);
    Ok(SolveResult {
        phi: ev.value,
        residual_l2,
        grad_e_norm,
        iterations,
        method: "selfdual-descent".into(),
        trace,
        seed: None,
        history: Vec::new(),
        converged: true,
        diverged: false,
        witness: None,
        u,
    })
}

/// Whether a Choquard minimizer is numerically zero.
pub fn is_trivial(u: &GridField) -> bool {
    u.l2() < NONTRIVIAL_L2
}
