//! Policy iteration for the discrete HJB equation
//! `∫(ν+γ)∇u·∇ψ + H(x,∇u)ψ + κuψ = ⟨F[m],ψ⟩` at fixed right-hand side.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load_with, Discretization, TransportField};
use crate::error::{Error, Result};
use crate::fespace::NodalFunction;
use crate::hamiltonian::ControlHamiltonian;
use crate::linalg::{norm_inf, Factorization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjbConfig {
    /// Threshold on the H¹ norm of the update.
    pub tol_increment: f64,
    /// Threshold on the ∞-norm of the nonlinear residual.
    pub tol_residual: f64,
    pub max_iters: usize,
}

impl Default for HjbConfig {
    fn default() -> Self {
        HjbConfig {
            tol_increment: 1e-10,
            tol_residual: 1e-10,
            max_iters: 100,
        }
    }
}

impl HjbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_increment > 0.0) {
            return Err(Error::invalid("hjb.tol_increment", "must be positive"));
        }
        if !(self.tol_residual > 0.0) {
            return Err(Error::invalid("hjb.tol_residual", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("hjb.max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HjbResult {
    pub u: NodalFunction,
    /// Selection at the returned `u`.
    pub field: TransportField,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Nonlinear residual after each linear solve.
    pub residual_history: Vec<f64>,
    /// Number of numerical factorizations performed.
    pub factorizations: usize,
}

/// `r_i = ∫(ν+γ)∇u·∇ξ_i + H(x,∇u)ξ_i + κuξ_i − rhs_i`, with `H` evaluated
/// directly rather than through a selection.
pub fn nonlinear_residual<H: ControlHamiltonian + ?Sized>(
    disc: &Discretization,
    h: &H,
    u: &NodalFunction,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let space = disc.space();
    if rhs.len() != space.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: space.n_dofs(),
            got: rhs.len(),
        });
    }
    let mut r = disc.base().matvec(u.values())?;
    let mut grad = (usize::MAX, [0.0; 2]);
    let hterm = assemble_load_with(space, disc.rule(), |e, _, q| {
        if grad.0 != e {
            grad = (e, space.element_gradient(u, e));
        }
        (h.eval(q.x, grad.1), [0.0; 2])
    })?;
    for ((ri, hi), bi) in r.iter_mut().zip(&hterm).zip(rhs) {
        *ri += hi - bi;
    }
    Ok(r)
}

/// Runs policy iteration and reports the outcome without treating
/// non-convergence as an error.
pub fn policy_iteration<H: ControlHamiltonian + ?Sized>(
    disc: &Discretization,
    h: &H,
    rhs: &[f64],
    cfg: &HjbConfig,
    initial: Option<&NodalFunction>,
) -> Result<HjbResult> {
    cfg.validate()?;
    let space = disc.space();
    let n = space.n_dofs();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
    }
    let mut u = match initial {
        Some(u0) if u0.len() != n => return Err(Error::DimensionMismatch { expected: n, got: u0.len() }),
        Some(u0) => u0.clone(),
        None => space.zero(),
    };
    let mut cached: Option<(TransportField, Factorization)> = None;
    let mut history = Vec::new();
    let mut factorizations = 0;
    let mut residual = f64::INFINITY;

    for it in 1..=cfg.max_iters {
        let field = TransportField::select(space, disc.rule(), h, &u);
        let reuse = matches!(&cached, Some((f, _)) if *f == field);
        if !reuse {
            let a = disc.hjb_operator(&field)?;
            cached = Some((field, disc.factor(&a)?));
            factorizations += 1;
        }
        let (field, lu) = cached.as_ref().expect("factorization present");
        let mut b = disc.cost_load(field)?;
        for (bi, ri) in b.iter_mut().zip(rhs) {
            *bi += ri;
        }
        let next = NodalFunction::new(lu.solve(&b)?);
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy iteration iterate".into()));
        }
        let diff: Vec<f64> = next.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
        let increment = disc.h1_norm(&diff)?;
        u = next;
        residual = norm_inf(&nonlinear_residual(disc, h, &u, rhs)?);
        history.push(residual);
        log::debug!("policy iteration {it}: increment {increment:.3e}, residual {residual:.3e}");
        if increment <= cfg.tol_increment && residual <= cfg.tol_residual {
            return Ok(HjbResult {
                field: TransportField::select(space, disc.rule(), h, &u),
                u,
                iterations: it,
                final_residual: residual,
                converged: true,
                residual_history: history,
                factorizations,
            });
        }
    }
    Ok(HjbResult {
        field: TransportField::select(space, disc.rule(), h, &u),
        u,
        iterations: cfg.max_iters,
        final_residual: residual,
        converged: false,
        residual_history: history,
        factorizations,
    })
}

/// Solves the discrete HJB equation with right-hand side `rhs` (the load of
/// `F[m]`), starting from `initial` or zero.
pub fn solve_hjb<H: ControlHamiltonian + ?Sized>(
    disc: &Discretization,
    h: &H,
    rhs: &[f64],
    cfg: &HjbConfig,
    initial: Option<&NodalFunction>,
) -> Result<HjbResult> {
    let res = policy_iteration(disc, h, rhs, cfg, initial)?;
    if !res.converged {
        return Err(Error::NonConvergence {
            solver: "policy iteration",
            iterations: res.iterations,
            residual: res.final_residual,
            history: res.residual_history,
        });
    }
    Ok(res)
}
