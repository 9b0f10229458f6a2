//! Manufactured benchmark with `u = xy ln x ln y` and `m = xy(1−x)(1−y)` under
//! the eikonal Hamiltonian and the coupling `F[v] = tanh(v) + J`.

use super::{ErrorBundle, FnSource, LocalCoupling, Nonlinearity};
use crate::assembly::{Discretization, ProblemData};
use crate::error::{Error, Result};
use crate::hamiltonian::EikonalHamiltonian;
use crate::mfg::MfgSolution;
use crate::{norm, Point, Vec2};

/// The data are derived for general `ν > 0` and `κ ≥ 0`; the benchmark itself
/// uses `ν = 1`, `κ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOne {
    pub nu: f64,
    pub kappa: f64,
}

impl Default for ExperimentOne {
    fn default() -> Self {
        ExperimentOne { nu: 1.0, kappa: 0.0 }
    }
}

impl ExperimentOne {
    pub fn exact_u(x: Point) -> f64 {
        x[0] * x[1] * x[0].ln() * x[1].ln()
    }

    /// `t̃ = ∇u`.
    pub fn t_tilde(x: Point) -> Vec2 {
        let (lx, ly) = (x[0].ln(), x[1].ln());
        [(1.0 + lx) * x[1] * ly, (1.0 + ly) * x[0] * lx]
    }

    pub fn exact_m(x: Point) -> f64 {
        x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1])
    }

    pub fn exact_m_grad(x: Point) -> Vec2 {
        [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), (1.0 - 2.0 * x[1]) * x[0] * (1.0 - x[0])]
    }

    /// `t̃/|t̃|`, or zero where `t̃` vanishes.
    pub fn exact_drift(x: Point) -> Vec2 {
        let t = Self::t_tilde(x);
        let r = norm(t);
        if r == 0.0 {
            [0.0; 2]
        } else {
            [t[0] / r, t[1] / r]
        }
    }

    /// `J` with `⟨J, ψ⟩ = ∫ h ψ + ν t̃·∇ψ`, `h = |t̃| + κu − tanh(m)`.
    pub fn j_functional(&self) -> FnSource {
        let (nu, kappa) = (self.nu, self.kappa);
        FnSource::new(
            move |x| norm(Self::t_tilde(x)) + kappa * Self::exact_u(x) - Self::exact_m(x).tanh(),
            move |x| {
                let t = Self::t_tilde(x);
                [nu * t[0], nu * t[1]]
            },
        )
    }

    pub fn coupling(&self) -> LocalCoupling {
        LocalCoupling::new(Nonlinearity::Tanh, self.j_functional())
    }

    /// `r = 2ν(x(1−x) + y(1−y)) + κm`, `g̃ = m t̃/|t̃|`.
    pub fn source(&self) -> FnSource {
        let (nu, kappa) = (self.nu, self.kappa);
        FnSource::new(
            move |x| 2.0 * nu * (x[0] * (1.0 - x[0]) + x[1] * (1.0 - x[1])) + kappa * Self::exact_m(x),
            |x| {
                let (m, d) = (Self::exact_m(x), Self::exact_drift(x));
                [m * d[0], m * d[1]]
            },
        )
    }

    pub fn problem_data(&self) -> ProblemData {
        ProblemData {
            nu: self.nu,
            kappa: self.kappa,
            hamiltonian: Box::new(EikonalHamiltonian),
            coupling: Box::new(self.coupling()),
            source: Box::new(self.source()),
        }
    }
}

/// Relative errors against the exact pair. The drift error is the unweighted
/// L² distance between the computed field and `t̃/|t̃|` at quadrature points,
/// divided by the L² norm of `t̃/|t̃|`.
pub fn exact_errors_experiment1(disc: &Discretization, sol: &MfgSolution) -> Result<ErrorBundle> {
    let space = disc.space();
    let rule = disc.rule();
    let u = space.error_norms(&sol.u, ExperimentOne::exact_u, ExperimentOne::t_tilde, rule)?;
    let m = space.error_norms(&sol.m, ExperimentOne::exact_m, ExperimentOne::exact_m_grad, rule)?;
    let (mut num, mut den) = (0.0, 0.0);
    for e in 0..space.mesh().n_elements() {
        for (k, q) in space.quad_points(e, rule).enumerate() {
            let b = sol.field.drift(e, k);
            let d = ExperimentOne::exact_drift(q.x);
            num += q.weight * ((b[0] - d[0]).powi(2) + (b[1] - d[1]).powi(2));
            den += q.weight * (d[0] * d[0] + d[1] * d[1]);
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroNorm("exact drift".into()));
    }
    Ok(ErrorBundle {
        u_h1_rel: u.h1_rel,
        m_l2_rel: m.l2_rel,
        m_h1_rel: m.h1_rel,
        drift_l2_rel: (num / den).sqrt(),
    })
}
