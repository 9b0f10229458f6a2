//! The density equation and the outer fixed-point iteration
//! `u_j = HJB(F[m_j])`, `m_{j+1} = KFP(b̃[u_j])`.

use serde::{Deserialize, Serialize};

use crate::assembly::{Discretization, ProblemData, TransportField};
use crate::error::{Error, Result};
use crate::fespace::NodalFunction;
use crate::hamiltonian::ControlHamiltonian;
use crate::hjb::{nonlinear_residual, solve_hjb, HjbConfig};
use crate::linalg::norm_inf;

/// Nodal values below this count as a violation of non-negativity.
pub const DMP_TOL: f64 = 1e-10;

/// Residual ∞-norm that a returned solution pair must satisfy.
pub const PAIR_RESIDUAL_TOL: f64 = 1e-8;

/// Relative residual accepted from the linear density solve.
pub const KFP_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfgConfig {
    /// Threshold on the L² norm of the density update.
    pub tol_m: f64,
    /// Threshold on the L² norm of the value-function update.
    pub tol_u: f64,
    pub max_outer: usize,
    /// `m ← (1−ω) m_j + ω m_{j+1}`.
    pub damping: f64,
    pub hjb: HjbConfig,
}

impl Default for MfgConfig {
    fn default() -> Self {
        MfgConfig {
            tol_m: 1e-9,
            tol_u: 1e-9,
            max_outer: 200,
            damping: 1.0,
            hjb: HjbConfig::default(),
        }
    }
}

impl MfgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_m > 0.0) {
            return Err(Error::invalid("mfg.tol_m", "must be positive"));
        }
        if !(self.tol_u > 0.0) {
            return Err(Error::invalid("mfg.tol_u", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("mfg.max_outer", "must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("mfg.damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        self.hjb.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub du: f64,
    pub dm: f64,
    pub hjb_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_nodal_m: f64,
    pub h1_norm_m: f64,
    pub h1_norm_u: f64,
    pub dmp_violation: bool,
    /// ∞-norm of the HJB residual of `u` against `F[m]`.
    pub hjb_residual: f64,
    /// ∞-norm of the density residual with the field selected from `u`.
    pub kfp_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub u: NodalFunction,
    pub m: NodalFunction,
    pub field: TransportField,
    pub outer_iterations: usize,
    pub history: Vec<OuterStep>,
    pub diagnostics: Diagnostics,
}

impl MfgSolution {
    /// Wraps a given pair, selecting its field and evaluating both residuals.
    pub fn from_pair(disc: &Discretization, data: &ProblemData, u: NodalFunction, m: NodalFunction) -> Result<Self> {
        let n = disc.space().n_dofs();
        for v in [&u, &m] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        let field = TransportField::select(disc.space(), disc.rule(), data.hamiltonian.as_ref(), &u);
        let diagnostics = diagnostics(disc, data, &u, &m, &field)?;
        Ok(MfgSolution {
            u,
            m,
            field,
            outer_iterations: 0,
            history: Vec::new(),
            diagnostics,
        })
    }
}

fn diagnostics(
    disc: &Discretization,
    data: &ProblemData,
    u: &NodalFunction,
    m: &NodalFunction,
    field: &TransportField,
) -> Result<Diagnostics> {
    let rhs = disc.coupling_load(data.coupling.as_ref(), m)?;
    let hjb_residual = norm_inf(&nonlinear_residual(disc, data.hamiltonian.as_ref(), u, &rhs)?);
    let a = disc.kfp_operator(field)?;
    let g = disc.load(data.source.as_ref())?;
    let am = a.matvec(m.values())?;
    let kfp_residual = am.iter().zip(&g).fold(0.0f64, |r, (x, y)| r.max((x - y).abs()));
    let dmp = dmp_check(m);
    Ok(Diagnostics {
        min_nodal_m: dmp.min_value,
        h1_norm_m: disc.h1_norm(m.values())?,
        h1_norm_u: disc.h1_norm(u.values())?,
        dmp_violation: dmp.violated,
        hjb_residual,
        kfp_residual,
    })
}

/// Solves `[(ν+γ)K + B(b̃)ᵀ + κM] m = load(G)`.
pub fn solve_kfp(disc: &Discretization, field: &TransportField, load: &[f64]) -> Result<NodalFunction> {
    let a = disc.kfp_operator(field)?;
    let lu = disc.factor(&a)?;
    let m = lu.solve(load)?;
    let am = a.matvec(&m)?;
    let res = am.iter().zip(load).fold(0.0f64, |r, (x, y)| r.max((x - y).abs()));
    let scale = norm_inf(load).max(a.norm_inf() * norm_inf(&m));
    if res > KFP_RESIDUAL_TOL * scale {
        return Err(Error::SingularMatrix(format!(
            "density solve residual {res:.3e} exceeds {KFP_RESIDUAL_TOL:e} relative to {scale:.3e}"
        )));
    }
    Ok(NodalFunction::new(m))
}

/// Outer fixed-point iteration starting from `m0` (zero when absent).
pub fn solve_mfg(
    disc: &Discretization,
    data: &ProblemData,
    cfg: &MfgConfig,
    m0: Option<&NodalFunction>,
) -> Result<MfgSolution> {
    cfg.validate()?;
    data.validate()?;
    let n = disc.space().n_dofs();
    let mut m = match m0 {
        Some(m0) if m0.len() != n => return Err(Error::DimensionMismatch { expected: n, got: m0.len() }),
        Some(m0) => m0.clone(),
        None => disc.space().zero(),
    };
    let g = disc.load(data.source.as_ref())?;
    let h = data.hamiltonian.as_ref();
    let mut u: Option<NodalFunction> = None;
    let mut history = Vec::new();

    for it in 1..=cfg.max_outer {
        let rhs = disc.coupling_load(data.coupling.as_ref(), &m)?;
        let hjb = solve_hjb(disc, h, &rhs, &cfg.hjb, u.as_ref())?;
        let next = solve_kfp(disc, &hjb.field, &g)?;
        let w = cfg.damping;
        let damped: Vec<f64> = m.values().iter().zip(next.values()).map(|(a, b)| (1.0 - w) * a + w * b).collect();
        let dm = disc.l2_norm(&diff(&damped, m.values()))?;
        let du = match &u {
            Some(prev) => disc.l2_norm(&diff(hjb.u.values(), prev.values()))?,
            None => disc.l2_norm(hjb.u.values())?,
        };
        history.push(OuterStep {
            du,
            dm,
            hjb_iterations: hjb.iterations,
        });
        log::debug!("outer iteration {it}: du {du:.3e}, dm {dm:.3e}, policy iterations {}", hjb.iterations);
        m = NodalFunction::new(damped);
        let field = hjb.field;
        u = Some(hjb.u);

        if du <= cfg.tol_u && dm <= cfg.tol_m {
            let u = u.expect("set above");
            let diagnostics = diagnostics(disc, data, &u, &m, &field)?;
            if diagnostics.dmp_violation {
                log::warn!("density has negative nodal values (min {:.3e})", diagnostics.min_nodal_m);
            }
            if !(diagnostics.hjb_residual <= PAIR_RESIDUAL_TOL && diagnostics.kfp_residual <= PAIR_RESIDUAL_TOL) {
                return Err(Error::NonConvergence {
                    solver: "outer fixed point (final residual check)",
                    iterations: it,
                    residual: diagnostics.hjb_residual.max(diagnostics.kfp_residual),
                    history: history.iter().map(|s| s.dm.max(s.du)).collect(),
                });
            }
            return Ok(MfgSolution {
                u,
                m,
                field,
                outer_iterations: it,
                history,
                diagnostics,
            });
        }
    }
    let last = history.last().map_or(f64::INFINITY, |s| s.dm.max(s.du));
    Err(Error::NonConvergence {
        solver: "outer fixed point",
        iterations: cfg.max_outer,
        residual: last,
        history: history.iter().map(|s| s.dm.max(s.du)).collect(),
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmpReport {
    /// Minimum over interior nodal values (zero when there are none, matching
    /// the boundary values).
    pub min_value: f64,
    pub violated: bool,
}

pub fn dmp_check(m: &NodalFunction) -> DmpReport {
    let min_value = m.values().iter().copied().fold(f64::INFINITY, f64::min);
    let min_value = if min_value.is_finite() { min_value } else { 0.0 };
    DmpReport {
        min_value,
        violated: min_value < -DMP_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub lambda12_max: f64,
    pub lambda21_max: f64,
    /// `⟨F[m₁] − F[m₂], m₁ − m₂⟩` on the discrete space.
    pub duality_gap: f64,
}

/// `λ_ij = H(x,∇u_i) − H(x,∇u_j) + b̃_i·(∇u_j − ∇u_i)` at every quadrature
/// point, reduced to its maximum, plus the coupling pairing.
pub fn monotonicity_diagnostic(
    disc: &Discretization,
    data: &ProblemData,
    s1: &MfgSolution,
    s2: &MfgSolution,
) -> Result<MonotonicityReport> {
    let space = disc.space();
    let n = space.n_dofs();
    if [s1.u.len(), s1.m.len(), s2.u.len(), s2.m.len()].iter().any(|&l| l != n) {
        return Err(Error::SpaceMismatch("solutions are not on the discretization's space".into()));
    }
    let ne = space.mesh().n_elements();
    if s1.field.n_elements() != ne || s2.field.n_elements() != ne {
        return Err(Error::SpaceMismatch("transport fields are not on the discretization's mesh".into()));
    }
    let h: &dyn ControlHamiltonian = data.hamiltonian.as_ref();
    let (mut l12, mut l21) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for e in 0..ne {
        let (g1, g2) = (space.element_gradient(&s1.u, e), space.element_gradient(&s2.u, e));
        for (k, q) in space.quad_points(e, disc.rule()).enumerate() {
            let (h1, h2) = (h.eval(q.x, g1), h.eval(q.x, g2));
            let (b1, b2) = (s1.field.drift(e, k), s2.field.drift(e, k));
            l12 = l12.max(h1 - h2 + crate::dot(b1, crate::sub(g2, g1)));
            l21 = l21.max(h2 - h1 + crate::dot(b2, crate::sub(g1, g2)));
        }
    }
    let f1 = disc.coupling_load(data.coupling.as_ref(), &s1.m)?;
    let f2 = disc.coupling_load(data.coupling.as_ref(), &s2.m)?;
    let duality_gap = (0..n).map(|i| (f1[i] - f2[i]) * (s1.m.values()[i] - s2.m.values()[i])).sum();
    Ok(MonotonicityReport {
        lambda12_max: if ne == 0 { 0.0 } else { l12 },
        lambda21_max: if ne == 0 { 0.0 } else { l21 },
        duality_gap,
    })
}
