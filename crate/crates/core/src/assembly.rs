//! Sparse operators and load vectors of the discrete MFG system.
//!
//! All matrices live on the interior degrees of freedom of a [`FESpace`] and
//! share one sparsity pattern (the P1 vertex adjacency), so that a single
//! symbolic factorization serves every linear solve on a given mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{FESpace, NodalFunction, QuadPoint, QuadratureRule};
use crate::hamiltonian::ControlHamiltonian;
use crate::linalg::{Factorization, SparseMatrix, SymbolicLu, TripletBuffer};
use crate::mesh::Mesh;
use crate::problems::{CouplingOperator, SourceFunctional};
use crate::{dot, norm, Point, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StabilizationMode {
    Formula,
    #[default]
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizationParams {
    pub mode: StabilizationMode,
    pub mu: f64,
    pub theta: f64,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        StabilizationParams {
            mode: StabilizationMode::Zero,
            mu: 2.0,
            theta: std::f64::consts::FRAC_PI_6,
        }
    }
}

impl StabilizationParams {
    pub fn zero() -> Self {
        StabilizationParams::default()
    }

    pub fn formula(mu: f64, theta: f64) -> Self {
        StabilizationParams {
            mode: StabilizationMode::Formula,
            mu,
            theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == StabilizationMode::Formula {
            if !(self.mu > 1.0) || !self.mu.is_finite() {
                return Err(Error::invalid("stabilization.mu", format!("must be finite and > 1, got {}", self.mu)));
            }
            if !(self.theta > 0.0 && self.theta < std::f64::consts::FRAC_PI_2) {
                return Err(Error::invalid("stabilization.theta", format!("must lie in (0, pi/2), got {}", self.theta)));
            }
        }
        Ok(())
    }
}

/// Per-element artificial diffusion with an optional diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtificialDiffusion {
    pub gamma: Vec<f64>,
    /// Set when the formula is applied to a mesh that is not strictly acute
    /// with the requested angle.
    pub warning: Option<String>,
}

/// `γ_K = max( μ(‖b‖ diam K + κ diam² K) / (σ sin θ) − ν, 0 )`, where `σ` is
/// the minimum of `σ_K` over the mesh.
pub fn artificial_diffusion(
    mesh: &Mesh,
    params: &StabilizationParams,
    drift_bound: f64,
    kappa: f64,
    nu: f64,
) -> Result<ArtificialDiffusion> {
    params.validate()?;
    if params.mode == StabilizationMode::Zero {
        return Ok(ArtificialDiffusion {
            gamma: vec![0.0; mesh.n_elements()],
            warning: None,
        });
    }
    let report = mesh.acuteness_report();
    if !(report.sigma_mesh > 0.0) {
        return Err(Error::invalid("mesh", "sigma must be positive"));
    }
    let s = params.theta.sin();
    let warning = (report.min_margin < s - crate::mesh::ACUTENESS_TOL).then(|| {
        let msg = format!(
            "mesh acuteness margin {:.6} is below sin(theta) = {:.6}; the maximum principle is not guaranteed",
            report.min_margin, s
        );
        log::warn!("{msg}");
        msg
    });
    let gamma = (0..mesh.n_elements())
        .map(|e| {
            let d = mesh.element_geometry(e).diameter;
            (params.mu * (drift_bound * d + kappa * d * d) / (report.sigma_mesh * s) - nu).max(0.0)
        })
        .collect();
    Ok(ArtificialDiffusion { gamma, warning })
}

/// A selected drift and running cost at every quadrature point of every element.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportField {
    points_per_element: usize,
    drift: Vec<Vec2>,
    cost: Vec<f64>,
}

impl TransportField {
    pub fn zeros(n_elements: usize, points_per_element: usize) -> Self {
        TransportField {
            points_per_element,
            drift: vec![[0.0; 2]; n_elements * points_per_element],
            cost: vec![0.0; n_elements * points_per_element],
        }
    }

    pub fn from_fn(space: &FESpace, rule: &QuadratureRule, mut f: impl FnMut(usize, Point) -> (Vec2, f64)) -> Self {
        let ne = space.mesh().n_elements();
        let mut drift = Vec::with_capacity(ne * rule.len());
        let mut cost = Vec::with_capacity(ne * rule.len());
        for e in 0..ne {
            for q in space.quad_points(e, rule) {
                let (b, c) = f(e, q.x);
                drift.push(b);
                cost.push(c);
            }
        }
        TransportField {
            points_per_element: rule.len(),
            drift,
            cost,
        }
    }

    pub fn constant(space: &FESpace, rule: &QuadratureRule, b: Vec2) -> Self {
        Self::from_fn(space, rule, |_, _| (b, 0.0))
    }

    /// The policy of `u`: on each element the selection at the constant
    /// gradient `∇u|_K`, evaluated at every quadrature point.
    pub fn select<H: ControlHamiltonian + ?Sized>(
        space: &FESpace,
        rule: &QuadratureRule,
        h: &H,
        u: &NodalFunction,
    ) -> Self {
        let mut grad = (usize::MAX, [0.0; 2]);
        Self::from_fn(space, rule, |e, x| {
            if grad.0 != e {
                grad = (e, space.element_gradient(u, e));
            }
            let c = h.select(x, grad.1);
            (c.drift, c.cost)
        })
    }

    pub fn points_per_element(&self) -> usize {
        self.points_per_element
    }

    pub fn n_elements(&self) -> usize {
        self.drift.len().checked_div(self.points_per_element).unwrap_or(0)
    }

    pub fn drift(&self, e: usize, q: usize) -> Vec2 {
        self.drift[e * self.points_per_element + q]
    }

    pub fn cost(&self, e: usize, q: usize) -> f64 {
        self.cost[e * self.points_per_element + q]
    }

    pub fn drifts(&self) -> &[Vec2] {
        &self.drift
    }

    pub fn max_drift_norm(&self) -> f64 {
        self.drift.iter().fold(0.0, |m, &b| m.max(norm(b)))
    }

    fn check(&self, space: &FESpace, rule: &QuadratureRule) -> Result<()> {
        if self.points_per_element != rule.len() || self.drift.len() != space.mesh().n_elements() * rule.len() {
            return Err(Error::SpaceMismatch(format!(
                "transport field has {} values, {} elements x {} points expected",
                self.drift.len(),
                space.mesh().n_elements(),
                rule.len()
            )));
        }
        Ok(())
    }
}

/// Coefficients and data of the coupled system.
pub struct ProblemData {
    pub nu: f64,
    pub kappa: f64,
    pub hamiltonian: Box<dyn ControlHamiltonian>,
    pub coupling: Box<dyn CouplingOperator>,
    pub source: Box<dyn SourceFunctional>,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData")
            .field("nu", &self.nu)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl ProblemData {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("must be non-negative, got {}", self.kappa)));
        }
        Ok(())
    }
}

const NO_SLOT: usize = usize::MAX;

/// The shared sparsity pattern and, for every element, the storage slot of
/// each local `(a, b)` pair (or `NO_SLOT` when a vertex is on the boundary).
#[derive(Debug, Clone)]
pub struct Pattern {
    zero: SparseMatrix,
    slots: Vec<[usize; 9]>,
}

impl Pattern {
    pub fn new(space: &FESpace) -> Result<Self> {
        let n = space.n_dofs();
        let ne = space.mesh().n_elements();
        let mut t = TripletBuffer::with_capacity(n, n, 9 * ne);
        for e in 0..ne {
            let d = space.element_dofs(e);
            for da in d.iter().flatten() {
                for db in d.iter().flatten() {
                    t.push(*da, *db, 0.0);
                }
            }
        }
        let zero = t.compress()?;
        let slots = (0..ne)
            .map(|e| {
                let d = space.element_dofs(e);
                let mut s = [NO_SLOT; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        if let (Some(i), Some(j)) = (d[a], d[b]) {
                            s[3 * a + b] = zero.slot(i, j).expect("pattern covers element couplings");
                        }
                    }
                }
                s
            })
            .collect();
        Ok(Pattern { zero, slots })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.zero
    }

    /// Sums the local matrices `local(e)` into the pattern in element order.
    pub fn assemble(&self, mut local: impl FnMut(usize) -> [[f64; 3]; 3]) -> SparseMatrix {
        let mut out = self.zero.clone();
        let vals = out.values_mut();
        for (e, s) in self.slots.iter().enumerate() {
            if s.iter().all(|&k| k == NO_SLOT) {
                continue;
            }
            let loc = local(e);
            for a in 0..3 {
                for b in 0..3 {
                    let k = s[3 * a + b];
                    if k != NO_SLOT {
                        vals[k] += loc[a][b];
                    }
                }
            }
        }
        out
    }
}

fn diffusion_with(space: &FESpace, pattern: &Pattern, coeff: &[f64]) -> Result<SparseMatrix> {
    let ne = space.mesh().n_elements();
    if coeff.len() != ne {
        return Err(Error::DimensionMismatch {
            expected: ne,
            got: coeff.len(),
        });
    }
    if let Some(e) = coeff.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::invalid("diffusion coefficient", format!("element {e} has {}", coeff[e])));
    }
    Ok(pattern.assemble(|e| {
        let g = &space.geometry(e).basis_gradients;
        let ca = coeff[e] * space.geometry(e).area;
        let mut loc = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                loc[a][b] = ca * dot(g[a], g[b]);
            }
        }
        loc
    }))
}

fn mass_with(space: &FESpace, pattern: &Pattern, rule: &QuadratureRule) -> SparseMatrix {
    pattern.assemble(|e| {
        let mut loc = [[0.0; 3]; 3];
        for q in space.quad_points(e, rule) {
            for a in 0..3 {
                for b in 0..3 {
                    loc[a][b] += q.weight * q.lambda[a] * q.lambda[b];
                }
            }
        }
        loc
    })
}

/// `(i, j) ↦ ∫ (b̃·∇ξ_j) ξ_i`, or its transpose when `adjoint` is set. Both
/// orientations perform the same floating-point operations, so the adjoint is
/// the exact transpose.
fn advection_with(
    space: &FESpace,
    pattern: &Pattern,
    field: &TransportField,
    rule: &QuadratureRule,
    adjoint: bool,
) -> Result<SparseMatrix> {
    field.check(space, rule)?;
    Ok(pattern.assemble(|e| {
        let g = &space.geometry(e).basis_gradients;
        let mut loc = [[0.0; 3]; 3];
        for (k, q) in space.quad_points(e, rule).enumerate() {
            let b = field.drift(e, k);
            for a in 0..3 {
                for c in 0..3 {
                    let v = q.weight * q.lambda[a] * dot(b, g[c]);
                    if adjoint {
                        loc[c][a] += v;
                    } else {
                        loc[a][c] += v;
                    }
                }
            }
        }
        loc
    }))
}

/// `∫ c_K ∇ξ_j·∇ξ_i` with one coefficient per element.
pub fn assemble_diffusion(space: &FESpace, coeff: &[f64]) -> Result<SparseMatrix> {
    diffusion_with(space, &Pattern::new(space)?, coeff)
}

/// Consistent mass matrix `∫ ξ_j ξ_i`.
pub fn assemble_mass(space: &FESpace, rule: &QuadratureRule) -> Result<SparseMatrix> {
    Ok(mass_with(space, &Pattern::new(space)?, rule))
}

/// `(i, j) ↦ ∫ (b̃·∇ξ_j) ξ_i`.
pub fn assemble_advection_hjb(space: &FESpace, field: &TransportField, rule: &QuadratureRule) -> Result<SparseMatrix> {
    advection_with(space, &Pattern::new(space)?, field, rule, false)
}

/// `(i, j) ↦ ∫ ξ_j b̃·∇ξ_i`.
pub fn assemble_advection_kfp(space: &FESpace, field: &TransportField, rule: &QuadratureRule) -> Result<SparseMatrix> {
    advection_with(space, &Pattern::new(space)?, field, rule, true)
}

/// `load_i = ∫ r ξ_i + g̃·∇ξ_i`, with `(r, g̃)` supplied per quadrature point.
pub fn assemble_load_with(
    space: &FESpace,
    rule: &QuadratureRule,
    mut f: impl FnMut(usize, usize, &QuadPoint) -> (f64, Vec2),
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.n_dofs()];
    for e in 0..space.mesh().n_elements() {
        let d = space.element_dofs(e);
        if d.iter().all(Option::is_none) {
            continue;
        }
        let g = &space.geometry(e).basis_gradients;
        for (k, q) in space.quad_points(e, rule).enumerate() {
            let (r, gt) = f(e, k, &q);
            if !(r.is_finite() && gt[0].is_finite() && gt[1].is_finite()) {
                return Err(Error::NonFinite(format!("load integrand on element {e} at {:?}", q.x)));
            }
            for a in 0..3 {
                if let Some(i) = d[a] {
                    out[i] += q.weight * (r * q.lambda[a] + dot(gt, g[a]));
                }
            }
        }
    }
    Ok(out)
}

/// `load_i = ∫ r ξ_i + g̃·∇ξ_i` for a source functional.
pub fn assemble_load<S: SourceFunctional + ?Sized>(space: &FESpace, source: &S, rule: &QuadratureRule) -> Result<Vec<f64>> {
    assemble_load_with(space, rule, |_, _, q| (source.r(q.x), source.g(q.x)))
}

/// Everything about one mesh that stays fixed across the nonlinear
/// iterations: the space, the quadrature rule, the pattern and its symbolic
/// factorization, and the linear part `(ν+γ)K + κM` of both equations.
#[derive(Debug)]
pub struct Discretization {
    space: FESpace,
    rule: QuadratureRule,
    pattern: Pattern,
    symbolic: SymbolicLu,
    nu: f64,
    kappa: f64,
    gamma: Vec<f64>,
    stiffness: SparseMatrix,
    mass: SparseMatrix,
    base: SparseMatrix,
}

impl Discretization {
    pub fn new(space: FESpace, rule: QuadratureRule, nu: f64, kappa: f64, gamma: Vec<f64>) -> Result<Self> {
        let pattern = Pattern::new(&space)?;
        let ne = space.mesh().n_elements();
        let stiffness = diffusion_with(&space, &pattern, &vec![1.0; ne])?;
        let coeff: Vec<f64> = gamma.iter().map(|g| nu + g).collect();
        let diffusion = diffusion_with(&space, &pattern, &coeff)?;
        let mass = mass_with(&space, &pattern, &rule);
        let base = if kappa == 0.0 { diffusion } else { diffusion.add_scaled(kappa, &mass)? };
        let symbolic = SymbolicLu::new(pattern.matrix())?;
        Ok(Discretization {
            space,
            rule,
            pattern,
            symbolic,
            nu,
            kappa,
            gamma,
            stiffness,
            mass,
            base,
        })
    }

    /// Builds the space, the artificial diffusion and the linear part for a
    /// problem on `mesh`.
    pub fn for_problem(mesh: Mesh, rule: QuadratureRule, data: &ProblemData, stab: &StabilizationParams) -> Result<Self> {
        data.validate()?;
        let ad = artificial_diffusion(&mesh, stab, data.hamiltonian.drift_bound(), data.kappa, data.nu)?;
        Discretization::new(FESpace::new(mesh), rule, data.nu, data.kappa, ad.gamma)
    }

    pub fn space(&self) -> &FESpace {
        &self.space
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    /// Stiffness matrix with unit coefficient.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// `(ν+γ)K + κM`.
    pub fn base(&self) -> &SparseMatrix {
        &self.base
    }

    pub fn advection_hjb(&self, field: &TransportField) -> Result<SparseMatrix> {
        advection_with(&self.space, &self.pattern, field, &self.rule, false)
    }

    pub fn advection_kfp(&self, field: &TransportField) -> Result<SparseMatrix> {
        advection_with(&self.space, &self.pattern, field, &self.rule, true)
    }

    /// `(ν+γ)K + B(b̃) + κM`.
    pub fn hjb_operator(&self, field: &TransportField) -> Result<SparseMatrix> {
        self.base.add_scaled(1.0, &self.advection_hjb(field)?)
    }

    /// `(ν+γ)K + B(b̃)ᵀ + κM`.
    pub fn kfp_operator(&self, field: &TransportField) -> Result<SparseMatrix> {
        self.base.add_scaled(1.0, &self.advection_kfp(field)?)
    }

    pub fn factor(&self, a: &SparseMatrix) -> Result<Factorization> {
        self.symbolic.factor(a)
    }

    pub fn load<S: SourceFunctional + ?Sized>(&self, source: &S) -> Result<Vec<f64>> {
        assemble_load(&self.space, source, &self.rule)
    }

    pub fn coupling_load<C: CouplingOperator + ?Sized>(&self, coupling: &C, m: &NodalFunction) -> Result<Vec<f64>> {
        coupling.load(&self.space, m, &self.rule)
    }

    /// `∫ f* ξ_i` for the running costs stored in `field`.
    pub fn cost_load(&self, field: &TransportField) -> Result<Vec<f64>> {
        field.check(&self.space, &self.rule)?;
        assemble_load_with(&self.space, &self.rule, |e, k, _| (field.cost(e, k), [0.0; 2]))
    }

    /// `‖v‖_{L²}` of a coefficient vector, through the mass matrix.
    pub fn l2_norm(&self, v: &[f64]) -> Result<f64> {
        Ok(quadratic_form(&self.mass, v)?.max(0.0).sqrt())
    }

    /// `(‖v‖² + ‖∇v‖²)^{1/2}` of a coefficient vector.
    pub fn h1_norm(&self, v: &[f64]) -> Result<f64> {
        Ok((quadratic_form(&self.mass, v)? + quadratic_form(&self.stiffness, v)?).max(0.0).sqrt())
    }
}

fn quadratic_form(a: &SparseMatrix, v: &[f64]) -> Result<f64> {
    Ok(a.matvec(v)?.iter().zip(v).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::EikonalHamiltonian;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_6;

    struct Src(fn(Point) -> f64, fn(Point) -> Vec2);

    impl SourceFunctional for Src {
        fn r(&self, x: Point) -> f64 {
            (self.0)(x)
        }
        fn g(&self, x: Point) -> Vec2 {
            (self.1)(x)
        }
    }

    fn space(n: usize) -> FESpace {
        FESpace::new(Mesh::unit_square(n))
    }

    fn random_field(space: &FESpace, rule: &QuadratureRule, rng: &mut impl Rng) -> TransportField {
        TransportField::from_fn(space, rule, |_, _| ([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], 0.0))
    }

    #[test]
    fn gamma_examples() {
        let p = StabilizationParams::formula(2.0, FRAC_PI_6);
        let one = artificial_diffusion(&Mesh::unit_square(1), &p, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(one.gamma.len(), 2);
        assert!(one.gamma.iter().all(|g| (g - 3.0).abs() < 1e-12));
        assert!(one.warning.is_some());

        let four = artificial_diffusion(&Mesh::unit_square(4), &p, 1.0, 0.0, 1.0).unwrap();
        assert!(four.gamma.iter().all(|g| g.abs() < 1e-12));

        let zero = artificial_diffusion(&Mesh::unit_square(3), &StabilizationParams::zero(), 1.0, 0.0, 1.0).unwrap();
        assert!(zero.gamma.iter().all(|&g| g == 0.0) && zero.warning.is_none());

        let strict = artificial_diffusion(&Mesh::equilateral_rhombus(2), &p, 1.0, 0.0, 0.01).unwrap();
        assert!(strict.warning.is_none());
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let m = Mesh::unit_square(2);
        for p in [StabilizationParams::formula(2.0, 2.0), StabilizationParams::formula(1.0, 0.3)] {
            assert!(matches!(artificial_diffusion(&m, &p, 1.0, 0.0, 1.0), Err(Error::InvalidParameter { .. })));
        }
    }

    #[test]
    fn small_mesh_entries() {
        let s = space(2);
        let rule = QuadratureRule::default();
        let k = assemble_diffusion(&s, &[1.0; 8]).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
        let m = assemble_mass(&s, &rule).unwrap();
        assert!((m.get(0, 0) - 0.125).abs() < 1e-15);
        let load = assemble_load(&s, &Src(|_| 1.0, |_| [0.0; 2]), &rule).unwrap();
        assert!((load[0] - 0.25).abs() < 1e-15);
        let flux = assemble_load(&s, &Src(|_| 0.0, |_| [1.0, 0.0]), &rule).unwrap();
        assert!(flux[0].abs() < 1e-15);
        let zero = assemble_diffusion(&s, &[0.0; 8]).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn symmetric_operators() {
        let s = space(6);
        let rule = QuadratureRule::default();
        let coeff: Vec<f64> = (0..s.mesh().n_elements()).map(|e| 1.0 + (e % 5) as f64).collect();
        for a in [assemble_diffusion(&s, &coeff).unwrap(), assemble_mass(&s, &rule).unwrap()] {
            assert_eq!(a, a.transpose());
        }
    }

    #[test]
    fn full_mass_sums_to_area() {
        // the full mass matrix over all nodes has entries ∫ λ_a λ_b per element
        let s = space(5);
        let rule = QuadratureRule::default();
        let total = s
            .integrate(&rule, |_, q| {
                let mut sum = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        sum += q.lambda[a] * q.lambda[b];
                    }
                }
                sum
            })
            .unwrap();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn advection_of_a_linear_function() {
        let s = space(8);
        let rule = QuadratureRule::default();
        let field = TransportField::constant(&s, &rule, [1.0, 0.0]);
        // the boundary column x = 1 carries nonzero values of x, so the product
        // is formed over all nodes
        let full = Mesh::unit_square(8);
        let x_full: Vec<f64> = full.nodes().iter().map(|p| p[0]).collect();
        let mut bx = vec![0.0; s.n_dofs()];
        for e in 0..full.n_elements() {
            let g = &s.geometry(e).basis_gradients;
            let vs = full.elements()[e];
            for q in s.quad_points(e, &rule) {
                let dx: f64 = (0..3).map(|c| x_full[vs[c]] * g[c][0]).sum();
                for a in 0..3 {
                    if let Some(i) = s.node_to_dof(vs[a]) {
                        bx[i] += q.weight * q.lambda[a] * dx;
                    }
                }
            }
        }
        let ones = assemble_load(&s, &Src(|_| 1.0, |_| [0.0; 2]), &rule).unwrap();
        for (l, r) in bx.iter().zip(&ones) {
            assert!((l - r).abs() < 1e-14);
        }
        // on rows whose patch only touches the boundary at x = 0 the
        // interior-dof matrix agrees
        let b = assemble_advection_hjb(&s, &field, &rule).unwrap();
        let bi = b.matvec(s.interpolate(|p| p[0]).unwrap().values()).unwrap();
        for (d, &k) in s.interior_dofs().iter().enumerate() {
            let p = full.nodes()[k];
            // the patch must avoid the boundary nodes where x ≠ 0
            if p[0] < 1.0 - 1.5 / 8.0 && p[1] > 1.5 / 8.0 && p[1] < 1.0 - 1.5 / 8.0 {
                assert!((bi[d] - ones[d]).abs() < 1e-14);
            }
        }
        let zero = TransportField::zeros(s.mesh().n_elements(), rule.len());
        assert_eq!(assemble_advection_hjb(&s, &zero, &rule).unwrap().max_abs(), 0.0);
        assert_eq!(assemble_advection_kfp(&s, &zero, &rule).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn kfp_is_the_exact_transpose() {
        let s = space(7);
        let rule = QuadratureRule::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..5 {
            let f = random_field(&s, &rule, &mut rng);
            let h = assemble_advection_hjb(&s, &f, &rule).unwrap();
            let k = assemble_advection_kfp(&s, &f, &rule).unwrap();
            assert_eq!(k, h.transpose());
        }
    }

    #[test]
    fn eikonal_selection_of_x_is_unit_drift() {
        let s = space(6);
        let rule = QuadratureRule::default();
        let u = s.interpolate(|p| p[0]).unwrap();
        let sel = TransportField::select(&s, &rule, &EikonalHamiltonian, &u);
        // boundary values are zero, so only elements whose vertices avoid the
        // sides x = 1, y = 0 and y = 1 see ∇u = (1, 0)
        for e in 0..s.mesh().n_elements() {
            if s.mesh().vertices(e).iter().all(|p| p[0] < 1.0 - 1e-12 && p[1] > 1e-12 && p[1] < 1.0 - 1e-12) {
                assert!((sel.drift(e, 0)[0] - 1.0).abs() < 1e-12 && sel.drift(e, 0)[1].abs() < 1e-12);
            }
        }
        assert!(sel.max_drift_norm() <= 1.0 + 1e-15);
    }

    #[test]
    fn divergence_free_field_is_antisymmetric_inside() {
        let s = space(8);
        let rule = QuadratureRule::default();
        let f = TransportField::constant(&s, &rule, [0.3, -0.7]);
        let b = assemble_advection_hjb(&s, &f, &rule).unwrap();
        let bt = b.transpose();
        for i in 0..b.nrows() {
            for (j, v) in b.row(i) {
                assert!((v + bt.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m_matrix_sign_pattern_on_strictly_acute_mesh() {
        let mesh = Mesh::equilateral_rhombus(6);
        let rule = QuadratureRule::default();
        let (nu, kappa) = (0.01, 0.5);
        let p = StabilizationParams::formula(1.5, FRAC_PI_6);
        let gamma = artificial_diffusion(&mesh, &p, 1.0, kappa, nu).unwrap().gamma;
        let d = Discretization::new(FESpace::new(mesh), rule, nu, kappa, gamma).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let f = TransportField::from_fn(d.space(), d.rule(), |_, _| {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r: f64 = rng.gen_range(0.0..1.0);
                ([r * t.cos(), r * t.sin()], 0.0)
            });
            let a = d.hjb_operator(&f).unwrap();
            for i in 0..a.nrows() {
                for (j, v) in a.row(i) {
                    if i != j {
                        assert!(v <= 1e-12, "a[{i}][{j}] = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn discretization_norms() {
        let s = space(16);
        let v = s.interpolate(|p| (p[0] * std::f64::consts::PI).sin() * p[1] * (1.0 - p[1])).unwrap();
        let rule = QuadratureRule::default();
        let expect = s.h1_norm(&v, &rule).unwrap();
        let s_l2 = s.l2_norm(&v, &rule).unwrap();
        let d = Discretization::new(s, rule, 1.0, 0.0, vec![0.0; 512]).unwrap();
        assert!((d.h1_norm(v.values()).unwrap() - expect).abs() < 1e-12);
        assert!((d.l2_norm(v.values()).unwrap() - s_l2).abs() < 1e-12);
    }
}
