//! Continuous piecewise-linear functions vanishing on the boundary.
//!
//! Degrees of freedom are the interior nodes of the mesh, in increasing node
//! order. Boundary values are eliminated structurally: a [`NodalFunction`]
//! only stores interior values and is implicitly zero on `∂Ω`.

mod quadrature;

pub use quadrature::QuadratureRule;

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, Mesh};
use crate::{Point, Vec2};

#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Mesh,
    geometry: Vec<ElementGeometry>,
    node_to_dof: Vec<Option<usize>>,
    interior_dofs: Vec<usize>,
}

/// Interior nodal values of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFunction {
    values: Vec<f64>,
}

/// Absolute and relative L² and H¹ errors. The H¹ norm is the full norm
/// `(‖v‖² + ‖∇v‖²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2_abs: f64,
    pub l2_rel: f64,
    pub h1_abs: f64,
    pub h1_rel: f64,
}

/// A quadrature point mapped onto an element.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: Point,
    /// Barycentric coordinates, which are also the local hat-function values.
    pub lambda: [f64; 3],
    /// `weight × area`.
    pub weight: f64,
}

impl NodalFunction {
    pub fn new(values: Vec<f64>) -> Self {
        NodalFunction { values }
    }

    pub fn zeros(n: usize) -> Self {
        NodalFunction { values: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl FESpace {
    pub fn new(mesh: Mesh) -> Self {
        let geometry = (0..mesh.n_elements()).map(|e| mesh.element_geometry(e)).collect();
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        let mut interior_dofs = Vec::new();
        for (k, slot) in node_to_dof.iter_mut().enumerate() {
            if !mesh.is_boundary(k) {
                *slot = Some(interior_dofs.len());
                interior_dofs.push(k);
            }
        }
        FESpace {
            mesh,
            geometry,
            node_to_dof,
            interior_dofs,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.interior_dofs.len()
    }

    /// Node index of each degree of freedom.
    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn node_to_dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    /// Degrees of freedom of the three vertices of `e` (`None` on the boundary).
    pub fn element_dofs(&self, e: usize) -> [Option<usize>; 3] {
        self.mesh.elements()[e].map(|v| self.node_to_dof[v])
    }

    pub fn zero(&self) -> NodalFunction {
        NodalFunction::zeros(self.n_dofs())
    }

    fn check(&self, v: &NodalFunction) -> Result<()> {
        if v.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Nodal interpolant; `f` is sampled at interior nodes only.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Result<NodalFunction> {
        let nodes = self.mesh.nodes();
        let values = self
            .interior_dofs
            .iter()
            .map(|&k| {
                let y = f(nodes[k]);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::NonFinite(format!("interpolant at node {k} ({:?})", nodes[k])))
                }
            })
            .collect::<Result<_>>()?;
        Ok(NodalFunction { values })
    }

    /// The three vertex values of `v` on element `e`.
    pub fn local_values(&self, v: &NodalFunction, e: usize) -> [f64; 3] {
        self.element_dofs(e).map(|d| d.map_or(0.0, |d| v.values[d]))
    }

    /// The constant gradient of `v` on element `e`.
    pub fn element_gradient(&self, v: &NodalFunction, e: usize) -> Vec2 {
        let vals = self.local_values(v, e);
        let g = &self.geometry[e].basis_gradients;
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += vals[k] * g[k][0];
            out[1] += vals[k] * g[k][1];
        }
        out
    }

    pub fn evaluate_in_element(&self, v: &NodalFunction, e: usize, lambda: [f64; 3]) -> f64 {
        let vals = self.local_values(v, e);
        lambda[0] * vals[0] + lambda[1] * vals[1] + lambda[2] * vals[2]
    }

    /// Point evaluation of the piecewise-linear reconstruction.
    pub fn evaluate(&self, v: &NodalFunction, p: Point) -> Option<f64> {
        let e = match self.mesh.locate(p) {
            Some(e) => e,
            None => (0..self.mesh.n_elements()).find(|&e| barycentric(self.mesh.vertices(e), p).iter().all(|&l| l >= -1e-14))?,
        };
        Some(self.evaluate_in_element(v, e, barycentric(self.mesh.vertices(e), p)))
    }

    /// Quadrature points of `rule` mapped onto element `e`.
    pub fn quad_points<'a>(&'a self, e: usize, rule: &'a QuadratureRule) -> impl Iterator<Item = QuadPoint> + 'a {
        let [p0, p1, p2] = self.mesh.vertices(e);
        let area = self.geometry[e].area;
        rule.iter().map(move |(l, w)| QuadPoint {
            x: [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ],
            lambda: l,
            weight: w * area,
        })
    }

    /// `Σ_K Σ_q w_q f(K, q)`; fails on the first non-finite integrand value.
    pub fn integrate(&self, rule: &QuadratureRule, mut f: impl FnMut(usize, &QuadPoint) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for e in 0..self.mesh.n_elements() {
            for q in self.quad_points(e, rule) {
                let y = f(e, &q);
                if !y.is_finite() {
                    return Err(Error::NonFinite(format!("integrand on element {e} at {:?}", q.x)));
                }
                total += q.weight * y;
            }
        }
        Ok(total)
    }

    pub fn l2_norm(&self, v: &NodalFunction, rule: &QuadratureRule) -> Result<f64> {
        self.check(v)?;
        Ok(self.integrate(rule, |e, q| self.evaluate_in_element(v, e, q.lambda).powi(2))?.sqrt())
    }

    /// `‖∇v‖_{L²}`, exact for P1.
    pub fn h1_seminorm(&self, v: &NodalFunction) -> Result<f64> {
        self.check(v)?;
        let s: f64 = (0..self.mesh.n_elements())
            .map(|e| {
                let g = self.element_gradient(v, e);
                self.geometry[e].area * (g[0] * g[0] + g[1] * g[1])
            })
            .sum();
        Ok(s.sqrt())
    }

    pub fn h1_norm(&self, v: &NodalFunction, rule: &QuadratureRule) -> Result<f64> {
        Ok(self.l2_norm(v, rule)?.hypot(self.h1_seminorm(v)?))
    }

    /// Errors of `v` against a function known pointwise together with its
    /// gradient. Relative errors divide by the same norm of `exact`.
    pub fn error_norms(
        &self,
        v: &NodalFunction,
        exact: impl Fn(Point) -> f64,
        exact_grad: impl Fn(Point) -> Vec2,
        rule: &QuadratureRule,
    ) -> Result<ErrorNorms> {
        self.check(v)?;
        let (mut e0, mut e1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
        for e in 0..self.mesh.n_elements() {
            let gh = self.element_gradient(v, e);
            for q in self.quad_points(e, rule) {
                let (u, g) = (exact(q.x), exact_grad(q.x));
                let uh = self.evaluate_in_element(v, e, q.lambda);
                if !(u.is_finite() && g[0].is_finite() && g[1].is_finite()) {
                    return Err(Error::NonFinite(format!("exact solution at {:?}", q.x)));
                }
                e0 += q.weight * (uh - u).powi(2);
                e1 += q.weight * ((gh[0] - g[0]).powi(2) + (gh[1] - g[1]).powi(2));
                n0 += q.weight * u * u;
                n1 += q.weight * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        let (l2_abs, h1_abs) = (e0.sqrt(), (e0 + e1).sqrt());
        let (l2_ref, h1_ref) = (n0.sqrt(), (n0 + n1).sqrt());
        if l2_ref == 0.0 || h1_ref == 0.0 {
            return Err(Error::ZeroNorm("exact solution".into()));
        }
        Ok(ErrorNorms {
            l2_abs,
            l2_rel: l2_abs / l2_ref,
            h1_abs,
            h1_rel: h1_abs / h1_ref,
        })
    }

    /// Nodal values over all mesh nodes, zero on the boundary.
    pub fn full_nodal_values(&self, v: &NodalFunction) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.n_nodes()];
        for (d, &k) in self.interior_dofs.iter().enumerate() {
            out[k] = v.values[d];
        }
        out
    }
}

fn barycentric([p0, p1, p2]: [Point; 3], p: Point) -> [f64; 3] {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
    let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
