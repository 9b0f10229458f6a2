//! Coupling operators `F`, source functionals `G` and the two benchmark
//! problems with their error measurements.

mod custom;
mod experiment1;
mod experiment2;
mod reference;

pub use custom::custom_problem;
pub use experiment1::{exact_errors_experiment1, ExperimentOne};
pub use experiment2::ExperimentTwo;
pub use reference::{reference_errors, ReferenceSolution, REFERENCE_FORMAT};

use serde::{Deserialize, Serialize};

use crate::assembly::assemble_load_with;
use crate::error::Result;
use crate::fespace::{FESpace, NodalFunction, QuadratureRule};
use crate::{Point, Vec2};

/// `⟨G, φ⟩ = ∫ r φ + g̃·∇φ`.
pub trait SourceFunctional: Send + Sync {
    fn r(&self, x: Point) -> f64;

    fn g(&self, _x: Point) -> Vec2 {
        [0.0; 2]
    }
}

/// A coupling `F[m]`, represented through its action on the interior basis.
///
/// The theory asks for growth bounds `‖F[v]‖_{H⁻¹} ≤ c₁‖v‖ + c₂`; they are not
/// checked numerically.
pub trait CouplingOperator: Send + Sync {
    /// `⟨F[m], ψ_i⟩` for every interior basis function.
    fn load(&self, space: &FESpace, m: &NodalFunction, rule: &QuadratureRule) -> Result<Vec<f64>>;
}

type ScalarFn = Box<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(Point) -> Vec2 + Send + Sync>;

/// A source functional built from closures.
pub struct FnSource {
    r: ScalarFn,
    g: VectorFn,
}

impl FnSource {
    pub fn new(
        r: impl Fn(Point) -> f64 + Send + Sync + 'static,
        g: impl Fn(Point) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        FnSource {
            r: Box::new(r),
            g: Box::new(g),
        }
    }

    pub fn scalar(r: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        FnSource::new(r, |_| [0.0; 2])
    }

    pub fn zero() -> Self {
        FnSource::scalar(|_| 0.0)
    }
}

impl SourceFunctional for FnSource {
    fn r(&self, x: Point) -> f64 {
        (self.r)(x)
    }

    fn g(&self, x: Point) -> Vec2 {
        (self.g)(x)
    }
}

/// Scalar nonlinearities available to local couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Tanh,
    Arctan,
    Zero,
}

impl Nonlinearity {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => v.tanh(),
            Nonlinearity::Arctan => v.atan(),
            Nonlinearity::Zero => 0.0,
        }
    }
}

/// `⟨F[m], ψ⟩ = ∫ g(m) ψ + ⟨S, ψ⟩` with a monotone scalar `g` applied to the
/// P1 reconstruction of `m` at quadrature points.
pub struct LocalCoupling {
    nonlinearity: Nonlinearity,
    source: Box<dyn SourceFunctional>,
}

impl LocalCoupling {
    pub fn new(nonlinearity: Nonlinearity, source: impl SourceFunctional + 'static) -> Self {
        LocalCoupling {
            nonlinearity,
            source: Box::new(source),
        }
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn source(&self) -> &dyn SourceFunctional {
        self.source.as_ref()
    }
}

impl CouplingOperator for LocalCoupling {
    fn load(&self, space: &FESpace, m: &NodalFunction, rule: &QuadratureRule) -> Result<Vec<f64>> {
        if m.len() != space.n_dofs() {
            return Err(crate::Error::DimensionMismatch {
                expected: space.n_dofs(),
                got: m.len(),
            });
        }
        assemble_load_with(space, rule, |e, _, q| {
            let mv = space.evaluate_in_element(m, e, q.lambda);
            (self.nonlinearity.apply(mv) + self.source.r(q.x), self.source.g(q.x))
        })
    }
}

/// Sign function with `sgn(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The four relative errors reported by the convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBundle {
    pub u_h1_rel: f64,
    pub m_l2_rel: f64,
    pub m_h1_rel: f64,
    pub drift_l2_rel: f64,
}
