//! Hamiltonians of the form `H(x, p) = sup_{α ∈ A} ( b(x, α)·p − f(x, α) )`.
//!
//! Besides evaluation, every Hamiltonian provides a pointwise selection from
//! its subdifferential `∂_p H(x, p)`: the drift `b(x, α*)` of a maximizing
//! control together with the running cost `f(x, α*)`. That selection is the
//! transport field of the density equation.

use crate::{dot, norm, Point, Vec2};

/// Gradients shorter than this are treated as zero by the eikonal selection.
pub const ZERO_GRADIENT: f64 = 1e-14;

/// Slack allowed in the subgradient inequality.
pub const SUBGRADIENT_TOL: f64 = 1e-10;

/// A subgradient `drift ∈ ∂_p H(x, p)` with the cost of the control realising it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientChoice {
    pub drift: Vec2,
    pub cost: f64,
    /// `H(x, p)`; equals `drift·p − cost` when the maximizer is exact.
    pub hamiltonian_value: f64,
}

pub trait ControlHamiltonian: Send + Sync {
    fn eval(&self, x: Point, p: Vec2) -> f64;

    fn select(&self, x: Point, p: Vec2) -> SubgradientChoice;

    /// `‖b‖_{C(Ω̄×A)}`, the Lipschitz constant of `H` in `p`.
    fn drift_bound(&self) -> f64;

    /// `‖f‖_{C(Ω̄×A)}`.
    fn cost_bound(&self) -> f64;

    /// Growth constant in `|H(x,p)| ≤ c (|p| + 1)`.
    fn growth_bound(&self) -> f64 {
        self.drift_bound().max(self.cost_bound())
    }
}

/// `H(x, p) = max_{|α| ≤ 1} α·p = |p|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EikonalHamiltonian;

impl ControlHamiltonian for EikonalHamiltonian {
    fn eval(&self, _x: Point, p: Vec2) -> f64 {
        norm(p)
    }

    /// `p/|p|` for nonzero `p`, and the zero drift (an element of the closed
    /// unit ball `∂_p H(x, 0)`) otherwise.
    fn select(&self, _x: Point, p: Vec2) -> SubgradientChoice {
        let r = norm(p);
        if r < ZERO_GRADIENT {
            return SubgradientChoice {
                drift: [0.0, 0.0],
                cost: 0.0,
                hamiltonian_value: r,
            };
        }
        SubgradientChoice {
            drift: [p[0] / r, p[1] / r],
            cost: 0.0,
            hamiltonian_value: r,
        }
    }

    fn drift_bound(&self) -> f64 {
        1.0
    }

    fn cost_bound(&self) -> f64 {
        0.0
    }
}

type DriftFn<A> = dyn Fn(Point, &A) -> Vec2 + Send + Sync;
type CostFn<A> = dyn Fn(Point, &A) -> f64 + Send + Sync;

/// Hamiltonian over a finite control set. Ties between maximizing controls
/// go to the lowest index.
pub struct FiniteControlHamiltonian<A> {
    controls: Vec<A>,
    drift: Box<DriftFn<A>>,
    cost: Box<CostFn<A>>,
    drift_bound: f64,
    cost_bound: f64,
}

impl<A> std::fmt::Debug for FiniteControlHamiltonian<A> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteControlHamiltonian")
            .field("n_controls", &self.controls.len())
            .field("drift_bound", &self.drift_bound)
            .field("cost_bound", &self.cost_bound)
            .finish()
    }
}

impl<A: Send + Sync> FiniteControlHamiltonian<A> {
    /// `drift_bound` and `cost_bound` must bound `|b|` and `|f|` uniformly over
    /// the closure of the domain and the control set.
    pub fn new(
        controls: Vec<A>,
        drift: impl Fn(Point, &A) -> Vec2 + Send + Sync + 'static,
        cost: impl Fn(Point, &A) -> f64 + Send + Sync + 'static,
        drift_bound: f64,
        cost_bound: f64,
    ) -> Self {
        assert!(!controls.is_empty(), "the control set must be non-empty");
        FiniteControlHamiltonian {
            controls,
            drift: Box::new(drift),
            cost: Box::new(cost),
            drift_bound,
            cost_bound,
        }
    }

    pub fn controls(&self) -> &[A] {
        &self.controls
    }

    pub fn drift_of(&self, x: Point, control: &A) -> Vec2 {
        (self.drift)(x, control)
    }

    pub fn cost_of(&self, x: Point, control: &A) -> f64 {
        (self.cost)(x, control)
    }

    /// Index of the lowest-index maximizing control and the maximum.
    pub fn argmax(&self, x: Point, p: Vec2) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, a) in self.controls.iter().enumerate() {
            let v = dot((self.drift)(x, a), p) - (self.cost)(x, a);
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }
}

impl FiniteControlHamiltonian<(Vec2, f64)> {
    /// Controls given directly as space-independent `(drift, cost)` pairs.
    pub fn from_pairs(pairs: Vec<(Vec2, f64)>) -> Self {
        let db = pairs.iter().map(|(b, _)| norm(*b)).fold(0.0, f64::max);
        let cb = pairs.iter().map(|(_, f)| f.abs()).fold(0.0, f64::max);
        FiniteControlHamiltonian::new(pairs, |_, a: &(Vec2, f64)| a.0, |_, a: &(Vec2, f64)| a.1, db, cb)
    }
}

impl<A: Send + Sync> ControlHamiltonian for FiniteControlHamiltonian<A> {
    fn eval(&self, x: Point, p: Vec2) -> f64 {
        self.argmax(x, p).1
    }

    fn select(&self, x: Point, p: Vec2) -> SubgradientChoice {
        let (k, value) = self.argmax(x, p);
        let a = &self.controls[k];
        SubgradientChoice {
            drift: (self.drift)(x, a),
            cost: (self.cost)(x, a),
            hamiltonian_value: value,
        }
    }

    fn drift_bound(&self) -> f64 {
        self.drift_bound
    }

    fn cost_bound(&self) -> f64 {
        self.cost_bound
    }
}

impl<H: ControlHamiltonian + ?Sized> ControlHamiltonian for Box<H> {
    fn eval(&self, x: Point, p: Vec2) -> f64 {
        (**self).eval(x, p)
    }
    fn select(&self, x: Point, p: Vec2) -> SubgradientChoice {
        (**self).select(x, p)
    }
    fn drift_bound(&self) -> f64 {
        (**self).drift_bound()
    }
    fn cost_bound(&self) -> f64 {
        (**self).cost_bound()
    }
}

/// True iff `H(x, q) ≥ H(x, p) + drift·(q − p) − tol` for every probe `q`,
/// with `H(x, p)` taken from `choice`.
pub fn verify_subgradient<H: ControlHamiltonian + ?Sized>(
    h: &H,
    x: Point,
    p: Vec2,
    choice: &SubgradientChoice,
    probes: &[Vec2],
) -> bool {
    probes.iter().all(|&q| {
        let lower = choice.hamiltonian_value + dot(choice.drift, [q[0] - p[0], q[1] - p[1]]);
        h.eval(x, q) >= lower - SUBGRADIENT_TOL
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_axes() -> FiniteControlHamiltonian<(Vec2, f64)> {
        FiniteControlHamiltonian::from_pairs(vec![([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)])
    }

    #[test]
    fn eikonal_eval() {
        let h = EikonalHamiltonian;
        assert_eq!(h.eval([0.3, 0.3], [3.0, 4.0]), 5.0);
        assert_eq!(h.eval([0.3, 0.3], [0.0, 0.0]), 0.0);
        assert_eq!((h.drift_bound(), h.cost_bound()), (1.0, 0.0));
    }

    #[test]
    fn eikonal_selection() {
        let h = EikonalHamiltonian;
        let c = h.select([0.5, 0.5], [3.0, 4.0]);
        assert!((c.drift[0] - 0.6).abs() < 1e-15 && (c.drift[1] - 0.8).abs() < 1e-15);
        assert_eq!((c.cost, c.hamiltonian_value), (0.0, 5.0));
        let z = h.select([0.5, 0.5], [0.0, 0.0]);
        assert_eq!(z.drift, [0.0, 0.0]);
        let tiny = h.select([0.5, 0.5], [1e-15, -1e-15]);
        assert_eq!(tiny.drift, [0.0, 0.0]);
    }

    #[test]
    fn finite_set_max_and_argmax() {
        let h = two_axes();
        assert_eq!(h.eval([0.1, 0.2], [2.0, 5.0]), 5.0);
        let c = h.select([0.1, 0.2], [2.0, 5.0]);
        assert_eq!(c.drift, [0.0, 1.0]);
        assert_eq!(c.hamiltonian_value, 5.0);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let h = two_axes();
        assert_eq!(h.select([0.0, 0.0], [1.0, 1.0]).drift, [1.0, 0.0]);
    }

    #[test]
    fn verify_examples() {
        let h = EikonalHamiltonian;
        let circle: Vec<Vec2> = (0..32)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 32.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let good = h.select([0.5, 0.5], [1.0, 0.0]);
        assert!(verify_subgradient(&h, [0.5, 0.5], [1.0, 0.0], &good, &circle));

        let zero = h.select([0.5, 0.5], [0.0, 0.0]);
        assert!(verify_subgradient(&h, [0.5, 0.5], [0.0, 0.0], &zero, &circle));

        let wrong = SubgradientChoice {
            drift: [2.0, 0.0],
            cost: 0.0,
            hamiltonian_value: 1.0,
        };
        assert!(verify_subgradient(&h, [0.5, 0.5], [1.0, 0.0], &wrong, &[[0.0, 0.0]]));
        assert!(!verify_subgradient(&h, [0.5, 0.5], [1.0, 0.0], &wrong, &[[2.0, 0.0]]));
    }

    #[test]
    fn consistency_of_the_choice() {
        let h = FiniteControlHamiltonian::new(
            vec![0.0, 1.0, 2.0],
            |x: Point, a: &f64| [a.cos() * x[0], a.sin()],
            |x: Point, a: &f64| a * x[1],
            2.0,
            2.0,
        );
        let (x, p) = ([0.4, 0.7], [1.3, -0.2]);
        let c = h.select(x, p);
        assert!((dot(c.drift, p) - c.cost - c.hamiltonian_value).abs() < 1e-12);
    }
}
