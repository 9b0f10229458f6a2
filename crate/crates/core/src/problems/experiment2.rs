//! Benchmark with discontinuous data and no closed-form solution:
//! `F[v] = arctan(v) + 2 sgn((x − ½) cos 8πy)`, `r = ½(sgn(sin 4πx sin 4πy) + 1)`
//! and a piecewise transport flux `g̃`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{sgn, FnSource, LocalCoupling, Nonlinearity};
use crate::assembly::ProblemData;
use crate::hamiltonian::EikonalHamiltonian;
use crate::{Point, Vec2};

#[derive(Debug, Clone)]
pub struct ExperimentTwo {
    pub nu: f64,
    pub kappa: f64,
    zero_hits: Arc<AtomicUsize>,
}

impl Default for ExperimentTwo {
    fn default() -> Self {
        ExperimentTwo::new(1.0, 0.0)
    }
}

impl ExperimentTwo {
    pub fn new(nu: f64, kappa: f64) -> Self {
        ExperimentTwo {
            nu,
            kappa,
            zero_hits: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn coupling_sign(x: Point) -> f64 {
        sgn((x[0] - 0.5) * (8.0 * PI * x[1]).cos())
    }

    pub fn r(x: Point) -> f64 {
        0.5 * (sgn((4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin()) + 1.0)
    }

    /// `y(1, 0)` for `0 < x < 2/3`, otherwise `y²(−1, 0)`.
    pub fn c_tilde(x: Point) -> Vec2 {
        if x[0] > 0.0 && x[0] < 2.0 / 3.0 {
            [x[1], 0.0]
        } else {
            [-x[1] * x[1], 0.0]
        }
    }

    /// Number of evaluations so far at which a sign argument was exactly zero.
    pub fn sgn_zero_hits(&self) -> usize {
        self.zero_hits.load(Ordering::Relaxed)
    }

    pub fn coupling(&self) -> LocalCoupling {
        let hits = Arc::clone(&self.zero_hits);
        LocalCoupling::new(
            Nonlinearity::Arctan,
            FnSource::scalar(move |x| {
                let s = Self::coupling_sign(x);
                if s == 0.0 {
                    hits.fetch_add(1, Ordering::Relaxed);
                }
                2.0 * s
            }),
        )
    }

    pub fn source(&self) -> FnSource {
        let hits = Arc::clone(&self.zero_hits);
        FnSource::new(
            move |x| {
                if (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin() == 0.0 {
                    hits.fetch_add(1, Ordering::Relaxed);
                }
                Self::r(x)
            },
            Self::c_tilde,
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
