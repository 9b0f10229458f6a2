use super::{FnSource, LocalCoupling, Nonlinearity};
use crate::assembly::ProblemData;
use crate::hamiltonian::EikonalHamiltonian;

/// Eikonal problem with `F[m] = g(m) + f` and `G = c` for constants `f`, `c`.
pub fn custom_problem(nu: f64, kappa: f64, nonlinearity: Nonlinearity, f: f64, c: f64) -> ProblemData {
    ProblemData {
        nu,
        kappa,
        hamiltonian: Box::new(EikonalHamiltonian),
        coupling: Box::new(LocalCoupling::new(nonlinearity, FnSource::scalar(move |_| f))),
        source: Box::new(FnSource::scalar(move |_| c)),
    }
}
