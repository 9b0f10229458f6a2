//! Fine-mesh reference solutions: persistence and errors of coarser solutions
//! measured against them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ErrorBundle;
use crate::assembly::{Discretization, StabilizationParams};
use crate::error::{Error, Result};
use crate::fespace::NodalFunction;
use crate::hamiltonian::ControlHamiltonian;
use crate::mfg::MfgSolution;

pub const REFERENCE_FORMAT: &str = "mfgpdi-reference v1";

/// A stored solution together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSolution {
    pub format: String,
    pub experiment: String,
    pub n: usize,
    pub nu: f64,
    pub kappa: f64,
    pub quadrature_degree: usize,
    pub stabilization: StabilizationParams,
    pub tol: f64,
    pub outer_iterations: usize,
    /// Interior nodal values in increasing node order.
    pub u: Vec<f64>,
    pub m: Vec<f64>,
}

impl ReferenceSolution {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: ReferenceSolution = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if r.format != REFERENCE_FORMAT {
            return Err(Error::Format(format!(
                "unsupported reference format `{}` (expected `{REFERENCE_FORMAT}`)",
                r.format
            )));
        }
        let dofs = r.n.saturating_sub(1).pow(2);
        if r.u.len() != dofs || r.m.len() != dofs {
            return Err(Error::Format(format!(
                "reference at n = {} needs {dofs} values per field, found {} and {}",
                r.n,
                r.u.len(),
                r.m.len()
            )));
        }
        Ok(r)
    }

    pub fn u(&self) -> NodalFunction {
        NodalFunction::new(self.u.clone())
    }

    pub fn m(&self) -> NodalFunction {
        NodalFunction::new(self.m.clone())
    }
}

/// Relative errors of `sol` against `reference` on a nested finer uniform
/// mesh. The coarse functions are injected exactly into the fine space and
/// all norms are taken there; the coarse transport field is re-selected at
/// the fine quadrature points from the coarse element gradients.
pub fn reference_errors<H: ControlHamiltonian + ?Sized>(
    coarse: &Discretization,
    sol: &MfgSolution,
    fine: &Discretization,
    reference: &MfgSolution,
    h: &H,
) -> Result<ErrorBundle> {
    let (cm, fm) = (coarse.space().mesh(), fine.space().mesh());
    let (nc, nf) = match (cm.subdivisions(), fm.subdivisions()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NonNested("both meshes must belong to the uniform family".into())),
    };
    if nf <= nc || nf % nc != 0 {
        return Err(Error::NonNested(format!(
            "reference level n = {nf} is not a strictly finer multiple of n = {nc}"
        )));
    }
    let fs = fine.space();
    let inject = |v: &NodalFunction| -> Result<Vec<f64>> {
        fs.interior_dofs()
            .iter()
            .map(|&k| {
                let (i, j) = (k % (nf + 1), k / (nf + 1));
                let (e, lambda) = cm
                    .locate_lattice_point(i, j, nf)
                    .ok_or_else(|| Error::NonNested(format!("fine node {k} has no coarse element")))?;
                Ok(coarse.space().evaluate_in_element(v, e, lambda))
            })
            .collect()
    };
    let rel = |coarse_vals: Vec<f64>, r: &NodalFunction, h1: bool, what: &str| -> Result<f64> {
        let d: Vec<f64> = coarse_vals.iter().zip(r.values()).map(|(a, b)| a - b).collect();
        let (num, den) = if h1 {
            (fine.h1_norm(&d)?, fine.h1_norm(r.values())?)
        } else {
            (fine.l2_norm(&d)?, fine.l2_norm(r.values())?)
        };
        if den == 0.0 {
            return Err(Error::ZeroNorm(format!("reference {what}")));
        }
        Ok(num / den)
    };
    let (iu, im) = (inject(&sol.u)?, inject(&sol.m)?);
    let u_h1_rel = rel(iu, &reference.u, true, "u")?;
    let m_l2_rel = rel(im.clone(), &reference.m, false, "m")?;
    let m_h1_rel = rel(im, &reference.m, true, "m")?;

    let (mut num, mut den) = (0.0, 0.0);
    for e in 0..fm.n_elements() {
        let v = fm.vertices(e);
        let centroid = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
        let ec = cm
            .locate(centroid)
            .ok_or_else(|| Error::NonNested(format!("fine element {e} has no coarse parent")))?;
        let g = coarse.space().element_gradient(&sol.u, ec);
        for (k, q) in fs.quad_points(e, fine.rule()).enumerate() {
            let b = h.select(q.x, g).drift;
            let r = reference.field.drift(e, k);
            num += q.weight * ((b[0] - r[0]).powi(2) + (b[1] - r[1]).powi(2));
            den += q.weight * (r[0] * r[0] + r[1] * r[1]);
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroNorm("reference drift".into()));
    }
    Ok(ErrorBundle {
        u_h1_rel,
        m_l2_rel,
        m_h1_rel,
        drift_l2_rel: (num / den).sqrt(),
    })
}
