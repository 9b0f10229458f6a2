//! Symmetric quadrature rules on the reference triangle.
//!
//! Points are barycentric; weights are normalised to sum to one, so the
//! physical weight of a point is `weight × area`. All points are strictly
//! interior, which keeps integrands with boundary singularities evaluable.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::with_degree(4).expect("degree 4 is supported")
    }
}

impl QuadratureRule {
    /// The cheapest available rule integrating polynomials of total degree
    /// `degree` exactly. Degrees 1 through 6 are supported.
    pub fn with_degree(degree: usize) -> Result<Self> {
        let (points, weights, exact) = match degree {
            1 => (vec![[1.0 / 3.0; 3]], vec![1.0], 1),
            2 => {
                let (p, w) = orbit3(1.0 / 6.0, 1.0 / 3.0);
                (p, w, 2)
            }
            3 | 4 => {
                // Dunavant, six points
                let r10 = 10f64.sqrt();
                let s = (38.0 - 44.0 * (0.4f64).sqrt()).sqrt();
                let t = (213125.0 - 53320.0 * r10).sqrt();
                let rule = concat([
                    orbit3((8.0 - r10 + s) / 18.0, (620.0 + t) / 3720.0),
                    orbit3((8.0 - r10 - s) / 18.0, (620.0 - t) / 3720.0),
                ]);
                (rule.0, rule.1, 4)
            }
            5 => {
                // Radon, seven points
                let r15 = 15f64.sqrt();
                let rule = concat([
                    (vec![[1.0 / 3.0; 3]], vec![9.0 / 40.0]),
                    orbit3((6.0 - r15) / 21.0, (155.0 - r15) / 1200.0),
                    orbit3((6.0 + r15) / 21.0, (155.0 + r15) / 1200.0),
                ]);
                (rule.0, rule.1, 5)
            }
            6 => {
                // Dunavant, twelve points
                let rule = concat([
                    orbit3(0.063089014491502228340331602870819, 0.050844906370206816920936809106869),
                    orbit3(0.249286745170910421291638553107019, 0.116786275726379366030690538687326),
                    orbit6(
                        [0.053145049844816947353249671631398, 0.310352451033784405416607733956552],
                        0.082851075618373575193553456420442,
                    ),
                ]);
                (rule.0, rule.1, 6)
            }
            d => return Err(Error::UnsupportedQuadrature(d)),
        };
        Ok(QuadratureRule {
            points,
            weights,
            degree: exact,
        })
    }

    /// Total degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

type Rule = (Vec<[f64; 3]>, Vec<f64>);

fn concat<const N: usize>(parts: [Rule; N]) -> Rule {
    parts.into_iter().fold((Vec::new(), Vec::new()), |(mut p, mut w), (q, v)| {
        p.extend(q);
        w.extend(v);
        (p, w)
    })
}

/// The three points `(a, a, 1−2a)` and its rotations.
fn orbit3(a: f64, w: f64) -> Rule {
    let b = 1.0 - 2.0 * a;
    (vec![[a, a, b], [a, b, a], [b, a, a]], vec![w; 3])
}

/// The six permutations of `(a, b, 1−a−b)`.
fn orbit6([a, b]: [f64; 2], w: f64) -> Rule {
    let c = 1.0 - a - b;
    (
        vec![[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]],
        vec![w; 6],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    /// ∫ x^a y^b over the triangle (0,0), (1,0), (0,1).
    fn monomial_integral(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn monomials_are_integrated_exactly() {
        for requested in 1..=6 {
            let rule = QuadratureRule::with_degree(requested).unwrap();
            assert!(rule.degree() >= requested);
            let wsum: f64 = rule.weights().iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for d in 0..=rule.degree() {
                for a in 0..=d {
                    let b = d - a;
                    let q: f64 = 0.5 * rule.iter().map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32)).sum::<f64>();
                    assert!((q - monomial_integral(a, b)).abs() < 1e-13, "degree {requested}: x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn points_are_interior() {
        for d in 1..=6 {
            let rule = QuadratureRule::with_degree(d).unwrap();
            for p in rule.points() {
                assert!(p.iter().all(|&l| l > 0.0 && l < 1.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(matches!(QuadratureRule::with_degree(0), Err(Error::UnsupportedQuadrature(0))));
        assert!(QuadratureRule::with_degree(7).is_err());
        assert_eq!(QuadratureRule::default().len(), 6);
    }
}
