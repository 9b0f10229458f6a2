//! Conforming triangulations of planar domains.
//!
//! The workhorse is [`Mesh::unit_square`]: `n × n` squares, each cut along the
//! diagonal from its lower-left to its upper-right corner. Coordinates are
//! generated as `i / n`, so a mesh and its uniform refinement share bitwise
//! identical coordinates for every coarse node.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::{dot, norm, Point, Vec2};

/// Tolerance under which an acuteness margin counts as zero.
pub const ACUTENESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    on_boundary: Vec<bool>,
    level: usize,
    /// `Some(n)` for the uniform unit-square family.
    subdivisions: Option<usize>,
}

/// Geometry of one triangle together with its three (constant) hat-function
/// gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub diameter: f64,
    pub area: f64,
    pub basis_gradients: [Vec2; 3],
    /// `diameter × min_i |∇ξ_i|`.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acuteness {
    /// Every angle is at most `π/2 − theta`.
    StrictlyAcute { theta: f64 },
    WeaklyAcute,
    NotAcute,
}

impl std::fmt::Display for Acuteness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Acuteness::StrictlyAcute { theta } => write!(f, "strictly_acute(theta={theta:.17e})"),
            Acuteness::WeaklyAcute => f.write_str("weakly_acute"),
            Acuteness::NotAcute => f.write_str("not_acute"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcutenessReport {
    /// Minimum of `-(∇ξ_i·∇ξ_j) / (|∇ξ_i||∇ξ_j|)` over all elements and local pairs `i ≠ j`.
    pub min_margin: f64,
    pub classification: Acuteness,
    /// Minimum of `sigma` over all elements.
    pub sigma_mesh: f64,
}

impl Mesh {
    /// Uniform triangulation of `[0,1]²` with `n` subdivisions per side.
    ///
    /// Panics if `n == 0`.
    pub fn unit_square(n: usize) -> Mesh {
        assert!(n >= 1, "a unit-square mesh needs at least one subdivision");
        let nn = n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 / nn, j as f64 / nn]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        let on_boundary: Vec<bool> = (0..nodes.len())
            .map(|k| {
                let (i, j) = (k % (n + 1), k / (n + 1));
                i == 0 || j == 0 || i == n || j == n
            })
            .collect();
        let boundary_nodes = (0..nodes.len()).filter(|&k| on_boundary[k]).collect();
        Mesh {
            nodes,
            elements,
            boundary_nodes,
            on_boundary,
            level: n.trailing_zeros() as usize,
            subdivisions: Some(n),
        }
    }

    /// Builds a mesh from raw parts. Clockwise triangles are reoriented; the
    /// boundary is the set of nodes lying on edges owned by a single element.
    pub fn from_parts(nodes: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Mesh> {
        let mut elements = elements;
        for (e, tri) in elements.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nodes.len() {
                    return Err(Error::Format(format!("element {e} references missing node {v}")));
                }
            }
            let twice_area = signed_twice_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if twice_area == 0.0 || !twice_area.is_finite() {
                return Err(Error::Format(format!("element {e} is degenerate")));
            }
            if twice_area < 0.0 {
                tri.swap(1, 2);
            }
        }
        let counts = edge_counts(&elements);
        if let Some((edge, c)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Format(format!("edge {edge:?} is shared by {c} elements")));
        }
        let mut on_boundary = vec![false; nodes.len()];
        for (&(a, b), &c) in &counts {
            if c == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let boundary_nodes = (0..nodes.len()).filter(|&k| on_boundary[k]).collect();
        Ok(Mesh {
            nodes,
            elements,
            boundary_nodes,
            on_boundary,
            level: 0,
            subdivisions: None,
        })
    }

    /// Rhombus `{ s(1,0) + t(1/2, √3/2) : s,t ∈ [0,1] }` tiled by `2n²`
    /// equilateral triangles of side `1/n`. Strictly acute with `θ = π/6`.
    pub fn equilateral_rhombus(n: usize) -> Mesh {
        assert!(n >= 1);
        let h = 1.0 / n as f64;
        let s3 = 3f64.sqrt() / 2.0;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([(i as f64 + 0.5 * j as f64) * h, j as f64 * s3 * h]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                elements.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::from_parts(nodes, elements).expect("lattice construction is valid")
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Sorted indices of the nodes on the domain boundary.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn subdivisions(&self) -> Option<usize> {
        self.subdivisions
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_geometry(e).diameter)
            .fold(0.0, f64::max)
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        let [p0, p1, p2] = self.vertices(e);
        let det = signed_twice_area(p0, p1, p2);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        let diameter = [(p0, p1), (p1, p2), (p2, p0)]
            .iter()
            .map(|&(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .fold(0.0, f64::max);
        let min_grad = grads.iter().map(|&g| norm(g)).fold(f64::INFINITY, f64::min);
        ElementGeometry {
            diameter,
            area: 0.5 * det.abs(),
            basis_gradients: grads,
            sigma: diameter * min_grad,
        }
    }

    pub fn acuteness_report(&self) -> AcutenessReport {
        let mut min_margin = f64::INFINITY;
        let mut sigma_mesh = f64::INFINITY;
        for e in 0..self.n_elements() {
            let g = self.element_geometry(e);
            sigma_mesh = sigma_mesh.min(g.sigma);
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        continue;
                    }
                    let (gi, gj) = (g.basis_gradients[i], g.basis_gradients[j]);
                    min_margin = min_margin.min(-dot(gi, gj) / (norm(gi) * norm(gj)));
                }
            }
        }
        let classification = if min_margin.abs() <= ACUTENESS_TOL {
            Acuteness::WeaklyAcute
        } else if min_margin > 0.0 {
            Acuteness::StrictlyAcute {
                theta: min_margin.asin(),
            }
        } else {
            Acuteness::NotAcute
        };
        AcutenessReport {
            min_margin,
            classification,
            sigma_mesh,
        }
    }

    /// Checks that every interior edge is shared by exactly two elements and
    /// every boundary edge belongs to exactly one.
    pub fn check_conformity(&self) -> Result<()> {
        for (&(a, b), &c) in &edge_counts(&self.elements) {
            let boundary_edge = self.on_boundary[a] && self.on_boundary[b] && c == 1;
            if c > 2 || (c == 1 && !boundary_edge) {
                return Err(Error::Format(format!("edge ({a}, {b}) appears {c} times")));
            }
        }
        Ok(())
    }

    /// The next mesh of the nested family. For the uniform family this is
    /// exactly `unit_square(2n)`; other meshes are red-refined (each triangle
    /// split into four through its edge midpoints).
    pub fn refine_uniform(&self) -> Mesh {
        if let Some(n) = self.subdivisions {
            let mut fine = Mesh::unit_square(2 * n);
            fine.level = self.level + 1;
            return fine;
        }
        let mut nodes = self.nodes.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut elements = Vec::with_capacity(4 * self.n_elements());
        for &[a, b, c] in &self.elements {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            elements.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut fine = Mesh::from_parts(nodes, elements).expect("red refinement preserves validity");
        fine.level = self.level + 1;
        fine
    }

    /// For the uniform family, the element containing the point
    /// `(ix / denom, iy / denom)` and the barycentric coordinates of the point
    /// within it. `denom` must be a multiple of `n`; the arithmetic is then exact
    /// whenever `denom / n` is a power of two.
    pub fn locate_lattice_point(&self, ix: usize, iy: usize, denom: usize) -> Option<(usize, [f64; 3])> {
        let n = self.subdivisions?;
        if denom % n != 0 || ix > denom || iy > denom {
            return None;
        }
        let k = denom / n;
        let (mut i, mut j) = (ix / k, iy / k);
        let (mut rx, mut ry) = (ix % k, iy % k);
        if i == n {
            i -= 1;
            rx = k;
        }
        if j == n {
            j -= 1;
            ry = k;
        }
        let (fx, fy) = (rx as f64 / k as f64, ry as f64 / k as f64);
        let square = j * n + i;
        if ry <= rx {
            Some((2 * square, [1.0 - fx, fx - fy, fy]))
        } else {
            Some((2 * square + 1, [1.0 - fy, fx, fy - fx]))
        }
    }

    /// Element of the uniform family containing `p` (ties go to the lower-left
    /// cell and to the lower triangle).
    pub fn locate(&self, p: Point) -> Option<usize> {
        let n = self.subdivisions?;
        if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
            return None;
        }
        let nn = n as f64;
        let i = ((p[0] * nn).floor() as usize).min(n - 1);
        let j = ((p[1] * nn).floor() as usize).min(n - 1);
        let (fx, fy) = (p[0] * nn - i as f64, p[1] * nn - j as f64);
        Some(2 * (j * n + i) + usize::from(fy > fx))
    }

    /// Plain-text dump: `v x y` per node, then `t i j k` per element.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.nodes {
            writeln!(w, "v {:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.elements {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn signed_twice_area(p0: Point, p1: Point, p2: Point) -> f64 {
    (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
}

fn edge_counts(elements: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::with_capacity(3 * elements.len());
    for &[a, b, c] in elements {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            *counts.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }
    }
    counts
}
