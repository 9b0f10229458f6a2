//! Sparse linear algebra: triplet assembly, compressed-row matrices and a
//! nonsymmetric sparse direct solver.
//!
//! Numerical factorization is delegated to `faer`'s supernodal LU with partial
//! pivoting. The symbolic analysis (fill-reducing ordering, elimination
//! structure) depends only on the sparsity pattern and can be reused through
//! [`SymbolicLu`] when a sequence of matrices shares one pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers as faer_solvers;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed by
/// [`TripletBuffer::compress`].
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuffer {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        TripletBuffer {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Converts to compressed-row storage. Duplicates are summed in insertion
    /// order, so the result does not depend on how the entries were permuted
    /// up to floating-point reassociation of duplicates.
    pub fn compress(&self) -> Result<SparseMatrix> {
        for &(r, c, _) in &self.entries {
            if r >= self.nrows || c >= self.ncols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    nrows: self.nrows,
                    ncols: self.ncols,
                });
            }
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        // stable: duplicates keep insertion order
        order.sort_by_key(|&k| (self.entries[k].0, self.entries[k].1));

        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(order.len());
        let mut values = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = self.entries[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

/// Compressed-row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Matrix with the given pattern and all values zero.
    pub fn zeros_like(&self) -> Self {
        SparseMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Position of `(row, col)` in the value array, if stored.
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    /// Stored value at `(row, col)`, zero when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let k = next[c];
                col_idx[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `self + alpha * other` for matrices sharing one pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> Result<SparseMatrix> {
        if !self.same_pattern(other) {
            return Err(Error::Format("add_scaled needs identical sparsity patterns".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(out)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::NotSquare {
                nrows: self.nrows,
                ncols: self.ncols,
            });
        }
        Ok(())
    }

    /// The CSR arrays of `A` read as CSC describe `Aᵀ`.
    fn as_transposed_csc(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(self.ncols, self.nrows, &self.row_ptr, None, &self.col_idx);
        SparseColMatRef::new(symbolic, &self.values)
    }
}

/// Pattern-dependent part of an LU factorization, reusable across matrices
/// with identical sparsity.
#[derive(Debug, Clone)]
pub struct SymbolicLu {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    inner: Option<faer_solvers::SymbolicLu<usize>>,
}

impl SymbolicLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        a.check_square()?;
        let inner = if a.nrows == 0 {
            None
        } else {
            Some(
                faer_solvers::SymbolicLu::try_new(a.as_transposed_csc().symbolic())
                    .map_err(|e| Error::SingularMatrix(format!("symbolic analysis failed: {e:?}")))?,
            )
        };
        Ok(SymbolicLu {
            row_ptr: a.row_ptr.clone(),
            col_idx: a.col_idx.clone(),
            inner,
        })
    }

    pub fn matches(&self, a: &SparseMatrix) -> bool {
        self.row_ptr == a.row_ptr && self.col_idx == a.col_idx
    }

    /// Numerical factorization of a matrix with this pattern.
    pub fn factor(&self, a: &SparseMatrix) -> Result<Factorization> {
        if !self.matches(a) {
            return Err(Error::Format("matrix pattern differs from the symbolic analysis".into()));
        }
        factor_with(self.inner.clone(), a)
    }
}

/// LU decomposition with partial pivoting, valid for repeated solves.
pub struct Factorization {
    n: usize,
    /// `None` for the empty system.
    lu: Option<faer_solvers::Lu<usize, f64>>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.n).finish_non_exhaustive()
    }
}

/// Relative error above which the probe solve declares the matrix singular.
const PROBE_TOL: f64 = 1e-6;

pub fn lu_factor(a: &SparseMatrix) -> Result<Factorization> {
    SymbolicLu::new(a)?.factor(a)
}

fn factor_with(symbolic: Option<faer_solvers::SymbolicLu<usize>>, a: &SparseMatrix) -> Result<Factorization> {
    let n = a.nrows;
    let Some(symbolic) = symbolic.filter(|_| n > 0) else {
        return Ok(Factorization { n, lu: None });
    };
    if a.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    let max_entry = a.max_abs();
    let mut col_max = vec![0.0f64; n];
    for r in 0..n {
        let row_max = a.row(r).fold(0.0f64, |m, (c, v)| {
            col_max[c] = col_max[c].max(v.abs());
            m.max(v.abs())
        });
        if row_max <= 1e-14 * max_entry || row_max == 0.0 {
            return Err(Error::SingularMatrix(format!("row {r} is numerically zero")));
        }
    }
    if let Some(c) = col_max.iter().position(|&m| m <= 1e-14 * max_entry || m == 0.0) {
        return Err(Error::SingularMatrix(format!("column {c} is numerically zero")));
    }

    // faer factors Aᵀ (the CSR arrays read as CSC); solves then use the transpose.
    // faer panics on an exactly zero pivot instead of returning an error
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        faer_solvers::Lu::try_new_with_symbolic(symbolic, a.as_transposed_csc())
    }))
    .map_err(|_| Error::SingularMatrix("zero pivot".into()))?
    .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
    let f = Factorization { n, lu: Some(lu) };

    // The supernodal factors do not expose their pivots, so singularity is
    // detected by solving against a known vector.
    let probe: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let rhs = a.matvec(&probe)?;
    let x = f.solve_unchecked(&rhs);
    let err = x
        .iter()
        .zip(&probe)
        .fold(0.0f64, |m, (a, b)| if (a - b).is_nan() { f64::INFINITY } else { m.max((a - b).abs()) });
    // NaN fails this comparison too
    if !(err <= PROBE_TOL) {
        return Err(Error::SingularMatrix(format!("probe solve error {err:.3e}")));
    }
    Ok(f)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        Ok(self.solve_unchecked(b))
    }

    fn solve_unchecked(&self, b: &[f64]) -> Vec<f64> {
        let Some(lu) = &self.lu else {
            return Vec::new();
        };
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        lu.solve_transpose_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
