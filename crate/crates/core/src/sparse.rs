//! Shared sparse linear algebra: a CSR operator type, LDL^T factorization
//! of symmetric positive definite matrices, and a regularized saddle-point
//! solver for the constraint-energy minimization problems.
//!
//! All assembly goes through [`CooBuilder`], which accumulates duplicate
//! triplets in a fixed order so that repeated assemblies of the same system
//! are bit-identical.

use crate::error::{Error, Result};
use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric};

/// Symmetry tag carried by a [`SparseOperator`].
///
/// The tag records what the assembly routine guarantees; `is_symmetric`
/// verifies the structural claim numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Assembled as a symmetric bilinear form.
    Symmetric,
    /// No symmetry guarantee (rectangular or one-sided operators).
    General,
}

/// Compressed sparse row matrix with a symmetry tag.
///
/// This is the shared currency between assembly, the spectral solves, the
/// saddle-point solver and the propagators. Entries within each row are
/// sorted by column and duplicates are merged at construction time.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseOperator {
    /// Builds an all-zero operator of the given shape.
    pub fn zero(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            symmetry: Symmetry::Symmetric,
        }
    }

    /// Builds a diagonal operator from the given diagonal entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
            symmetry: Symmetry::Symmetric,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries (including explicit zeros).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Stored entries of one row as `(columns, values)` slices.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// Looks up a single entry (zero if not stored).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A x` into a caller-provided buffer.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec: input length");
        assert_eq!(y.len(), self.nrows, "matvec: output length");
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    /// Quadratic/bilinear form `u^T A v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.nrows, "bilinear: left length");
        assert_eq!(v.len(), self.ncols, "bilinear: right length");
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let mut row_acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row_acc += self.values[k] * v[self.indices[k]];
            }
            acc += u[r] * row_acc;
        }
        acc
    }

    /// Quadratic form `v^T A v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    /// Maximum absolute row sum (the operator infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.values[self.indptr[r]..self.indptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute stored entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks numerical symmetry: `|A_ij - A_ji| <= tol` for every stored
    /// entry. Rectangular operators are never symmetric.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if (v - self.get(c, r)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Exports the stored entries as `(row, col, value)` triplets in row
    /// major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.push((r, c, v));
            }
        }
        out
    }

    /// Extracts the square submatrix on the index set `keep` (entries whose
    /// row and column are both in `keep`). `keep` must be strictly
    /// increasing; output indices follow the position in `keep`.
    pub fn restrict(&self, keep: &[usize]) -> SparseOperator {
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]), "keep must be sorted");
        let mut pos = vec![usize::MAX; self.ncols.max(self.nrows)];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let mut builder = CooBuilder::new(keep.len(), keep.len());
        for (new_r, &old_r) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_r);
            for (&c, &v) in cols.iter().zip(vals) {
                if pos[c] != usize::MAX {
                    builder.push(new_r, pos[c], v);
                }
            }
        }
        let mut out = builder.build();
        out.symmetry = self.symmetry;
        out
    }

    /// Zeroes every stored entry in the given rows and columns. Used for
    /// strong elimination of constrained boundary DOFs.
    pub fn zero_rows_cols(&mut self, dofs: &[bool]) {
        assert_eq!(dofs.len(), self.nrows);
        assert_eq!(self.nrows, self.ncols, "elimination needs a square operator");
        for r in 0..self.nrows {
            let lo = self.indptr[r];
            let hi = self.indptr[r + 1];
            for k in lo..hi {
                if dofs[r] || dofs[self.indices[k]] {
                    self.values[k] = 0.0;
                }
            }
        }
    }

    /// Sets `A[d][d] = value` for every flagged DOF; the diagonal entry must
    /// already be present structurally.
    pub fn set_diagonal(&mut self, dofs: &[bool], value: f64) {
        assert_eq!(dofs.len(), self.nrows);
        for r in 0..self.nrows {
            if !dofs[r] {
                continue;
            }
            let lo = self.indptr[r];
            let hi = self.indptr[r + 1];
            match self.indices[lo..hi].binary_search(&r) {
                Ok(k) => self.values[lo + k] = value,
                Err(_) => panic!("diagonal entry ({r},{r}) not present structurally"),
            }
        }
    }

    /// Converts to an `sprs` CSR matrix (copies the storage).
    pub fn to_cs_mat(&self) -> CsMat<f64> {
        CsMat::new(
            (self.nrows, self.ncols),
            self.indptr.clone(),
            self.indices.clone(),
            self.values.clone(),
        )
    }
}

/// Triplet accumulator with a deterministic merge.
///
/// `push` order is preserved for duplicate coordinates: `build` stable-sorts
/// by `(row, col)` and sums duplicates in push order, so the assembled values
/// do not depend on hash maps or thread scheduling.
#[derive(Debug)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Adds `value` at `(row, col)`.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols, "triplet out of range");
        self.entries.push((row, col, value));
    }

    /// Merges the triplets into CSR form.
    pub fn build(mut self) -> SparseOperator {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut iter = self.entries.iter().peekable();
        while let Some(&(r, c, v)) = iter.next() {
            let mut acc = v;
            while let Some(&&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    acc += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(acc);
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        SparseOperator {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
            symmetry: Symmetry::General,
        }
    }

    /// Merges the triplets and tags the result as symmetric (the caller
    /// asserts both triangles were pushed).
    pub fn build_symmetric(self) -> SparseOperator {
        let mut out = self.build();
        out.symmetry = Symmetry::Symmetric;
        out
    }
}

/// Sparse LDL^T factorization of a symmetric matrix, with reverse
/// Cuthill-McKee fill-in reduction.
///
/// Wraps `sprs-ldl`; this succeeds for symmetric positive definite input
/// and for the quasi-definite regularized saddle matrices built by
/// [`SaddleSolver`].
pub struct LdlFactor {
    n: usize,
    numeric: LdlNumeric<f64, usize>,
}

impl LdlFactor {
    /// Factors the operator. The input must be square and symmetric;
    /// symmetry is the caller's responsibility (assembled forms in this
    /// crate push both triangles).
    pub fn new(op: &SparseOperator) -> Result<Self> {
        if op.nrows() != op.ncols() {
            return Err(Error::DimensionMismatch {
                expected: op.nrows(),
                got: op.ncols(),
                context: "LDL^T factorization of a rectangular operator".into(),
            });
        }
        let mat = op.to_cs_mat();
        let numeric = Ldl::new()
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .numeric(mat.view())
            .map_err(|e| Error::Factorization(format!("sparse LDL^T failed: {e}")))?;
        Ok(Self {
            n: op.nrows(),
            numeric,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "LDL solve: rhs length");
        self.numeric.solve(rhs)
    }
}

/// Regularized saddle-point solver for systems
///
/// ```text
/// [ A   S ] [x]   [f]
/// [ S^T 0 ] [y] = [g]
/// ```
///
/// with `A` symmetric positive semidefinite on the kernel of `S^T` and `S`
/// of full column rank. The factored matrix is the quasi-definite
/// regularization `[[A + dI, S], [S^T, -dI]]`, which admits a stable
/// LDL^T without pivoting; iterative refinement against the *exact* saddle
/// matrix removes the regularization error down to the requested residual.
pub struct SaddleSolver {
    nv: usize,
    nc: usize,
    /// Leading block A (kept for exact residual evaluation).
    a: SparseOperator,
    /// Constraint columns: `s_cols[j]` holds the sparse column `S[:, j]`.
    s_cols: Vec<Vec<(usize, f64)>>,
    factor: LdlFactor,
    scale: f64,
}

impl SaddleSolver {
    /// Builds and factors the regularized saddle matrix.
    ///
    /// `delta_rel` is the regularization size relative to `max|A|`; the
    /// default used throughout the crate is [`SaddleSolver::DEFAULT_DELTA`].
    pub fn new(a: SparseOperator, s_cols: Vec<Vec<(usize, f64)>>, delta_rel: f64) -> Result<Self> {
        let nv = a.nrows();
        let nc = s_cols.len();
        let scale = a.max_abs().max(1e-300);
        let delta = delta_rel * scale;
        let n = nv + nc;
        let mut builder = CooBuilder::with_capacity(n, n, a.nnz() + 4 * nc + n);
        for (r, c, v) in a.triplets() {
            builder.push(r, c, v);
        }
        for r in 0..nv {
            builder.push(r, r, delta);
        }
        for (j, col) in s_cols.iter().enumerate() {
            for &(r, v) in col {
                assert!(r < nv, "constraint column index out of range");
                builder.push(r, nv + j, v);
                builder.push(nv + j, r, v);
            }
            builder.push(nv + j, nv + j, -delta);
        }
        let kkt = builder.build_symmetric();
        let factor = LdlFactor::new(&kkt)?;
        Ok(Self {
            nv,
            nc,
            a,
            s_cols,
            factor,
            scale,
        })
    }

    /// Default relative regularization; small enough that one or two
    /// refinement sweeps reach residuals at the 1e-12 level, large enough
    /// to keep the unpivoted LDL^T stable.
    pub const DEFAULT_DELTA: f64 = 1e-8;

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    /// Applies the exact (unregularized) saddle matrix.
    fn apply_exact(&self, z: &[f64], out: &mut [f64]) {
        let (x, y) = z.split_at(self.nv);
        self.a.matvec_into(x, &mut out[..self.nv]);
        for (j, col) in self.s_cols.iter().enumerate() {
            let yj = y[j];
            let mut acc = 0.0;
            for &(r, v) in col {
                out[r] += v * yj;
                acc += v * x[r];
            }
            out[self.nv + j] = acc;
        }
    }

    /// Relative residuals of the two saddle equations at `z`:
    /// the stationarity residual `||A x + S y - f||` scaled by the problem
    /// size, and the constraint residual `||S^T x - g||` relative to
    /// `max(||g||, 1)`.
    pub fn equation_residuals(&self, z: &[f64], rhs: &[f64]) -> (f64, f64) {
        let n = self.nv + self.nc;
        let mut kz = vec![0.0; n];
        self.apply_exact(z, &mut kz);
        let mut stat = 0.0;
        for i in 0..self.nv {
            let r = kz[i] - rhs[i];
            stat += r * r;
        }
        let mut cons = 0.0;
        for i in self.nv..n {
            let r = kz[i] - rhs[i];
            cons += r * r;
        }
        let denom = (self.scale * norm2(z) + norm2(rhs)).max(1e-300);
        let g_norm = norm2(&rhs[self.nv..]).max(1.0);
        (stat.sqrt() / denom, cons.sqrt() / g_norm)
    }

    /// Solves the saddle system with iterative refinement until both exact
    /// equation residuals (see [`SaddleSolver::equation_residuals`]) drop
    /// to `tol`.  Judging the equations separately matters: the Lagrange
    /// multipliers can be orders of magnitude larger than the primal part,
    /// and a combined norm would declare victory while the constraints are
    /// still visibly violated.
    ///
    /// Returns the solution and the achieved residual `max(stat, cons)`.
    pub fn solve_refined(
        &self,
        rhs: &[f64],
        tol: f64,
        max_refine: usize,
    ) -> Result<(Vec<f64>, f64)> {
        let n = self.nv + self.nc;
        assert_eq!(rhs.len(), n, "saddle solve: rhs length");
        let mut z = self.factor.solve(rhs);
        let mut kz = vec![0.0; n];
        let denom = |z_norm: f64, rhs_norm: f64| (rhs_norm + self.scale * z_norm).max(1e-300);
        let rhs_norm = norm2(rhs);
        let g_norm = norm2(&rhs[self.nv..]).max(1.0);
        let mut achieved = f64::INFINITY;
        for _ in 0..=max_refine {
            self.apply_exact(&z, &mut kz);
            let mut r = rhs.to_vec();
            for i in 0..n {
                r[i] -= kz[i];
            }
            let stat = norm2(&r[..self.nv]) / denom(norm2(&z), rhs_norm);
            let cons = norm2(&r[self.nv..]) / g_norm;
            achieved = stat.max(cons);
            if achieved <= tol {
                return Ok((z, achieved));
            }
            let dz = self.factor.solve(&r);
            for i in 0..n {
                z[i] += dz[i];
            }
        }
        Err(Error::NoConvergence(format!(
            "saddle refinement stalled at equation residual {achieved:.3e} (tol {tol:.1e})"
        )))
    }
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean inner product.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}
