//! Per-block spectral auxiliary spaces.
//!
//! On every coarse block `K_j` the generalized eigenproblem
//!
//! ```text
//! a^j(psi, v) = (lambda / H^2) s^j(psi, v)    for all v in V(K_j)
//! ```
//!
//! is solved for the `g` smallest eigenvalues, where `a^j` is the block
//! energy form, `s^j` the unweighted block L2 product and `H` the coarse
//! cell size. The eigenvectors are `s^j`-orthonormal; their span is the
//! auxiliary space `V_aux`. Blocks that touch the Dirichlet boundary have
//! their constrained DOFs removed before the solve, so their spectra are
//! strictly positive; interior blocks carry exactly three (near-)zero
//! eigenvalues corresponding to the in-plane rigid motions.
//!
//! The associated projection
//!
//! ```text
//! pi(v) = sum_j sum_i s^j(v, psi_i^j) psi_i^j
//! ```
//!
//! is `s`-orthogonal blockwise; `pi_prime(w, u) = s(pi w, pi u)` is the
//! coarse-scale substitute for the mass inner product.

use crate::assembly::{block_energy, block_mass_unit};
use crate::error::{Error, Result};
use crate::media::MediaField;
use crate::mesh::MeshHierarchy;
use crate::sparse::SparseOperator;
use nalgebra::{DMatrix, DVector};

/// How many auxiliary modes to keep per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeCount {
    /// The same number of modes on every block.
    Fixed(usize),
    /// The full active dimension of every block (the auxiliary space then
    /// spans the whole fine space).
    Full,
}

/// Result of one local spectral solve.
#[derive(Debug, Clone)]
pub struct LocalSpectrum {
    /// The `g` smallest eigenvalues, ascending, scaled by `H^2` (i.e. the
    /// `lambda` of the eigenproblem above).
    pub eigenvalues: Vec<f64>,
    /// Corresponding eigenvectors on the *full* block-local DOF set
    /// (constrained entries are zero), `s^j`-orthonormal.
    pub vectors: Vec<Vec<f64>>,
    /// Largest eigenvalue of the block pencil (same scaling), used for
    /// relative near-zero classification.
    pub lambda_max: f64,
}

/// Dense generalized eigensolve for the block pencil `(a, s)` restricted to
/// the `active` DOF subset: two-sided Cholesky reduction of `s` followed by
/// a dense symmetric eigensolve.
///
/// Returns the `g` smallest eigenpairs with eigenvalues scaled by `h^2`.
///
/// # Errors
///
/// * [`Error::TooManyModes`] when `g` exceeds the active dimension;
/// * [`Error::Factorization`] when `s` is not positive definite;
/// * [`Error::Spectral`] when an eigenpair residual exceeds `1e-9`
///   relative to the operator scales.
pub fn solve_local_spectral(
    a: &SparseOperator,
    s: &SparseOperator,
    active: &[usize],
    g: usize,
    h: f64,
    block: usize,
) -> Result<LocalSpectrum> {
    let full = a.nrows();
    let n = active.len();
    if g > n {
        return Err(Error::TooManyModes {
            block,
            active: n,
            requested: g,
        });
    }
    let a_act = a.restrict(active);
    let s_act = s.restrict(active);
    let a_d = DMatrix::from_fn(n, n, |r, c| a_act.get(r, c));
    let s_d = DMatrix::from_fn(n, n, |r, c| s_act.get(r, c));

    let chol = s_d.clone().cholesky().ok_or_else(|| {
        Error::Factorization(format!("block {block}: mass form not positive definite"))
    })?;
    let l = chol.l();
    // B = L^{-1} A L^{-T}, symmetrized against roundoff.
    let x = l
        .solve_lower_triangular(&a_d)
        .ok_or_else(|| Error::Factorization(format!("block {block}: singular Cholesky factor")))?;
    let b = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Factorization(format!("block {block}: singular Cholesky factor")))?;
    let b = 0.5 * (&b + b.transpose());
    let eig = b.symmetric_eigen();

    // Sort ascending by eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(g);
    let mut vectors = Vec::with_capacity(g);
    let a_norm = a_act.norm_inf();
    let s_norm = s_act.norm_inf();
    for &k in order.iter().take(g) {
        let mu = eig.eigenvalues[k];
        let y: DVector<f64> = eig.eigenvectors.column(k).into();
        let psi_act = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Factorization(format!("block {block}: singular Cholesky factor")))?;

        // Residual check on the active pencil.
        let mut residual = 0.0f64;
        let mut psi_norm = 0.0f64;
        let av = a_act.matvec(psi_act.as_slice());
        let sv = s_act.matvec(psi_act.as_slice());
        for i in 0..n {
            let r = av[i] - mu * sv[i];
            residual += r * r;
            psi_norm += psi_act[i] * psi_act[i];
        }
        let residual = residual.sqrt();
        let psi_norm = psi_norm.sqrt();
        let denom = ((a_norm + mu.abs() * s_norm) * psi_norm).max(1e-300);
        if residual / denom > 1e-9 {
            return Err(Error::Spectral {
                block,
                detail: format!(
                    "eigenpair residual {:.3e} exceeds 1e-9 relative (mu = {mu:.6e})",
                    residual / denom
                ),
            });
        }

        let mut psi = vec![0.0; full];
        for (i, &dof) in active.iter().enumerate() {
            psi[dof] = psi_act[i];
        }
        eigenvalues.push(h * h * mu);
        vectors.push(psi);
    }
    let lambda_max = order
        .last()
        .map(|&k| h * h * eig.eigenvalues[k])
        .unwrap_or(0.0);
    Ok(LocalSpectrum {
        eigenvalues,
        vectors,
        lambda_max,
    })
}

/// Auxiliary modes of one coarse block.
#[derive(Debug, Clone)]
pub struct AuxBlock {
    /// Block id this data belongs to.
    pub block: usize,
    /// Eigenvalues (scaled by `H^2`), ascending.
    pub eigenvalues: Vec<f64>,
    /// `s^j`-orthonormal eigenvectors on the full block-local DOF set.
    pub psi: Vec<Vec<f64>>,
    /// `s^j * psi_i` with constrained rows zeroed; taking an inner product
    /// of `s_psi[i]` with a block-local vector evaluates `s^j(psi_i, .)`.
    pub s_psi: Vec<Vec<f64>>,
    /// Largest pencil eigenvalue of the block (same scaling).
    pub lambda_max: f64,
}

impl AuxBlock {
    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues below `tol` relative to the block's largest
    /// eigenvalue (rigid-body modes on interior blocks).
    pub fn near_zero_count(&self, tol: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l <= tol * self.lambda_max)
            .count()
    }
}

/// The global auxiliary space: all blocks' spectral modes plus offsets for
/// flat indexing of `(block, mode)` pairs.
#[derive(Debug, Clone)]
pub struct AuxSpace {
    blocks: Vec<AuxBlock>,
    offsets: Vec<usize>,
    total: usize,
    h_ref: f64,
}

impl AuxSpace {
    /// Solves the spectral problem on every block.
    pub fn build(mesh: &MeshHierarchy, media: &MediaField, modes: ModeCount) -> Result<Self> {
        let h_ref = mesh.coarse_hx().max(mesh.coarse_hy());
        let mut blocks = Vec::with_capacity(mesh.num_blocks());
        let mut offsets = Vec::with_capacity(mesh.num_blocks() + 1);
        let mut total = 0usize;
        for block in 0..mesh.num_blocks() {
            let a = block_energy(mesh, media, block);
            let s = block_mass_unit(mesh, block);
            let active = mesh.block_active_local_dofs(block);
            let g = match modes {
                ModeCount::Fixed(g) => g,
                ModeCount::Full => active.len(),
            };
            let spectrum = solve_local_spectral(&a, &s, &active, g, h_ref, block)?;
            // Precompute s^j psi_i and zero the constrained rows so that
            // projections ignore constrained components entirely.
            let base = mesh.block_dofs(block).start;
            let mask = mesh.boundary_mask();
            let s_psi: Vec<Vec<f64>> = spectrum
                .vectors
                .iter()
                .map(|psi| {
                    let mut sp = s.matvec(psi);
                    for (local, v) in sp.iter_mut().enumerate() {
                        if mask[base + local] {
                            *v = 0.0;
                        }
                    }
                    sp
                })
                .collect();
            offsets.push(total);
            total += spectrum.eigenvalues.len();
            blocks.push(AuxBlock {
                block,
                eigenvalues: spectrum.eigenvalues,
                psi: spectrum.vectors,
                s_psi,
                lambda_max: spectrum.lambda_max,
            });
        }
        offsets.push(total);
        Ok(Self {
            blocks,
            offsets,
            total,
            h_ref,
        })
    }

    /// Coarse length scale used in the eigenvalue scaling.
    pub fn h_ref(&self) -> f64 {
        self.h_ref
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of auxiliary modes over all blocks.
    pub fn total_modes(&self) -> usize {
        self.total
    }

    pub fn block(&self, j: usize) -> &AuxBlock {
        &self.blocks[j]
    }

    /// Flat index of mode `i` of block `j`.
    pub fn aux_index(&self, j: usize, i: usize) -> usize {
        debug_assert!(i < self.blocks[j].num_modes());
        self.offsets[j] + i
    }

    /// Inverse of [`Self::aux_index`].
    pub fn block_of_aux(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.total);
        let j = match self.offsets.binary_search(&k) {
            Ok(j) => {
                // `k` is the first mode of block j, unless block j is empty;
                // skip past empty blocks.
                let mut j = j;
                while self.offsets[j + 1] == self.offsets[j] {
                    j += 1;
                }
                j
            }
            Err(ins) => ins - 1,
        };
        (j, k - self.offsets[j])
    }

    /// Auxiliary coefficients of `v`: entry `aux_index(j, i)` holds
    /// `s^j(psi_i^j, v)`.
    pub fn pi_coefficients(&self, mesh: &MeshHierarchy, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), mesh.num_fine_dofs(), "pi: vector length");
        let mut coeffs = vec![0.0; self.total];
        for (j, aux) in self.blocks.iter().enumerate() {
            let range = mesh.block_dofs(aux.block);
            let vb = &v[range];
            for (i, sp) in aux.s_psi.iter().enumerate() {
                coeffs[self.offsets[j] + i] = crate::sparse::dot(sp, vb);
            }
        }
        coeffs
    }

    /// Expands auxiliary coefficients back to a fine DOF vector
    /// `sum c_{j,i} psi_i^j`.
    pub fn expand(&self, mesh: &MeshHierarchy, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.total, "expand: coefficient length");
        let mut out = vec![0.0; mesh.num_fine_dofs()];
        for (j, aux) in self.blocks.iter().enumerate() {
            let range = mesh.block_dofs(aux.block);
            let out_b = &mut out[range];
            for (i, psi) in aux.psi.iter().enumerate() {
                let c = coeffs[self.offsets[j] + i];
                if c != 0.0 {
                    for (o, p) in out_b.iter_mut().zip(psi) {
                        *o += c * p;
                    }
                }
            }
        }
        out
    }

    /// The auxiliary projection `pi(v)`.
    pub fn project_pi(&self, mesh: &MeshHierarchy, v: &[f64]) -> Vec<f64> {
        let coeffs = self.pi_coefficients(mesh, v);
        self.expand(mesh, &coeffs)
    }

    /// `pi'(w, u) = s(pi(w), pi(u))`. By blockwise `s`-orthonormality of
    /// the eigenvectors this is the Euclidean product of the auxiliary
    /// coefficient vectors.
    pub fn pi_prime(&self, mesh: &MeshHierarchy, w: &[f64], u: &[f64]) -> f64 {
        let cw = self.pi_coefficients(mesh, w);
        let cu = self.pi_coefficients(mesh, u);
        crate::sparse::dot(&cw, &cu)
    }
}
