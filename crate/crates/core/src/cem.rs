//! Constraint-energy-minimizing coarse space.
//!
//! Each auxiliary mode `psi_i^j` spawns one coarse basis function
//! `phi_{j,i}`, obtained by minimizing the DG energy over fine-scale
//! functions supported on an oversampled neighborhood of block `j`,
//! subject to the orthogonality constraints
//!
//! ```text
//!   s(phi_{j,i}, psi_m^l) = delta_{jl} delta_{im}    for all blocks l
//!                                                    in the neighborhood.
//! ```
//!
//! The minimization is a saddle-point (KKT) system per mode; all modes of
//! one block share the region, the constraint set, and hence a single
//! factorization.  The coarse stiffness `A_c = Phi^T A Phi` and the
//! projected mass `M_c` (the Gram matrix of the auxiliary projections of
//! the basis) are assembled here as well.  Because the constraints pin the
//! auxiliary coefficients of each basis function to a unit vector, `M_c`
//! is the identity up to the saddle solver tolerance, which is what makes
//! the coarse leapfrog scheme explicit.

use crate::assembly::FineOperators;
use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::sparse::{dot, CooBuilder, SaddleSolver, SparseOperator};
use crate::spectral::AuxSpace;

/// Parameters of the localized basis construction.
#[derive(Debug, Clone, Copy)]
pub struct CemParams {
    /// Number of oversampling layers around the home block.
    pub num_layers: usize,
    /// Relative residual demanded of every saddle-point solve.
    pub saddle_tol: f64,
    /// Iterative refinement cap per solve.
    pub max_refine: usize,
}

impl CemParams {
    /// Construction with the default solver tolerances.
    pub fn with_layers(num_layers: usize) -> Self {
        CemParams {
            num_layers,
            saddle_tol: 1e-11,
            max_refine: 40,
        }
    }
}

/// All basis functions rooted in one coarse block.  They share the
/// oversampling region and therefore the support `dofs`.
#[derive(Debug, Clone)]
pub struct BlockBases {
    /// Home block.
    pub block: usize,
    /// Blocks of the oversampling region, ascending.
    pub region: Vec<usize>,
    /// Global indices of the active (non-Dirichlet) fine DOFs of the
    /// region, ascending.
    pub dofs: Vec<usize>,
    /// Start of each region block's slice inside `dofs`.
    pub offsets: Vec<usize>,
    /// Basis values on `dofs`; one vector per auxiliary mode of `block`.
    pub phi: Vec<Vec<f64>>,
    /// Per-mode `(stationarity, constraint)` relative residuals of the
    /// KKT solve that produced the basis function.
    pub residuals: Vec<(f64, f64)>,
}

/// The multiscale space: localized bases plus the coarse operators.
#[derive(Debug)]
pub struct CemSpace {
    aux: AuxSpace,
    params: CemParams,
    groups: Vec<BlockBases>,
    a_c: SparseOperator,
    m_c: SparseOperator,
    worst_stationarity: f64,
    worst_constraint: f64,
}

impl CemSpace {
    /// Builds every localized basis function and assembles the coarse
    /// operators.  `ops` must come from the same mesh and medium as `aux`.
    pub fn build(
        mesh: &MeshHierarchy,
        ops: &FineOperators,
        aux: AuxSpace,
        params: CemParams,
    ) -> Result<Self> {
        let mask = mesh.boundary_mask();
        let mut groups = Vec::with_capacity(mesh.num_blocks());
        let mut worst_stationarity: f64 = 0.0;
        let mut worst_constraint: f64 = 0.0;

        for j in 0..mesh.num_blocks() {
            let g_j = aux.block(j).num_modes();
            let region = mesh.oversampling(j, params.num_layers);

            // Active DOFs of the region, grouped by block (blocks ascend and
            // block DOF ranges are contiguous, so the list is sorted).
            let mut dofs = Vec::new();
            let mut offsets = Vec::with_capacity(region.len());
            for &l in &region {
                offsets.push(dofs.len());
                for d in mesh.block_dofs(l) {
                    if !mask[d] {
                        dofs.push(d);
                    }
                }
            }

            if g_j == 0 {
                groups.push(BlockBases {
                    block: j,
                    region,
                    dofs,
                    offsets,
                    phi: Vec::new(),
                    residuals: Vec::new(),
                });
                continue;
            }

            let a_r = ops.a_dg.restrict(&dofs);

            // Constraint columns in auxiliary order over the region, and the
            // position of the home block's constraints within that order.
            let mut s_cols: Vec<Vec<(usize, f64)>> = Vec::new();
            let mut home_start = usize::MAX;
            for (li, &l) in region.iter().enumerate() {
                if l == j {
                    home_start = s_cols.len();
                }
                let blk = aux.block(l);
                let base = mesh.block_dofs(l).start;
                for s_psi in &blk.s_psi {
                    let mut col = Vec::new();
                    let mut pos = offsets[li];
                    for d in mesh.block_dofs(l) {
                        if mask[d] {
                            continue;
                        }
                        let v = s_psi[d - base];
                        if v != 0.0 {
                            col.push((pos, v));
                        }
                        pos += 1;
                    }
                    s_cols.push(col);
                }
            }
            debug_assert!(home_start != usize::MAX);

            let nv = dofs.len();
            let nc = s_cols.len();
            let solver = SaddleSolver::new(a_r, s_cols, SaddleSolver::DEFAULT_DELTA)
                .map_err(|e| Error::Saddle {
                    block: j,
                    mode: 0,
                    detail: format!("factorization failed: {e}"),
                })?;

            let mut phi = Vec::with_capacity(g_j);
            let mut residuals = Vec::with_capacity(g_j);
            for i in 0..g_j {
                let mut rhs = vec![0.0; nv + nc];
                rhs[nv + home_start + i] = 1.0;
                let (z, _) = solver
                    .solve_refined(&rhs, params.saddle_tol, params.max_refine)
                    .map_err(|e| Error::Saddle {
                        block: j,
                        mode: i,
                        detail: format!("{e}"),
                    })?;
                let (stat, cons) = solver.equation_residuals(&z, &rhs);
                worst_stationarity = worst_stationarity.max(stat);
                worst_constraint = worst_constraint.max(cons);
                residuals.push((stat, cons));
                phi.push(z[..nv].to_vec());
            }

            groups.push(BlockBases {
                block: j,
                region,
                dofs,
                offsets,
                phi,
                residuals,
            });
        }

        let cover = DofCover::build(mesh.num_fine_dofs(), &aux, &groups);
        let a_c = project_symmetric(&ops.a_dg, &aux, &groups, &cover);
        let m_c = gram_of_projections(mesh, &aux, &groups);

        Ok(CemSpace {
            aux,
            params,
            groups,
            a_c,
            m_c,
            worst_stationarity,
            worst_constraint,
        })
    }

    /// The auxiliary space the bases were built against.
    pub fn aux(&self) -> &AuxSpace {
        &self.aux
    }

    /// Basis construction parameters.
    pub fn params(&self) -> &CemParams {
        &self.params
    }

    /// Number of coarse basis functions (equals the auxiliary dimension).
    pub fn num_bases(&self) -> usize {
        self.aux.total_modes()
    }

    /// Bases rooted in block `j`.
    pub fn group(&self, j: usize) -> &BlockBases {
        &self.groups[j]
    }

    /// Coarse stiffness `Phi^T A Phi`.
    pub fn a_c(&self) -> &SparseOperator {
        &self.a_c
    }

    /// Gram matrix of the auxiliary projections of the bases; identity up
    /// to the saddle tolerance.
    pub fn m_c(&self) -> &SparseOperator {
        &self.m_c
    }

    /// Worst `(stationarity, constraint)` relative residual over every
    /// saddle solve of the construction.
    pub fn worst_residuals(&self) -> (f64, f64) {
        (self.worst_stationarity, self.worst_constraint)
    }

    /// Largest off-identity entry of `M_c`.
    pub fn mass_identity_gap(&self) -> f64 {
        let n = self.num_bases();
        let mut gap: f64 = 0.0;
        for r in 0..n {
            let (cols, vals) = self.m_c.row(r);
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    diag = v;
                } else {
                    gap = gap.max(v.abs());
                }
            }
            gap = gap.max((diag - 1.0).abs());
        }
        gap
    }

    /// Expands coarse coefficients into a fine-grid DOF vector.
    pub fn reconstruct_fine(&self, mesh: &MeshHierarchy, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.num_bases(), "coefficient count");
        let mut u = vec![0.0; mesh.num_fine_dofs()];
        for group in &self.groups {
            for (i, phi) in group.phi.iter().enumerate() {
                let c = coeffs[self.aux.aux_index(group.block, i)];
                if c == 0.0 {
                    continue;
                }
                for (pos, &d) in group.dofs.iter().enumerate() {
                    u[d] += c * phi[pos];
                }
            }
        }
        u
    }

    /// One basis function as a dense fine-grid vector.
    pub fn basis_dense(&self, mesh: &MeshHierarchy, b: usize) -> Vec<f64> {
        let (j, i) = self.aux.block_of_aux(b);
        let group = &self.groups[j];
        let mut u = vec![0.0; mesh.num_fine_dofs()];
        for (pos, &d) in group.dofs.iter().enumerate() {
            u[d] = group.phi[i][pos];
        }
        u
    }

    /// One basis function as `(fine DOF, value)` triplet pairs, for
    /// inspection or visualization dumps.
    pub fn basis_triplets(&self, b: usize) -> Vec<(usize, f64)> {
        let (j, i) = self.aux.block_of_aux(b);
        let group = &self.groups[j];
        group
            .dofs
            .iter()
            .zip(&group.phi[i])
            .filter(|&(_, &v)| v != 0.0)
            .map(|(&d, &v)| (d, v))
            .collect()
    }

    /// `Phi^T v` for a dense fine-grid vector `v`.
    pub fn project_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_bases()];
        for group in &self.groups {
            for (i, phi) in group.phi.iter().enumerate() {
                let mut acc = 0.0;
                for (pos, &d) in group.dofs.iter().enumerate() {
                    acc += phi[pos] * v[d];
                }
                out[self.aux.aux_index(group.block, i)] = acc;
            }
        }
        out
    }

    /// Coarse load of a nodal fine field `f`: entry `(j,i)` is
    /// `s(f, psi_i^j)`, computed through the consistent (unweighted) fine
    /// mass matrix.  Equivalent to `pi_prime(f, phi)` up to the constraint
    /// tolerance of the basis construction.
    pub fn coarse_load_nodal(
        &self,
        mesh: &MeshHierarchy,
        mass_unit: &SparseOperator,
        f: &[f64],
    ) -> Vec<f64> {
        self.coarse_load(mesh, &mass_unit.matvec(f))
    }

    /// Coarse load vector: entry `(j,i)` is `s(f, psi_i^j)`, evaluated as
    /// the auxiliary eigenvector dotted with the consistent fine load of
    /// `f` over block `j`.  Entries of `fine_load` on Dirichlet DOFs are
    /// ignored because the eigenvectors vanish there.
    pub fn coarse_load(&self, mesh: &MeshHierarchy, fine_load: &[f64]) -> Vec<f64> {
        assert_eq!(fine_load.len(), mesh.num_fine_dofs(), "load length");
        let mut out = vec![0.0; self.num_bases()];
        for j in 0..mesh.num_blocks() {
            let blk = self.aux.block(j);
            let range = mesh.block_dofs(j);
            let slice = &fine_load[range];
            for (i, psi) in blk.psi.iter().enumerate() {
                out[self.aux.aux_index(j, i)] = dot(psi, slice);
            }
        }
        out
    }

    /// `Phi^T op Phi` for an arbitrary symmetric fine-grid operator, e.g.
    /// the fine mass matrix when coarse initial data is needed.
    pub fn project_operator(&self, mesh: &MeshHierarchy, op: &SparseOperator) -> SparseOperator {
        let cover = DofCover::build(mesh.num_fine_dofs(), &self.aux, &self.groups);
        project_symmetric(op, &self.aux, &self.groups, &cover)
    }

    /// DG energy of basis `(j, i)` outside the region of `r_inner` layers
    /// around block `j`: the tail the oversampling construction is meant
    /// to make small.
    pub fn energy_outside(
        &self,
        mesh: &MeshHierarchy,
        ops: &FineOperators,
        j: usize,
        i: usize,
        r_inner: usize,
    ) -> f64 {
        let b = self.aux.aux_index(j, i);
        let mut v = self.basis_dense(mesh, b);
        for l in mesh.oversampling(j, r_inner) {
            for d in mesh.block_dofs(l) {
                v[d] = 0.0;
            }
        }
        ops.a_dg.quadratic(&v)
    }
}

/// Per-DOF inverted index of the basis: for each fine DOF, the list of
/// `(basis, value)` pairs whose support covers it.  Flat CSR-style layout.
struct DofCover {
    ptr: Vec<usize>,
    basis: Vec<u32>,
    val: Vec<f64>,
}

impl DofCover {
    fn build(num_dofs: usize, aux: &AuxSpace, groups: &[BlockBases]) -> Self {
        let mut count = vec![0usize; num_dofs];
        for group in groups {
            let g = group.phi.len();
            for &d in &group.dofs {
                count[d] += g;
            }
        }
        let mut ptr = vec![0usize; num_dofs + 1];
        for d in 0..num_dofs {
            ptr[d + 1] = ptr[d] + count[d];
        }
        let nnz = ptr[num_dofs];
        let mut basis = vec![0u32; nnz];
        let mut val = vec![0.0; nnz];
        let mut next = ptr.clone();
        for group in groups {
            for (i, phi) in group.phi.iter().enumerate() {
                let b = aux.aux_index(group.block, i) as u32;
                for (pos, &d) in group.dofs.iter().enumerate() {
                    let slot = next[d];
                    basis[slot] = b;
                    val[slot] = phi[pos];
                    next[d] = slot + 1;
                }
            }
        }
        DofCover { ptr, basis, val }
    }
}

/// `Phi^T op Phi` assembled column by column: scatter `y = op * phi_b`,
/// then gather `phi_a^T y` through the DOF cover.  Only `a <= b` is
/// accumulated; the strict lower triangle is mirrored, so the result is
/// exactly symmetric.
fn project_symmetric(
    op: &SparseOperator,
    aux: &AuxSpace,
    groups: &[BlockBases],
    cover: &DofCover,
) -> SparseOperator {
    let nb = aux.total_modes();
    let n = op.nrows();
    let mut coo = CooBuilder::new(nb, nb);

    let mut y = vec![0.0; n];
    let mut y_flag = vec![false; n];
    let mut y_touched: Vec<usize> = Vec::new();
    let mut acc = vec![0.0; nb];
    let mut acc_flag = vec![false; nb];
    let mut acc_touched: Vec<usize> = Vec::new();

    for (j, group) in groups.iter().enumerate() {
        for (i, phi) in group.phi.iter().enumerate() {
            let b = aux.aux_index(j, i);

            for (pos, &d) in group.dofs.iter().enumerate() {
                let x = phi[pos];
                if x == 0.0 {
                    continue;
                }
                let (cols, vals) = op.row(d);
                for (&c, &v) in cols.iter().zip(vals) {
                    if !y_flag[c] {
                        y_flag[c] = true;
                        y_touched.push(c);
                    }
                    y[c] += v * x;
                }
            }

            for &k in &y_touched {
                let yk = y[k];
                if yk == 0.0 {
                    continue;
                }
                for slot in cover.ptr[k]..cover.ptr[k + 1] {
                    let a = cover.basis[slot] as usize;
                    if a > b {
                        continue;
                    }
                    if !acc_flag[a] {
                        acc_flag[a] = true;
                        acc_touched.push(a);
                    }
                    acc[a] += cover.val[slot] * yk;
                }
            }

            for &a in &acc_touched {
                let v = acc[a];
                coo.push(a, b, v);
                if a < b {
                    coo.push(b, a, v);
                }
                acc[a] = 0.0;
                acc_flag[a] = false;
            }
            acc_touched.clear();
            for &k in &y_touched {
                y[k] = 0.0;
                y_flag[k] = false;
            }
            y_touched.clear();
        }
    }
    coo.build_symmetric()
}

/// Gram matrix of the auxiliary projections of the basis functions,
/// `M_c[a][b] = pi'(phi_a, phi_b)`.  Each projection coefficient vector is
/// sparse (supported on the auxiliary modes of the basis's region), so the
/// Gram is assembled with the same scatter/cover scheme as the stiffness,
/// over auxiliary indices instead of fine DOFs.
fn gram_of_projections(
    mesh: &MeshHierarchy,
    aux: &AuxSpace,
    groups: &[BlockBases],
) -> SparseOperator {
    let nb = aux.total_modes();

    // Sparse projection coefficients per basis, auxiliary index ascending.
    let mut coef: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nb);
    for group in groups {
        for phi in &group.phi {
            let mut c = Vec::new();
            for (li, &l) in group.region.iter().enumerate() {
                let blk = aux.block(l);
                let base = mesh.block_dofs(l).start;
                let start = group.offsets[li];
                let end = group
                    .offsets
                    .get(li + 1)
                    .copied()
                    .unwrap_or(group.dofs.len());
                for (m, s_psi) in blk.s_psi.iter().enumerate() {
                    let mut acc = 0.0;
                    for pos in start..end {
                        acc += s_psi[group.dofs[pos] - base] * phi[pos];
                    }
                    c.push((aux.aux_index(l, m), acc));
                }
            }
            coef.push(c);
        }
    }

    // Inverted index over auxiliary modes.
    let mut count = vec![0usize; nb];
    for c in &coef {
        for &(k, _) in c {
            count[k] += 1;
        }
    }
    let mut ptr = vec![0usize; nb + 1];
    for k in 0..nb {
        ptr[k + 1] = ptr[k] + count[k];
    }
    let mut basis = vec![0u32; ptr[nb]];
    let mut val = vec![0.0; ptr[nb]];
    let mut next = ptr.clone();
    for (b, c) in coef.iter().enumerate() {
        for &(k, v) in c {
            let slot = next[k];
            basis[slot] = b as u32;
            val[slot] = v;
            next[k] = slot + 1;
        }
    }

    let mut coo = CooBuilder::new(nb, nb);
    let mut acc = vec![0.0; nb];
    let mut acc_flag = vec![false; nb];
    let mut acc_touched: Vec<usize> = Vec::new();
    for (b, c) in coef.iter().enumerate() {
        for &(k, ck) in c {
            if ck == 0.0 {
                continue;
            }
            for slot in ptr[k]..ptr[k + 1] {
                let a = basis[slot] as usize;
                if a > b {
                    continue;
                }
                if !acc_flag[a] {
                    acc_flag[a] = true;
                    acc_touched.push(a);
                }
                acc[a] += val[slot] * ck;
            }
        }
        for &a in &acc_touched {
            let v = acc[a];
            coo.push(a, b, v);
            if a < b {
                coo.push(b, a, v);
            }
            acc[a] = 0.0;
            acc_flag[a] = false;
        }
        acc_touched.clear();
    }
    coo.build_symmetric()
}
