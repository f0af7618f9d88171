//! Fine-scale assembly: block energy and mass forms, the global interior
//! penalty DG operator, load vectors and DG norms.
//!
//! The fine space is spanned by bilinear (Q1) nodal shape functions on the
//! fine cells, continuous inside each coarse block; coupling across coarse
//! block interfaces is handled weakly by the interior-penalty terms. For
//! trial/test functions `u, v` the global form reads
//!
//! ```text
//! a_DG(u, v) = sum_K  \int_K sigma(u) : eps(v)
//!            - sum_E  \int_E ( {sigma(u)} : [[v]]  +  [[u]] : {sigma(v)} )
//!            + sum_E  gamma/h \int_E ( [[u]] : {C} : [[v]] + [[u]] . {D} . [[v]] )
//! ```
//!
//! where `E` ranges over the *interior* coarse edges, `[[v]]` denotes the
//! tensor jump `v+ (x) n+ + v- (x) n-` (symmetrized and taken to Voigt
//! coordinates before `{C}` is applied), `[[v]] . {D} . [[v]]` penalizes the
//! displacement jump with `D = diag(C11, C33)`, and `{.}` is the arithmetic
//! average of the two one-sided values. Homogeneous Dirichlet data on the
//! outer boundary is imposed strongly, so no boundary edge terms appear.
//!
//! Quadrature is 2x2 Gauss per fine cell and 2-point Gauss per fine edge
//! segment; both are exact for the bilinear element integrands here.

use crate::error::Result;
use crate::media::{MediaField, Voigt};
use crate::mesh::{CellSide, MeshHierarchy, SegmentTrace, SideTrace};
use crate::sparse::{CooBuilder, SparseOperator};

/// Length scale used in the penalty factor `gamma / h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyScale {
    /// `h` is the fine edge segment length (the default).
    FineCell,
    /// `h` is the coarse edge length.
    CoarseCell,
}

/// Parameters of the interior-penalty form.
#[derive(Debug, Clone, Copy)]
pub struct DgParams {
    /// Penalty prefactor `gamma`.
    pub gamma: f64,
    /// Length scale in `gamma / h`.
    pub penalty_scale: PenaltyScale,
}

impl Default for DgParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            penalty_scale: PenaltyScale::FineCell,
        }
    }
}

/// 2-point Gauss abscissae on [0, 1].
const GAUSS2: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_88,
    0.5 + 0.288_675_134_594_812_88,
];

/// Values of the four bilinear shape functions at `(xi, eta)` in [0,1]^2,
/// local node order `(ix, iy)` with `a = 2*iy + ix`.
fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        (1.0 - xi) * eta,
        xi * eta,
    ]
}

/// Physical gradients `(dN/dx, dN/dy)` of the four shape functions on a
/// cell of extents `(hx, hy)`.
fn shape_gradients(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta) / hx, -(1.0 - xi) / hy],
        [(1.0 - eta) / hx, -xi / hy],
        [-eta / hx, (1.0 - xi) / hy],
        [eta / hx, xi / hy],
    ]
}

/// Strain-displacement rows for one node gradient: Voigt strains
/// `(e_xx, e_yy, 2 e_xy)` of the two component shape functions.
#[inline]
fn strain_columns(grad: [f64; 2]) -> [[f64; 3]; 2] {
    // Component 0 (displacement along x) and component 1 (along y).
    [
        [grad[0], 0.0, grad[1]],
        [0.0, grad[1], grad[0]],
    ]
}

/// Applies a Voigt stiffness to a Voigt strain.
#[inline]
fn stress(c: &Voigt, e: [f64; 3]) -> [f64; 3] {
    [
        c.c11 * e[0] + c.c13 * e[1],
        c.c13 * e[0] + c.c33 * e[1],
        c.c55 * e[2],
    ]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// 8x8 element stiffness of one fine cell: `int_K eps(u)^T C eps(v)`, DOF
/// order `2*node + component` with local nodes `(ix, iy) -> 2*iy + ix`.
pub fn element_stiffness(c: &Voigt, hx: f64, hy: f64) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS2 {
        for &eta in &GAUSS2 {
            let grads = shape_gradients(xi, eta, hx, hy);
            // Voigt strain generated by each of the 8 local DOFs.
            let mut strains = [[0.0; 3]; 8];
            for a in 0..4 {
                let cols = strain_columns(grads[a]);
                strains[2 * a] = cols[0];
                strains[2 * a + 1] = cols[1];
            }
            for b in 0..8 {
                let sb = stress(c, strains[b]);
                for a in 0..8 {
                    k[a][b] += w * dot3(strains[a], sb);
                }
            }
        }
    }
    k
}

/// 8x8 consistent element mass `rho * int_K u . v` (scalar mass on each
/// component, no cross-component coupling).
pub fn element_mass(rho: f64, hx: f64, hy: f64) -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    let w = 0.25 * hx * hy * rho;
    for &xi in &GAUSS2 {
        for &eta in &GAUSS2 {
            let n = shape_values(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    let v = w * n[a] * n[b];
                    m[2 * a][2 * b] += v;
                    m[2 * a + 1][2 * b + 1] += v;
                }
            }
        }
    }
    m
}

/// Block-local DOF indices (length 8) of fine cell `(cx, cy)`.
fn cell_local_dofs(mesh: &MeshHierarchy, cx: usize, cy: usize) -> [usize; 8] {
    let mut dofs = [0usize; 8];
    for iy in 0..2 {
        for ix in 0..2 {
            let node = mesh.node_index(cx + ix, cy + iy);
            let a = 2 * iy + ix;
            dofs[2 * a] = node * 2;
            dofs[2 * a + 1] = node * 2 + 1;
        }
    }
    dofs
}

/// Assembles the block energy form `a^j(u, v) = int_{K_j} sigma(u):eps(v)`
/// over the full block-local DOF set (no boundary elimination).
pub fn block_energy(mesh: &MeshHierarchy, media: &MediaField, block: usize) -> SparseOperator {
    block_cell_form(mesh, block, |cx, cy| {
        let idx = mesh.block_cell_index(block, cx, cy);
        element_stiffness(
            &media.stiffness_by_index(idx),
            mesh.fine_hx(),
            mesh.fine_hy(),
        )
    })
}

/// Assembles the unweighted block mass `s^j(u, v) = int_{K_j} u . v`.
pub fn block_mass_unit(mesh: &MeshHierarchy, block: usize) -> SparseOperator {
    block_cell_form(mesh, block, |_cx, _cy| {
        element_mass(1.0, mesh.fine_hx(), mesh.fine_hy())
    })
}

/// Assembles the density-weighted block mass `int_{K_j} rho u . v`.
pub fn block_mass_rho(mesh: &MeshHierarchy, media: &MediaField, block: usize) -> SparseOperator {
    block_cell_form(mesh, block, |cx, cy| {
        let (bx, by) = mesh.block_xy(block);
        let f = mesh.fine_per_coarse();
        let rho = media.rho(bx * f + cx, by * f + cy);
        element_mass(rho, mesh.fine_hx(), mesh.fine_hy())
    })
}

fn block_cell_form<F>(mesh: &MeshHierarchy, block: usize, element: F) -> SparseOperator
where
    F: Fn(usize, usize) -> [[f64; 8]; 8],
{
    debug_assert!(block < mesh.num_blocks());
    let nd = mesh.dofs_per_block();
    let f = mesh.fine_per_coarse();
    let mut builder = CooBuilder::with_capacity(nd, nd, f * f * 64);
    for cy in 0..f {
        for cx in 0..f {
            let k = element(cx, cy);
            let dofs = cell_local_dofs(mesh, cx, cy);
            for a in 0..8 {
                for b in 0..8 {
                    builder.push(dofs[a], dofs[b], k[a][b]);
                }
            }
        }
    }
    builder.build_symmetric()
}

/// Reference coordinates `(xi, eta)` of the point at edge parameter `t` on
/// the given cell side. `t` runs along the edge direction (increasing y
/// for vertical edges, increasing x for horizontal ones).
fn side_reference_coords(side: CellSide, t: f64) -> (f64, f64) {
    match side {
        CellSide::Left => (0.0, t),
        CellSide::Right => (1.0, t),
        CellSide::Bottom => (t, 0.0),
        CellSide::Top => (t, 1.0),
    }
}

/// Per-side quantities at one edge quadrature point.
struct SideEval {
    /// Shape values of the 4 cell nodes.
    n: [f64; 4],
    /// Voigt strains of the 8 cell DOFs.
    strains: [[f64; 3]; 8],
    /// Block-local DOF indices of the cell.
    dofs: [usize; 8],
    /// Global DOF base of the block.
    base: usize,
    /// Stiffness of the cell.
    c: Voigt,
}

fn eval_side(mesh: &MeshHierarchy, media: &MediaField, side: &SideTrace, t: f64) -> SideEval {
    let (xi, eta) = side_reference_coords(side.side, t);
    let n = shape_values(xi, eta);
    let grads = shape_gradients(xi, eta, mesh.fine_hx(), mesh.fine_hy());
    let mut strains = [[0.0; 3]; 8];
    for a in 0..4 {
        let cols = strain_columns(grads[a]);
        strains[2 * a] = cols[0];
        strains[2 * a + 1] = cols[1];
    }
    let dofs = cell_local_dofs(mesh, side.cell.0, side.cell.1);
    let idx = mesh.block_cell_index(side.block, side.cell.0, side.cell.1);
    SideEval {
        n,
        strains,
        dofs,
        base: mesh.block_dofs(side.block).start,
        c: media.stiffness_by_index(idx),
    }
}

/// Voigt coordinates of the symmetrized tensor jump `sym(j (x) n)` for a
/// displacement jump `j` and unit normal `n`, with strain ordering
/// `(e_xx, e_yy, 2 e_xy)`.
#[inline]
fn voigt_jump(j: [f64; 2], n: [f64; 2]) -> [f64; 3] {
    [j[0] * n[0], j[1] * n[1], j[0] * n[1] + j[1] * n[0]]
}

/// Contributions of one interior edge segment to the DG form: a 16x16
/// block over `[plus cell dofs, minus cell dofs]`.
///
/// `include_consistency` switches the symmetric consistency terms on (full
/// DG form) or off (penalized jump seminorm used by the DG norm).
fn segment_terms(
    mesh: &MeshHierarchy,
    media: &MediaField,
    seg: &SegmentTrace,
    params: &DgParams,
    include_consistency: bool,
    out: &mut [[f64; 16]; 16],
) -> ([usize; 16], bool) {
    let minus = seg
        .minus
        .as_ref()
        .expect("segment_terms requires an interior segment");
    let len = seg.length;
    let penalty_len = match params.penalty_scale {
        PenaltyScale::FineCell => len,
        PenaltyScale::CoarseCell => len * mesh.fine_per_coarse() as f64,
    };
    let pen = params.gamma / penalty_len;
    let n_plus = seg.plus.normal;

    for row in out.iter_mut() {
        row.fill(0.0);
    }
    let mut global = [0usize; 16];

    for &t in &GAUSS2 {
        let plus = eval_side(mesh, media, &seg.plus, t);
        let minus_ev = eval_side(mesh, media, minus, t);
        let c_avg = Voigt::new(
            0.5 * (plus.c.c11 + minus_ev.c.c11),
            0.5 * (plus.c.c13 + minus_ev.c.c13),
            0.5 * (plus.c.c33 + minus_ev.c.c33),
            0.5 * (plus.c.c55 + minus_ev.c.c55),
        );
        let d_avg = [
            0.5 * (plus.c.jump_penalty()[0] + minus_ev.c.jump_penalty()[0]),
            0.5 * (plus.c.jump_penalty()[1] + minus_ev.c.jump_penalty()[1]),
        ];
        let w = 0.5 * len;

        // Per local basis function (16 of them): displacement jump, its
        // Voigt tensor-jump coordinates, and the averaged stress.
        let mut jump = [[0.0f64; 2]; 16];
        let mut vjump = [[0.0f64; 3]; 16];
        let mut savg = [[0.0f64; 3]; 16];
        for a in 0..8 {
            let node = a / 2;
            let comp = a % 2;
            // Plus side basis: trace value n[node] on its component.
            let mut jp = [0.0; 2];
            jp[comp] = plus.n[node];
            jump[a] = jp;
            vjump[a] = voigt_jump(jp, n_plus);
            let sp = stress(&plus.c, plus.strains[a]);
            savg[a] = [0.5 * sp[0], 0.5 * sp[1], 0.5 * sp[2]];
            // Minus side basis: jump picks up a minus sign.
            let mut jm = [0.0; 2];
            jm[comp] = -minus_ev.n[node];
            jump[8 + a] = jm;
            vjump[8 + a] = voigt_jump(jm, n_plus);
            let sm = stress(&minus_ev.c, minus_ev.strains[a]);
            savg[8 + a] = [0.5 * sm[0], 0.5 * sm[1], 0.5 * sm[2]];
        }

        for b in 0..16 {
            let c_vb = stress(&c_avg, vjump[b]);
            for a in 0..16 {
                let mut val = pen
                    * (dot3(vjump[a], c_vb)
                        + jump[a][0] * d_avg[0] * jump[b][0]
                        + jump[a][1] * d_avg[1] * jump[b][1]);
                if include_consistency {
                    val -= dot3(savg[b], vjump[a]) + dot3(savg[a], vjump[b]);
                }
                out[a][b] += w * val;
            }
        }
    }

    for a in 0..8 {
        global[a] = plus_global(&seg.plus, mesh, a);
        global[8 + a] = plus_global(minus, mesh, a);
    }
    (global, true)
}

fn plus_global(side: &SideTrace, mesh: &MeshHierarchy, a: usize) -> usize {
    let dofs = cell_local_dofs(mesh, side.cell.0, side.cell.1);
    mesh.block_dofs(side.block).start + dofs[a]
}

fn assemble_dg_impl(
    mesh: &MeshHierarchy,
    media: &MediaField,
    params: &DgParams,
    include_consistency: bool,
) -> Result<SparseOperator> {
    let n = mesh.num_fine_dofs();
    let f = mesh.fine_per_coarse();
    let est = mesh.num_blocks() * f * f * 64 + mesh.interior_coarse_edges().count() * f * 256;
    let mut builder = CooBuilder::with_capacity(n, n, est);

    // Volume terms, block by block in id order.
    for block in 0..mesh.num_blocks() {
        let base = mesh.block_dofs(block).start;
        for cy in 0..f {
            for cx in 0..f {
                let idx = mesh.block_cell_index(block, cx, cy);
                let k = element_stiffness(
                    &media.stiffness_by_index(idx),
                    mesh.fine_hx(),
                    mesh.fine_hy(),
                );
                let dofs = cell_local_dofs(mesh, cx, cy);
                for a in 0..8 {
                    for b in 0..8 {
                        builder.push(base + dofs[a], base + dofs[b], k[a][b]);
                    }
                }
            }
        }
    }

    // Interface terms, edges in enumeration order.
    let mut local = [[0.0f64; 16]; 16];
    for edge_id in mesh.interior_coarse_edges().collect::<Vec<_>>() {
        for seg in mesh.interface_trace_map(edge_id)? {
            let (global, _) =
                segment_terms(mesh, media, &seg, params, include_consistency, &mut local);
            for a in 0..16 {
                for b in 0..16 {
                    builder.push(global[a], global[b], local[a][b]);
                }
            }
        }
    }

    Ok(builder.build_symmetric())
}

/// Assembles the full interior-penalty DG form without boundary
/// elimination. Mainly useful for evaluating the form on fields that do
/// not satisfy the Dirichlet constraint.
pub fn assemble_dg_unconstrained(
    mesh: &MeshHierarchy,
    media: &MediaField,
    params: &DgParams,
) -> Result<SparseOperator> {
    assemble_dg_impl(mesh, media, params, true)
}

/// Assembles the DG form and strongly eliminates the Dirichlet boundary:
/// rows and columns of constrained DOFs are zeroed.
pub fn assemble_dg(
    mesh: &MeshHierarchy,
    media: &MediaField,
    params: &DgParams,
) -> Result<SparseOperator> {
    let mut a = assemble_dg_impl(mesh, media, params, true)?;
    a.zero_rows_cols(mesh.boundary_mask());
    Ok(a)
}

/// Assembles the *penalized jump seminorm* operator: volume energy plus
/// penalty terms, without the consistency terms and without boundary
/// elimination. Its quadratic form is the squared DG norm.
pub fn assemble_dg_seminorm(
    mesh: &MeshHierarchy,
    media: &MediaField,
    params: &DgParams,
) -> Result<SparseOperator> {
    assemble_dg_impl(mesh, media, params, false)
}

/// Direct evaluation of the squared DG norm
///
/// ```text
/// ||v||^2 = sum_K int_K eps(v):C:eps(v)
///         + sum_E gamma/h int_E ( [[v]]:{C}:[[v]] + [[v]].{D}.[[v]] )
/// ```
///
/// by elementwise quadrature, without assembling an operator.
pub fn dg_norm_squared(
    mesh: &MeshHierarchy,
    media: &MediaField,
    params: &DgParams,
    v: &[f64],
) -> Result<f64> {
    assert_eq!(v.len(), mesh.num_fine_dofs(), "dg_norm: vector length");
    let f = mesh.fine_per_coarse();
    let mut total = 0.0;

    // Volume energy, cell by cell.
    for block in 0..mesh.num_blocks() {
        let base = mesh.block_dofs(block).start;
        for cy in 0..f {
            for cx in 0..f {
                let idx = mesh.block_cell_index(block, cx, cy);
                let c = media.stiffness_by_index(idx);
                let dofs = cell_local_dofs(mesh, cx, cy);
                let w = 0.25 * mesh.fine_hx() * mesh.fine_hy();
                for &xi in &GAUSS2 {
                    for &eta in &GAUSS2 {
                        let grads = shape_gradients(xi, eta, mesh.fine_hx(), mesh.fine_hy());
                        let mut e = [0.0; 3];
                        for a in 0..4 {
                            let cols = strain_columns(grads[a]);
                            let ux = v[base + dofs[2 * a]];
                            let uy = v[base + dofs[2 * a + 1]];
                            for k in 0..3 {
                                e[k] += cols[0][k] * ux + cols[1][k] * uy;
                            }
                        }
                        total += w * dot3(e, stress(&c, e));
                    }
                }
            }
        }
    }

    // Jump penalty on interior coarse edges.
    for edge_id in mesh.interior_coarse_edges().collect::<Vec<_>>() {
        for seg in mesh.interface_trace_map(edge_id)? {
            let minus = seg.minus.as_ref().unwrap();
            let len = seg.length;
            let penalty_len = match params.penalty_scale {
                PenaltyScale::FineCell => len,
                PenaltyScale::CoarseCell => len * f as f64,
            };
            let pen = params.gamma / penalty_len;
            for &t in &GAUSS2 {
                let plus = eval_side(mesh, media, &seg.plus, t);
                let minus_ev = eval_side(mesh, media, minus, t);
                let c_avg = Voigt::new(
                    0.5 * (plus.c.c11 + minus_ev.c.c11),
                    0.5 * (plus.c.c13 + minus_ev.c.c13),
                    0.5 * (plus.c.c33 + minus_ev.c.c33),
                    0.5 * (plus.c.c55 + minus_ev.c.c55),
                );
                let d_avg = [
                    0.5 * (plus.c.jump_penalty()[0] + minus_ev.c.jump_penalty()[0]),
                    0.5 * (plus.c.jump_penalty()[1] + minus_ev.c.jump_penalty()[1]),
                ];
                let mut jump = [0.0f64; 2];
                for a in 0..4 {
                    for comp in 0..2 {
                        jump[comp] += plus.n[a] * v[plus.base + plus.dofs[2 * a + comp]];
                        jump[comp] -= minus_ev.n[a] * v[minus_ev.base + minus_ev.dofs[2 * a + comp]];
                    }
                }
                let vj = voigt_jump(jump, seg.plus.normal);
                let val = dot3(vj, stress(&c_avg, vj))
                    + jump[0] * d_avg[0] * jump[0]
                    + jump[1] * d_avg[1] * jump[1];
                total += 0.5 * len * pen * val;
            }
        }
    }

    Ok(total)
}

/// Broken H1 seminorm squared: `sum_K int_K grad v : grad v` over both
/// displacement components, ignoring interface jumps.
pub fn broken_h1_squared(mesh: &MeshHierarchy, v: &[f64]) -> f64 {
    assert_eq!(v.len(), mesh.num_fine_dofs());
    let f = mesh.fine_per_coarse();
    let mut total = 0.0;
    let w = 0.25 * mesh.fine_hx() * mesh.fine_hy();
    for block in 0..mesh.num_blocks() {
        let base = mesh.block_dofs(block).start;
        for cy in 0..f {
            for cx in 0..f {
                let dofs = cell_local_dofs(mesh, cx, cy);
                for &xi in &GAUSS2 {
                    for &eta in &GAUSS2 {
                        let grads = shape_gradients(xi, eta, mesh.fine_hx(), mesh.fine_hy());
                        let mut g = [[0.0; 2]; 2];
                        for a in 0..4 {
                            for comp in 0..2 {
                                let coef = v[base + dofs[2 * a + comp]];
                                g[comp][0] += coef * grads[a][0];
                                g[comp][1] += coef * grads[a][1];
                            }
                        }
                        total += w
                            * (g[0][0] * g[0][0]
                                + g[0][1] * g[0][1]
                                + g[1][0] * g[1][0]
                                + g[1][1] * g[1][1]);
                    }
                }
            }
        }
    }
    total
}

/// Global consistent mass matrix, optionally density weighted, without
/// boundary treatment. Block diagonal by construction.
pub fn assemble_mass_unconstrained(
    mesh: &MeshHierarchy,
    media: &MediaField,
    weighted: bool,
) -> SparseOperator {
    let n = mesh.num_fine_dofs();
    let f = mesh.fine_per_coarse();
    let mut builder = CooBuilder::with_capacity(n, n, mesh.num_blocks() * f * f * 64);
    for block in 0..mesh.num_blocks() {
        let base = mesh.block_dofs(block).start;
        let (bx, by) = mesh.block_xy(block);
        for cy in 0..f {
            for cx in 0..f {
                let rho = if weighted {
                    media.rho(bx * f + cx, by * f + cy)
                } else {
                    1.0
                };
                let m = element_mass(rho, mesh.fine_hx(), mesh.fine_hy());
                let dofs = cell_local_dofs(mesh, cx, cy);
                for a in 0..8 {
                    for b in 0..8 {
                        builder.push(base + dofs[a], base + dofs[b], m[a][b]);
                    }
                }
            }
        }
    }
    builder.build_symmetric()
}

/// Row-sum lumped mass diagonal (density weighted if `weighted`).
pub fn lumped_mass(mesh: &MeshHierarchy, media: &MediaField, weighted: bool) -> Vec<f64> {
    let m = assemble_mass_unconstrained(mesh, media, weighted);
    let n = m.nrows();
    let ones = vec![1.0; n];
    m.matvec(&ones)
}

/// Consistent load vector `F_i = int f . N_i` by cellwise quadrature.
/// Entries of constrained boundary DOFs are zeroed when `eliminate` is set.
pub fn assemble_load<F>(mesh: &MeshHierarchy, f: F, eliminate: bool) -> Vec<f64>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    let mut load = vec![0.0; mesh.num_fine_dofs()];
    let fpc = mesh.fine_per_coarse();
    let (hx, hy) = (mesh.fine_hx(), mesh.fine_hy());
    let w = 0.25 * hx * hy;
    for block in 0..mesh.num_blocks() {
        let base = mesh.block_dofs(block).start;
        let origin = mesh.node_coords(block, 0, 0);
        for cy in 0..fpc {
            for cx in 0..fpc {
                let dofs = cell_local_dofs(mesh, cx, cy);
                let x0 = origin[0] + cx as f64 * hx;
                let y0 = origin[1] + cy as f64 * hy;
                for &xi in &GAUSS2 {
                    for &eta in &GAUSS2 {
                        let val = f(x0 + xi * hx, y0 + eta * hy);
                        let n = shape_values(xi, eta);
                        for a in 0..4 {
                            load[base + dofs[2 * a]] += w * n[a] * val[0];
                            load[base + dofs[2 * a + 1]] += w * n[a] * val[1];
                        }
                    }
                }
            }
        }
    }
    if eliminate {
        for (l, &constrained) in load.iter_mut().zip(mesh.boundary_mask()) {
            if constrained {
                *l = 0.0;
            }
        }
    }
    load
}

/// The assembled fine-scale operators shared by the spectral construction,
/// the propagators and the error analysis.
pub struct FineOperators {
    /// Full DG form, Dirichlet rows/columns zeroed.
    pub a_dg: SparseOperator,
    /// Density-weighted consistent mass; Dirichlet rows/columns zeroed and
    /// unit diagonal placed on constrained DOFs (keeps the matrix SPD while
    /// leaving quadratic forms of admissible vectors untouched).
    pub mass_rho: SparseOperator,
    /// Unweighted consistent mass with the same boundary treatment; this is
    /// the `s` inner product of the auxiliary space machinery.
    pub mass_unit: SparseOperator,
    /// Penalized seminorm operator (no consistency terms, no elimination).
    pub seminorm: SparseOperator,
    /// Parameters the operators were assembled with.
    pub params: DgParams,
}

impl FineOperators {
    pub fn build(mesh: &MeshHierarchy, media: &MediaField, params: DgParams) -> Result<Self> {
        media.check_spd()?;
        let a_dg = assemble_dg(mesh, media, &params)?;
        let mask = mesh.boundary_mask();
        let mut mass_rho = assemble_mass_unconstrained(mesh, media, true);
        mass_rho.zero_rows_cols(mask);
        mass_rho.set_diagonal(mask, 1.0);
        let mut mass_unit = assemble_mass_unconstrained(mesh, media, false);
        mass_unit.zero_rows_cols(mask);
        mass_unit.set_diagonal(mask, 1.0);
        let seminorm = assemble_dg_seminorm(mesh, media, &params)?;
        Ok(Self {
            a_dg,
            mass_rho,
            mass_unit,
            seminorm,
            params,
        })
    }
}
