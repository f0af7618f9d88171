//! Independent dense oracles for the acceptance suite.
//!
//! Everything here is assembled from scratch: global Q1 hat functions
//! evaluated in closed form, dense matrices, 3x3 Gauss quadrature (one
//! order higher than the production kernels, exact for the same
//! integrands).  The only shared ingredients are mesh geometry/indexing
//! and raw material values — data, not code paths.

use cemwave::media::{Density, MediaField, Voigt};
use cemwave::mesh::MeshHierarchy;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 3-point Gauss rule on [0, 1]: (abscissa, weight).
pub const G3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 0.277_777_777_777_777_8),
    (0.5, 0.444_444_444_444_444_4),
    (0.887_298_334_620_741_7, 0.277_777_777_777_777_8),
];

/// Value and derivative of the 1D hat of `node` restricted to `cell`, at
/// local coordinate `t` in [0, 1] (cells and nodes indexed within a block).
fn hat_1d(node: usize, cell: usize, t: f64) -> (f64, f64) {
    if node == cell {
        (1.0 - t, -1.0)
    } else if node == cell + 1 {
        (t, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Evaluation of every block-local scalar node function on one fine cell
/// of a block: values and physical gradients at local `(tx, ty)`.
fn node_functions(
    mesh: &MeshHierarchy,
    cell: (usize, usize),
    tx: f64,
    ty: f64,
) -> Vec<(f64, [f64; 2])> {
    let np = mesh.fine_per_coarse() + 1;
    let (hx, hy) = (mesh.fine_hx(), mesh.fine_hy());
    let mut out = Vec::with_capacity(np * np);
    for ny in 0..np {
        let (vy, dy) = hat_1d(ny, cell.1, ty);
        for nx in 0..np {
            let (vx, dx) = hat_1d(nx, cell.0, tx);
            out.push((vx * vy, [dx * vy / hx, vx * dy / hy]));
        }
    }
    out
}

/// Voigt strain of the vector basis function `(node, comp)` given the
/// scalar gradient, ordering `(e_xx, e_yy, 2 e_xy)`.
fn strain_of(grad: [f64; 2], comp: usize) -> [f64; 3] {
    if comp == 0 {
        [grad[0], 0.0, grad[1]]
    } else {
        [0.0, grad[1], grad[0]]
    }
}

/// Dense 3x3 stiffness in Voigt coordinates.
fn dense_c(c: &Voigt) -> [[f64; 3]; 3] {
    [
        [c.c11, c.c13, 0.0],
        [c.c13, c.c33, 0.0],
        [0.0, 0.0, c.c55],
    ]
}

fn apply_c(m: &[[f64; 3]; 3], e: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * e[0] + m[0][1] * e[1] + m[0][2] * e[2],
        m[1][0] * e[0] + m[1][1] * e[1] + m[1][2] * e[2],
        m[2][0] * e[0] + m[2][1] * e[1] + m[2][2] * e[2],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Voigt coordinates of `sym(j (x) n)` for jump vector `j`, normal `n`.
fn tensor_jump(j: [f64; 2], n: [f64; 2]) -> [f64; 3] {
    [j[0] * n[0], j[1] * n[1], j[0] * n[1] + j[1] * n[0]]
}

/// Dense global forms computed by brute force.
pub struct DenseForms {
    /// Full interior-penalty form, no boundary treatment.
    pub a_dg: DMatrix<f64>,
    /// Volume + penalty terms only (squared-DG-norm operator).
    pub seminorm: DMatrix<f64>,
    /// Density-weighted consistent mass, no boundary treatment.
    pub mass_rho: DMatrix<f64>,
    /// Unweighted consistent mass, no boundary treatment.
    pub mass_unit: DMatrix<f64>,
}

/// Brute-force dense assembly of the DG form, the penalized seminorm and
/// both masses, with penalty `gamma / h` on fine edge segments.
pub fn dense_forms(mesh: &MeshHierarchy, media: &MediaField, gamma: f64) -> DenseForms {
    let n = mesh.num_fine_dofs();
    let f = mesh.fine_per_coarse();
    let cn = mesh.coarse_n();
    let (hx, hy) = (mesh.fine_hx(), mesh.fine_hy());
    let mut a = DMatrix::zeros(n, n);
    let mut pen_op = DMatrix::zeros(n, n);
    let mut m_rho = DMatrix::zeros(n, n);
    let mut m_unit = DMatrix::zeros(n, n);

    // ---- volume terms, all pairs of DOFs of each block ----------------
    for block in 0..mesh.num_blocks() {
        let (bx, by) = mesh.block_xy(block);
        let base = mesh.block_dofs(block).start;
        let nd = mesh.dofs_per_block();
        for cy in 0..f {
            for cx in 0..f {
                let c = dense_c(&media.stiffness_by_index(mesh.block_cell_index(block, cx, cy)));
                let rho = media.rho(bx * f + cx, by * f + cy);
                for &(tx, wx) in &G3 {
                    for &(ty, wy) in &G3 {
                        let w = wx * wy * hx * hy;
                        let funcs = node_functions(mesh, (cx, cy), tx, ty);
                        // Strains and values of all 2*np^2 block DOFs.
                        let mut strains = vec![[0.0; 3]; nd];
                        let mut values = vec![(0usize, 0.0f64); nd];
                        for (node, &(v, g)) in funcs.iter().enumerate() {
                            for comp in 0..2 {
                                strains[2 * node + comp] = strain_of(g, comp);
                                values[2 * node + comp] = (comp, v);
                            }
                        }
                        for p in 0..nd {
                            let sp = apply_c(&c, strains[p]);
                            for q in 0..nd {
                                let val = w * dot3(sp, strains[q]);
                                a[(base + p, base + q)] += val;
                                pen_op[(base + p, base + q)] += val;
                                if values[p].0 == values[q].0 {
                                    let mv = w * values[p].1 * values[q].1;
                                    m_rho[(base + p, base + q)] += rho * mv;
                                    m_unit[(base + p, base + q)] += mv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // ---- interior coarse-edge terms ------------------------------------
    // An edge couples the DOFs of its two adjacent blocks.  The jump is
    // taken as (trace from the lower/left block) - (trace from the
    // upper/right block) with the normal pointing from the former to the
    // latter; the form is invariant under the opposite convention.
    let nd = mesh.dofs_per_block();
    let couple =
        |a_mat: &mut DMatrix<f64>,
         pen_mat: &mut DMatrix<f64>,
         lo: usize,
         hi: usize,
         vertical: bool| {
            let base_lo = mesh.block_dofs(lo).start;
            let base_hi = mesh.block_dofs(hi).start;
            let normal = if vertical { [1.0, 0.0] } else { [0.0, 1.0] };
            let h_seg = if vertical { hy } else { hx };
            for k in 0..f {
                // Cells adjacent to segment k on each side, and the local
                // coordinates of the edge within those cells.
                let (cell_lo, cell_hi) = if vertical {
                    ((f - 1, k), (0usize, k))
                } else {
                    ((k, f - 1), (k, 0usize))
                };
                let c_lo = dense_c(&media.stiffness_by_index(mesh.block_cell_index(
                    lo, cell_lo.0, cell_lo.1,
                )));
                let c_hi = dense_c(&media.stiffness_by_index(mesh.block_cell_index(
                    hi, cell_hi.0, cell_hi.1,
                )));
                let mut c_avg = [[0.0; 3]; 3];
                for r in 0..3 {
                    for s in 0..3 {
                        c_avg[r][s] = 0.5 * (c_lo[r][s] + c_hi[r][s]);
                    }
                }
                let d_avg = [
                    0.5 * (c_lo[0][0] + c_hi[0][0]),
                    0.5 * (c_lo[1][1] + c_hi[1][1]),
                ];
                let pen = gamma / h_seg;

                for &(t, wq) in &G3 {
                    let w = wq * h_seg;
                    // One-sided evaluations at the same physical point.
                    let (lo_funcs, hi_funcs) = if vertical {
                        (
                            node_functions(mesh, cell_lo, 1.0, t),
                            node_functions(mesh, cell_hi, 0.0, t),
                        )
                    } else {
                        (
                            node_functions(mesh, cell_lo, t, 1.0),
                            node_functions(mesh, cell_hi, t, 0.0),
                        )
                    };
                    // For each of the 2*nd participating DOFs (lo block
                    // then hi block): global index, jump vector, tensor
                    // jump, averaged stress.
                    let mut idx = Vec::with_capacity(2 * nd);
                    let mut jumps = Vec::with_capacity(2 * nd);
                    let mut vjumps = Vec::with_capacity(2 * nd);
                    let mut savg = Vec::with_capacity(2 * nd);
                    for (side, (funcs, c_side, base)) in [
                        (0usize, (&lo_funcs, &c_lo, base_lo)),
                        (1usize, (&hi_funcs, &c_hi, base_hi)),
                    ] {
                        let sign = if side == 0 { 1.0 } else { -1.0 };
                        for (node, &(v, g)) in funcs.iter().enumerate() {
                            for comp in 0..2 {
                                let mut jump = [0.0; 2];
                                jump[comp] = sign * v;
                                let stress = apply_c(c_side, strain_of(g, comp));
                                idx.push(base + 2 * node + comp);
                                jumps.push(jump);
                                vjumps.push(tensor_jump(jump, normal));
                                savg.push([0.5 * stress[0], 0.5 * stress[1], 0.5 * stress[2]]);
                            }
                        }
                    }
                    for p in 0..idx.len() {
                        let c_vp = apply_c(&c_avg, vjumps[p]);
                        for q in 0..idx.len() {
                            let penalty = pen
                                * (dot3(c_vp, vjumps[q])
                                    + jumps[p][0] * d_avg[0] * jumps[q][0]
                                    + jumps[p][1] * d_avg[1] * jumps[q][1]);
                            let consistency = dot3(savg[p], vjumps[q]) + dot3(savg[q], vjumps[p]);
                            a_mat[(idx[p], idx[q])] += w * (penalty - consistency);
                            pen_mat[(idx[p], idx[q])] += w * penalty;
                        }
                    }
                }
            }
        };

    for by in 0..cn {
        for bx in 0..cn.saturating_sub(1) {
            couple(
                &mut a,
                &mut pen_op,
                mesh.block_id(bx, by),
                mesh.block_id(bx + 1, by),
                true,
            );
        }
    }
    for by in 0..cn.saturating_sub(1) {
        for bx in 0..cn {
            couple(
                &mut a,
                &mut pen_op,
                mesh.block_id(bx, by),
                mesh.block_id(bx, by + 1),
                false,
            );
        }
    }

    DenseForms {
        a_dg: a,
        seminorm: pen_op,
        mass_rho: m_rho,
        mass_unit: m_unit,
    }
}

/// Applies the strong Dirichlet treatment to a dense form: zero
/// constrained rows and columns, optionally placing a unit diagonal.
pub fn eliminate(m: &mut DMatrix<f64>, mask: &[bool], unit_diagonal: bool) {
    for (d, &constrained) in mask.iter().enumerate() {
        if !constrained {
            continue;
        }
        for k in 0..m.nrows() {
            m[(d, k)] = 0.0;
            m[(k, d)] = 0.0;
        }
        if unit_diagonal {
            m[(d, d)] = 1.0;
        }
    }
}

/// Largest absolute difference between a sparse operator and a dense
/// reference.
pub fn max_gap(sparse: &cemwave::SparseOperator, dense: &DMatrix<f64>) -> f64 {
    let n = dense.nrows();
    let mut gap: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            gap = gap.max((sparse.get(r, c) - dense[(r, c)]).abs());
        }
    }
    gap
}

/// Random SPD medium: independent stiffness and density per fine cell.
pub fn random_media(mesh: &MeshHierarchy, seed: u64) -> MediaField {
    let nx = mesh.fine_cells_per_side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(nx * nx);
    let mut rho = Vec::with_capacity(nx * nx);
    for _ in 0..nx * nx {
        let c11: f64 = rng.gen_range(1.0..5.0);
        let c33: f64 = rng.gen_range(1.0..5.0);
        let c13 = rng.gen_range(-0.8..0.8) * (c11 * c33).sqrt();
        let c55 = rng.gen_range(0.5..2.0);
        cells.push(Voigt::new(c11, c13, c33, c55));
        rho.push(rng.gen_range(0.5..2.0));
    }
    MediaField::from_cells(nx, nx, cells, Density::PerCell(rho)).unwrap()
}

/// Random SPD stiffness with unit density everywhere (used where the
/// rho-weighted and unweighted inner products must coincide).
pub fn random_stiffness_unit_rho(mesh: &MeshHierarchy, seed: u64) -> MediaField {
    let nx = mesh.fine_cells_per_side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(nx * nx);
    for _ in 0..nx * nx {
        let c11: f64 = rng.gen_range(1.0..5.0);
        let c33: f64 = rng.gen_range(1.0..5.0);
        let c13 = rng.gen_range(-0.8..0.8) * (c11 * c33).sqrt();
        let c55 = rng.gen_range(0.5..2.0);
        cells.push(Voigt::new(c11, c13, c33, c55));
    }
    MediaField::from_cells(nx, nx, cells, Density::Constant(1.0)).unwrap()
}

/// Deterministic pseudo-random DOF vector (no RNG dependency).
pub fn wiggle(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (phase + 0.7310119 * i as f64).sin()).collect()
}

/// Minimum-norm stationarity residual of a constrained minimizer: the
/// part of `A phi` not representable by the constraint columns, i.e.
/// `min_mu ||A phi + S mu||`, normalized by the system scale.  For a true
/// KKT solution this is the stationarity defect regardless of the
/// multipliers the solver found.
pub fn stationarity_gap(
    a_region: &cemwave::SparseOperator,
    s_cols: &DMatrix<f64>,
    phi: &[f64],
) -> f64 {
    let r = DVector::from_vec(a_region.matvec(phi));
    let lsq = s_cols.clone().svd(true, true);
    let mu = lsq.solve(&r, 1e-14).expect("least squares");
    let resid = (&r - s_cols * &mu).norm();
    let scale = a_region.norm_inf().max(1.0);
    let z_norm = (DVector::from_column_slice(phi).norm_squared() + mu.norm_squared()).sqrt();
    resid / (scale * z_norm).max(1e-300)
}
