//! Two-level structured grid hierarchy.
//!
//! The rectangular domain `(0, lx) x (0, ly)` is divided into
//! `coarse_n x coarse_n` coarse blocks, and every block into
//! `fine_per_coarse x fine_per_coarse` bilinear quadrilateral fine cells.
//! The displacement space is vector valued (two components per node),
//! continuous *inside* each coarse block and discontinuous across coarse
//! block interfaces: nodes on a coarse edge are duplicated, once per
//! adjacent block. Degrees of freedom are numbered block-major, nodes
//! row-major within the block, components minor:
//!
//! ```text
//! dof = block * 2*(f+1)^2  +  (ny*(f+1) + nx) * 2  +  component
//! ```
//!
//! with `f = fine_per_coarse`. Homogeneous Dirichlet data on the outer
//! boundary is imposed strongly; [`MeshHierarchy::boundary_mask`] flags the
//! constrained DOFs.

use crate::error::{Error, Result};

/// Identifies a coarse block, row-major: `block = by * coarse_n + bx`.
pub type BlockId = usize;

/// Orientation of a coarse edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOrientation {
    /// Edge parallel to the y axis (normal along x).
    Vertical,
    /// Edge parallel to the x axis (normal along y).
    Horizontal,
}

/// One coarse edge: a full side of a coarse block.
///
/// Interior edges carry the two adjacent blocks `(plus, minus)` with the
/// convention that the unit normal points from `plus` into `minus` (for a
/// vertical edge `plus` is the left block and the normal is `(+1, 0)`; for
/// a horizontal edge `plus` is the bottom block and the normal is
/// `(0, +1)`). Boundary edges have a single owner and an outward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEdge {
    pub orientation: EdgeOrientation,
    /// Block on the `plus` side of the normal.
    pub plus: BlockId,
    /// Block on the `minus` side, `None` on the domain boundary.
    pub minus: Option<BlockId>,
    /// Unit normal pointing from `plus` to `minus` (outward on the boundary).
    pub normal: [f64; 2],
}

impl CoarseEdge {
    pub fn is_interior(&self) -> bool {
        self.minus.is_some()
    }
}

/// Which side of a fine cell a trace lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSide {
    Left,
    Right,
    Bottom,
    Top,
}

/// Trace of one block onto one fine segment of a coarse edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SideTrace {
    pub block: BlockId,
    /// Fine cell within the block (cx, cy) whose side lies on the segment.
    pub cell: (usize, usize),
    /// Which side of that cell coincides with the segment.
    pub side: CellSide,
    /// Block-local node indices of the segment endpoints, ordered along the
    /// edge direction (increasing y for vertical edges, increasing x for
    /// horizontal ones).
    pub nodes: [usize; 2],
    /// Outward unit normal of this side's block on the segment.
    pub normal: [f64; 2],
    /// Global coordinates of the segment endpoints, same order as `nodes`.
    pub endpoints: [[f64; 2]; 2],
}

/// One fine segment of a coarse edge with the traces of the adjacent
/// block(s). Interior segments carry two sides whose `endpoints` coincide
/// geometrically in matching order; boundary segments carry one.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrace {
    pub plus: SideTrace,
    pub minus: Option<SideTrace>,
    /// Segment length.
    pub length: f64,
}

/// The structured two-level mesh. See the module documentation for the
/// numbering conventions.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    lx: f64,
    ly: f64,
    coarse_n: usize,
    fine_per_coarse: usize,
    coarse_edges: Vec<CoarseEdge>,
    boundary_mask: Vec<bool>,
}

impl MeshHierarchy {
    /// Builds the hierarchy for the rectangle `(0, lx) x (0, ly)`.
    ///
    /// # Errors
    ///
    /// Rejects non-finite or non-positive extents and zero subdivision
    /// counts.
    pub fn build(lx: f64, ly: f64, coarse_n: usize, fine_per_coarse: usize) -> Result<Self> {
        if !(lx.is_finite() && ly.is_finite()) || lx <= 0.0 || ly <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "domain extents must be positive and finite, got {lx} x {ly}"
            )));
        }
        if coarse_n == 0 {
            return Err(Error::InvalidMesh("coarse_n must be at least 1".into()));
        }
        if fine_per_coarse == 0 {
            return Err(Error::InvalidMesh(
                "fine_per_coarse must be at least 1".into(),
            ));
        }
        let mut mesh = Self {
            lx,
            ly,
            coarse_n,
            fine_per_coarse,
            coarse_edges: Vec::new(),
            boundary_mask: Vec::new(),
        };
        mesh.coarse_edges = mesh.enumerate_coarse_edges();
        mesh.boundary_mask = mesh.compute_boundary_mask();
        Ok(mesh)
    }

    fn enumerate_coarse_edges(&self) -> Vec<CoarseEdge> {
        let n = self.coarse_n;
        let mut edges = Vec::with_capacity(2 * n * (n + 1));
        // Vertical edges at x = i * Hx, i = 0..=n, scanned bottom to top.
        for i in 0..=n {
            for by in 0..n {
                let edge = if i == 0 {
                    CoarseEdge {
                        orientation: EdgeOrientation::Vertical,
                        plus: self.block_id(0, by),
                        minus: None,
                        normal: [-1.0, 0.0],
                    }
                } else if i == n {
                    CoarseEdge {
                        orientation: EdgeOrientation::Vertical,
                        plus: self.block_id(n - 1, by),
                        minus: None,
                        normal: [1.0, 0.0],
                    }
                } else {
                    CoarseEdge {
                        orientation: EdgeOrientation::Vertical,
                        plus: self.block_id(i - 1, by),
                        minus: Some(self.block_id(i, by)),
                        normal: [1.0, 0.0],
                    }
                };
                edges.push(edge);
            }
        }
        // Horizontal edges at y = j * Hy, j = 0..=n, scanned left to right.
        for j in 0..=n {
            for bx in 0..n {
                let edge = if j == 0 {
                    CoarseEdge {
                        orientation: EdgeOrientation::Horizontal,
                        plus: self.block_id(bx, 0),
                        minus: None,
                        normal: [0.0, -1.0],
                    }
                } else if j == n {
                    CoarseEdge {
                        orientation: EdgeOrientation::Horizontal,
                        plus: self.block_id(bx, n - 1),
                        minus: None,
                        normal: [0.0, 1.0],
                    }
                } else {
                    CoarseEdge {
                        orientation: EdgeOrientation::Horizontal,
                        plus: self.block_id(bx, j - 1),
                        minus: Some(self.block_id(bx, j)),
                        normal: [0.0, 1.0],
                    }
                };
                edges.push(edge);
            }
        }
        edges
    }

    fn compute_boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_fine_dofs()];
        let f = self.fine_per_coarse;
        let n = self.coarse_n;
        for by in 0..n {
            for bx in 0..n {
                let j = self.block_id(bx, by);
                for ny in 0..=f {
                    for nx in 0..=f {
                        let on_boundary = (bx == 0 && nx == 0)
                            || (bx == n - 1 && nx == f)
                            || (by == 0 && ny == 0)
                            || (by == n - 1 && ny == f);
                        if on_boundary {
                            mask[self.dof_index(j, nx, ny, 0)] = true;
                            mask[self.dof_index(j, nx, ny, 1)] = true;
                        }
                    }
                }
            }
        }
        mask
    }

    // ----- sizes and numbering ---------------------------------------------

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Coarse blocks per direction.
    pub fn coarse_n(&self) -> usize {
        self.coarse_n
    }

    /// Fine cells per coarse block per direction.
    pub fn fine_per_coarse(&self) -> usize {
        self.fine_per_coarse
    }

    /// Coarse cell extent along x.
    pub fn coarse_hx(&self) -> f64 {
        self.lx / self.coarse_n as f64
    }

    /// Coarse cell extent along y.
    pub fn coarse_hy(&self) -> f64 {
        self.ly / self.coarse_n as f64
    }

    /// Fine cell extent along x.
    pub fn fine_hx(&self) -> f64 {
        self.lx / (self.coarse_n * self.fine_per_coarse) as f64
    }

    /// Fine cell extent along y.
    pub fn fine_hy(&self) -> f64 {
        self.ly / (self.coarse_n * self.fine_per_coarse) as f64
    }

    pub fn num_blocks(&self) -> usize {
        self.coarse_n * self.coarse_n
    }

    /// Nodes per block side (`fine_per_coarse + 1`).
    pub fn nodes_per_side(&self) -> usize {
        self.fine_per_coarse + 1
    }

    /// DOFs per block: two components on each of the `(f+1)^2` nodes.
    pub fn dofs_per_block(&self) -> usize {
        2 * self.nodes_per_side() * self.nodes_per_side()
    }

    /// Total fine DOFs, counting duplicated interface nodes once per block.
    pub fn num_fine_dofs(&self) -> usize {
        self.num_blocks() * self.dofs_per_block()
    }

    /// Fine cells per direction on the global grid.
    pub fn fine_cells_per_side(&self) -> usize {
        self.coarse_n * self.fine_per_coarse
    }

    /// Total fine cells.
    pub fn num_fine_cells(&self) -> usize {
        self.fine_cells_per_side() * self.fine_cells_per_side()
    }

    /// Row-major block id of block `(bx, by)`.
    pub fn block_id(&self, bx: usize, by: usize) -> BlockId {
        debug_assert!(bx < self.coarse_n && by < self.coarse_n);
        by * self.coarse_n + bx
    }

    /// Inverse of [`Self::block_id`].
    pub fn block_xy(&self, block: BlockId) -> (usize, usize) {
        debug_assert!(block < self.num_blocks());
        (block % self.coarse_n, block / self.coarse_n)
    }

    /// Block-local node index of node `(nx, ny)`.
    pub fn node_index(&self, nx: usize, ny: usize) -> usize {
        debug_assert!(nx < self.nodes_per_side() && ny < self.nodes_per_side());
        ny * self.nodes_per_side() + nx
    }

    /// Global DOF of component `comp` at node `(nx, ny)` of `block`.
    pub fn dof_index(&self, block: BlockId, nx: usize, ny: usize, comp: usize) -> usize {
        debug_assert!(comp < 2);
        block * self.dofs_per_block() + self.node_index(nx, ny) * 2 + comp
    }

    /// Contiguous global DOF range of one block.
    pub fn block_dofs(&self, block: BlockId) -> std::ops::Range<usize> {
        debug_assert!(block < self.num_blocks());
        let nd = self.dofs_per_block();
        block * nd..(block + 1) * nd
    }

    /// Global coordinates of node `(nx, ny)` of `block`.
    pub fn node_coords(&self, block: BlockId, nx: usize, ny: usize) -> [f64; 2] {
        let (bx, by) = self.block_xy(block);
        let f = self.fine_per_coarse;
        [
            (bx * f + nx) as f64 * self.fine_hx(),
            (by * f + ny) as f64 * self.fine_hy(),
        ]
    }

    /// Global fine-cell index of cell `(cx, cy)` on the global fine grid,
    /// row-major. This indexes media fields.
    pub fn global_cell_index(&self, cx: usize, cy: usize) -> usize {
        debug_assert!(cx < self.fine_cells_per_side() && cy < self.fine_cells_per_side());
        cy * self.fine_cells_per_side() + cx
    }

    /// Global fine-cell index of block-local cell `(cx, cy)` in `block`.
    pub fn block_cell_index(&self, block: BlockId, cx: usize, cy: usize) -> usize {
        let (bx, by) = self.block_xy(block);
        let f = self.fine_per_coarse;
        self.global_cell_index(bx * f + cx, by * f + cy)
    }

    // ----- boundary --------------------------------------------------------

    /// Mask over all fine DOFs; `true` marks a DOF on the outer (Dirichlet)
    /// boundary.
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    /// Block-local indices (0..dofs_per_block) of the DOFs of `block` that
    /// are *not* constrained by the outer boundary, ascending.
    pub fn block_active_local_dofs(&self, block: BlockId) -> Vec<usize> {
        let range = self.block_dofs(block);
        let base = range.start;
        range
            .filter(|&g| !self.boundary_mask[g])
            .map(|g| g - base)
            .collect()
    }

    // ----- coarse edges and traces ------------------------------------------

    /// All coarse edges (interior and boundary) in a fixed deterministic
    /// order: vertical edges first (by x position, then bottom to top), then
    /// horizontal edges (by y position, then left to right).
    pub fn coarse_edges(&self) -> &[CoarseEdge] {
        &self.coarse_edges
    }

    /// Ids of the interior coarse edges, in enumeration order.
    pub fn interior_coarse_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.coarse_edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_interior())
            .map(|(i, _)| i)
    }

    /// Fine-segment traces of one coarse edge.
    ///
    /// Each coarse edge consists of `fine_per_coarse` fine segments. For
    /// interior edges both sides are returned, with endpoint coordinates
    /// listed in matching order so jumps can be formed segment by segment;
    /// boundary edges return the single owning side.
    ///
    /// # Errors
    ///
    /// Returns [`Error::IndexOutOfRange`] for an unknown edge id.
    pub fn interface_trace_map(&self, edge_id: usize) -> Result<Vec<SegmentTrace>> {
        let edge = self
            .coarse_edges
            .get(edge_id)
            .ok_or_else(|| {
                Error::IndexOutOfRange(format!(
                    "coarse edge {edge_id} (mesh has {})",
                    self.coarse_edges.len()
                ))
            })?
            .clone();
        let f = self.fine_per_coarse;
        let mut segments = Vec::with_capacity(f);
        for s in 0..f {
            let plus = self.side_trace(&edge, edge.plus, s, true);
            let minus = edge.minus.map(|b| self.side_trace(&edge, b, s, false));
            let length = match edge.orientation {
                EdgeOrientation::Vertical => self.fine_hy(),
                EdgeOrientation::Horizontal => self.fine_hx(),
            };
            segments.push(SegmentTrace {
                plus,
                minus,
                length,
            });
        }
        Ok(segments)
    }

    /// Builds the trace of `block` onto fine segment `s` of `edge`.
    /// `is_plus` selects which side of the edge the block lies on.
    fn side_trace(&self, edge: &CoarseEdge, block: BlockId, s: usize, is_plus: bool) -> SideTrace {
        let f = self.fine_per_coarse;
        let (cell, side, n0, n1) = match edge.orientation {
            EdgeOrientation::Vertical => {
                // The edge runs along y; segment s spans node rows s..s+1.
                // A block to the left of the edge touches it with its right
                // side; a block to the right with its left side.
                let block_is_left = if is_plus {
                    edge.normal[0] > 0.0
                } else {
                    edge.normal[0] < 0.0
                };
                if block_is_left {
                    ((f - 1, s), CellSide::Right, (f, s), (f, s + 1))
                } else {
                    ((0, s), CellSide::Left, (0, s), (0, s + 1))
                }
            }
            EdgeOrientation::Horizontal => {
                let block_is_below = if is_plus {
                    edge.normal[1] > 0.0
                } else {
                    edge.normal[1] < 0.0
                };
                if block_is_below {
                    ((s, f - 1), CellSide::Top, (s, f), (s + 1, f))
                } else {
                    ((s, 0), CellSide::Bottom, (s, 0), (s + 1, 0))
                }
            }
        };
        let sign = if is_plus { 1.0 } else { -1.0 };
        SideTrace {
            block,
            cell,
            side,
            nodes: [self.node_index(n0.0, n0.1), self.node_index(n1.0, n1.1)],
            normal: [sign * edge.normal[0], sign * edge.normal[1]],
            endpoints: [
                self.node_coords(block, n0.0, n0.1),
                self.node_coords(block, n1.0, n1.1),
            ],
        }
    }

    // ----- oversampling ------------------------------------------------------

    /// Blocks within `r` layers of `block` in the Chebyshev (chessboard)
    /// metric on block indices, clipped at the domain boundary. Returned
    /// ascending by block id; always contains `block` itself.
    pub fn oversampling(&self, block: BlockId, r: usize) -> Vec<BlockId> {
        assert!(block < self.num_blocks(), "oversampling: block out of range");
        let (bx, by) = self.block_xy(block);
        let n = self.coarse_n;
        let x_lo = bx.saturating_sub(r);
        let x_hi = (bx + r).min(n - 1);
        let y_lo = by.saturating_sub(r);
        let y_hi = (by + r).min(n - 1);
        let mut out = Vec::with_capacity((x_hi - x_lo + 1) * (y_hi - y_lo + 1));
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                out.push(self.block_id(x, y));
            }
        }
        out
    }

    // ----- sampling helpers ----------------------------------------------------

    /// Samples a vector field at every node, producing a DOF vector.
    /// Duplicated interface nodes receive identical values, so the result
    /// represents a continuous field.
    pub fn interpolate_nodal<F>(&self, field: F) -> Vec<f64>
    where
        F: Fn(f64, f64) -> [f64; 2],
    {
        let mut v = vec![0.0; self.num_fine_dofs()];
        let np = self.nodes_per_side();
        for block in 0..self.num_blocks() {
            for ny in 0..np {
                for nx in 0..np {
                    let [x, y] = self.node_coords(block, nx, ny);
                    let val = field(x, y);
                    v[self.dof_index(block, nx, ny, 0)] = val[0];
                    v[self.dof_index(block, nx, ny, 1)] = val[1];
                }
            }
        }
        v
    }

    /// Owner used when collapsing duplicated interface values onto the
    /// global point grid: the lowest block id containing global node
    /// `(gi, gj)`, together with the block-local node coordinates.
    pub fn grid_point_owner(&self, gi: usize, gj: usize) -> (BlockId, usize, usize) {
        let f = self.fine_per_coarse;
        let n = self.coarse_n;
        debug_assert!(gi <= n * f && gj <= n * f);
        // On an interface line the lower/left block has the smaller id.
        let bx = if gi == 0 { 0 } else { (gi - 1) / f };
        let by = if gj == 0 { 0 } else { (gj - 1) / f };
        let bx = bx.min(n - 1);
        let by = by.min(n - 1);
        (self.block_id(bx, by), gi - bx * f, gj - by * f)
    }
}
