//! Material description: per-fine-cell anisotropic stiffness tensors and
//! density.
//!
//! Plane-strain stiffness is stored in 2D Voigt form with strain ordering
//! `(e_xx, e_yy, 2 e_xy)`:
//!
//! ```text
//!     [ C11  C13   0  ]
//! C = [ C13  C33   0  ]
//!     [  0    0   C55 ]
//! ```
//!
//! A tensor is admissible when `C` is symmetric positive definite, i.e.
//! `C11 > 0`, `C33 > 0`, `C55 > 0` and `C11*C33 - C13^2 > 0`.

use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// One cell's stiffness tensor in 2D Voigt form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voigt {
    pub c11: f64,
    pub c13: f64,
    pub c33: f64,
    pub c55: f64,
}

impl Voigt {
    pub fn new(c11: f64, c13: f64, c33: f64, c55: f64) -> Self {
        Self { c11, c13, c33, c55 }
    }

    /// Isotropic material from Lame parameters `(lambda, mu)`.
    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        Self {
            c11: lambda + 2.0 * mu,
            c13: lambda,
            c33: lambda + 2.0 * mu,
            c55: mu,
        }
    }

    /// Checks symmetric positive definiteness of the Voigt matrix.
    pub fn is_spd(&self) -> bool {
        self.c11 > 0.0
            && self.c33 > 0.0
            && self.c55 > 0.0
            && self.c11 * self.c33 - self.c13 * self.c13 > 0.0
            && self.c11.is_finite()
            && self.c13.is_finite()
            && self.c33.is_finite()
            && self.c55.is_finite()
    }

    /// Eigenvalues of the Voigt matrix, ascending. The matrix is block
    /// diagonal: a 2x2 block on the normal strains plus `C55` on the shear
    /// strain, so the spectrum is available in closed form.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mid = 0.5 * (self.c11 + self.c33);
        let rad = (0.5 * (self.c11 - self.c33)).hypot(self.c13);
        let mut eig = [mid - rad, mid + rad, self.c55];
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig
    }

    /// The Voigt matrix as a dense 3x3 array (row major).
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.c11, self.c13, 0.0],
            [self.c13, self.c33, 0.0],
            [0.0, 0.0, self.c55],
        ]
    }

    /// Diagonal displacement-jump penalty tensor `diag(C11, C33)`.
    pub fn jump_penalty(&self) -> [f64; 2] {
        [self.c11, self.c33]
    }

    /// Componentwise scaling `(C11*s11, C13*s13, C33*s33, C55*s55)`.
    pub fn scaled(&self, s: [f64; 4]) -> Self {
        Self {
            c11: self.c11 * s[0],
            c13: self.c13 * s[1],
            c33: self.c33 * s[2],
            c55: self.c55 * s[3],
        }
    }
}

/// Mass density: constant or per fine cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Constant(f64),
    PerCell(Vec<f64>),
}

/// Material field sampled on the global fine-cell grid (row major, row 0 at
/// the bottom of the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct MediaField {
    /// Fine cells along x.
    nx: usize,
    /// Fine cells along y.
    ny: usize,
    cells: Vec<Voigt>,
    density: Density,
}

/// One horizontal material layer: `[y_min, y_max)` in physical coordinates
/// with a uniform stiffness tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub y_min: f64,
    pub y_max: f64,
    pub stiffness: Voigt,
}

/// Componentwise scaling applied to `(C11, C13, C33, C55)` to derive the
/// second built-in model from the first.
pub const MODEL2_SCALING: [f64; 4] = [1.0, 0.5, 0.5, 0.25];

impl MediaField {
    /// Uniform medium over the fine grid of `mesh`.
    pub fn constant(mesh: &MeshHierarchy, stiffness: Voigt, rho: f64) -> Result<Self> {
        let n = mesh.fine_cells_per_side();
        Self::from_cells(n, n, vec![stiffness; n * n], Density::Constant(rho))
    }

    /// Builds a field from explicit per-cell tensors; validates positivity.
    pub fn from_cells(nx: usize, ny: usize, cells: Vec<Voigt>, density: Density) -> Result<Self> {
        if cells.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                expected: nx * ny,
                got: cells.len(),
                context: "media cells".into(),
            });
        }
        if let Density::PerCell(rho) = &density {
            if rho.len() != nx * ny {
                return Err(Error::DimensionMismatch {
                    expected: nx * ny,
                    got: rho.len(),
                    context: "media density".into(),
                });
            }
            if let Some(k) = rho.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
                return Err(Error::InvalidMedia(format!(
                    "density must be positive and finite, cell ({}, {}) has {}",
                    k % nx,
                    k / nx,
                    rho[k]
                )));
            }
        } else if let Density::Constant(rho) = density {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::InvalidMedia(format!(
                    "density must be positive and finite, got {rho}"
                )));
            }
        }
        let field = Self {
            nx,
            ny,
            cells,
            density,
        };
        field.check_spd()?;
        Ok(field)
    }

    /// Horizontal layered medium. Layers must tile the vertical extent of
    /// the domain without gaps or overlaps (each fine-cell center must fall
    /// in exactly one layer).
    pub fn layered(mesh: &MeshHierarchy, layers: &[Layer], rho: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidMedia("layer list is empty".into()));
        }
        for layer in layers {
            if !(layer.y_max > layer.y_min) {
                return Err(Error::InvalidMedia(format!(
                    "layer [{}, {}) is empty or inverted",
                    layer.y_min, layer.y_max
                )));
            }
        }
        let mut sorted: Vec<&Layer> = layers.iter().collect();
        sorted.sort_by(|a, b| a.y_min.partial_cmp(&b.y_min).unwrap());
        for pair in sorted.windows(2) {
            if pair[1].y_min < pair[0].y_max {
                return Err(Error::InvalidMedia(format!(
                    "layers [{}, {}) and [{}, {}) overlap",
                    pair[0].y_min, pair[0].y_max, pair[1].y_min, pair[1].y_max
                )));
            }
        }
        let n = mesh.fine_cells_per_side();
        let hy = mesh.fine_hy();
        let mut cells = Vec::with_capacity(n * n);
        for cy in 0..n {
            let yc = (cy as f64 + 0.5) * hy;
            let layer = sorted
                .iter()
                .find(|l| yc >= l.y_min && yc < l.y_max)
                .ok_or_else(|| {
                    Error::InvalidMedia(format!("no layer covers y = {yc} (gap in layer spec)"))
                })?;
            for _cx in 0..n {
                cells.push(layer.stiffness);
            }
        }
        Self::from_cells(n, n, cells, Density::Constant(rho))
    }

    /// First built-in heterogeneous model: four horizontal layers with a
    /// mild stiffness contrast.
    pub fn builtin_model1(mesh: &MeshHierarchy, rho: f64) -> Result<Self> {
        let ly = mesh.ly();
        let base = Voigt::new(4.0, 1.0, 3.0, 1.0);
        let layers = [
            Layer {
                y_min: 0.0,
                y_max: 0.25 * ly,
                stiffness: base,
            },
            Layer {
                y_min: 0.25 * ly,
                y_max: 0.5 * ly,
                stiffness: base.scaled([2.0, 1.5, 2.0, 2.5]),
            },
            Layer {
                y_min: 0.5 * ly,
                y_max: 0.75 * ly,
                stiffness: base.scaled([0.75, 0.5, 0.75, 0.5]),
            },
            Layer {
                y_min: 0.75 * ly,
                y_max: ly * (1.0 + 1e-12),
                stiffness: base.scaled([1.5, 1.0, 1.25, 1.75]),
            },
        ];
        Self::layered(mesh, &layers, rho)
    }

    /// Second built-in model: the first with `(C11, C13, C33, C55)` scaled
    /// by [`MODEL2_SCALING`].
    pub fn builtin_model2(mesh: &MeshHierarchy, rho: f64) -> Result<Self> {
        Self::builtin_model1(mesh, rho)?.scaled(MODEL2_SCALING)
    }

    /// Componentwise stiffness scaling of the whole field (returns a new
    /// validated field; density is unchanged).
    pub fn scaled(&self, s: [f64; 4]) -> Result<Self> {
        let cells = self.cells.iter().map(|c| c.scaled(s)).collect();
        Self::from_cells(self.nx, self.ny, cells, self.density.clone())
    }

    pub fn cells_x(&self) -> usize {
        self.nx
    }

    pub fn cells_y(&self) -> usize {
        self.ny
    }

    /// Stiffness of global fine cell `(cx, cy)`.
    pub fn stiffness(&self, cx: usize, cy: usize) -> Voigt {
        debug_assert!(cx < self.nx && cy < self.ny);
        self.cells[cy * self.nx + cx]
    }

    /// Stiffness by global fine-cell index (row major).
    pub fn stiffness_by_index(&self, idx: usize) -> Voigt {
        self.cells[idx]
    }

    /// Density of global fine cell `(cx, cy)`.
    pub fn rho(&self, cx: usize, cy: usize) -> f64 {
        match &self.density {
            Density::Constant(r) => *r,
            Density::PerCell(v) => v[cy * self.nx + cx],
        }
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    /// Verifies that every cell is symmetric positive definite; reports the
    /// first offending cell with the violated condition.
    pub fn check_spd(&self) -> Result<()> {
        for (k, c) in self.cells.iter().enumerate() {
            if !c.is_spd() {
                let detail = if !(c.c11 > 0.0) {
                    format!("C11 = {} must be positive", c.c11)
                } else if !(c.c33 > 0.0) {
                    format!("C33 = {} must be positive", c.c33)
                } else if !(c.c55 > 0.0) {
                    format!("C55 = {} must be positive", c.c55)
                } else {
                    format!(
                        "C11*C33 - C13^2 = {} must be positive",
                        c.c11 * c.c33 - c.c13 * c.c13
                    )
                };
                return Err(Error::NotPositiveDefinite {
                    x: k % self.nx,
                    y: k / self.nx,
                    detail,
                });
            }
        }
        Ok(())
    }

    /// Uniform spectral bounds of the stiffness over all cells: the
    /// smallest and largest eigenvalue of any cell's Voigt matrix. These
    /// are the coercivity/continuity constants of the energy form.
    pub fn stiffness_bounds(&self) -> (f64, f64) {
        let mut c0 = f64::INFINITY;
        let mut c1 = f64::NEG_INFINITY;
        for c in &self.cells {
            let eig = c.eigenvalues();
            c0 = c0.min(eig[0]);
            c1 = c1.max(eig[2]);
        }
        (c0, c1)
    }

    // ----- raster ingestion / export -----------------------------------------

    /// Reads a binary stiffness raster and samples it onto the fine grid of
    /// `mesh` by nearest-cell lookup.
    ///
    /// Format: one ASCII header line `W H 4`, then four row-major planes of
    /// `W*H` little-endian f64 values in the order `C11, C13, C33, C55`
    /// (row 0 at the domain bottom). The raster is interpreted as a uniform
    /// grid covering the whole domain and must be at least as fine as the
    /// fine grid in each direction.
    pub fn ingest_raster(path: &Path, mesh: &MeshHierarchy, rho: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::InvalidMedia(format!(
                "raster header must be `W H 4`, got {header:?}"
            )));
        }
        let w: usize = parts[0]
            .parse()
            .map_err(|_| Error::InvalidMedia(format!("bad raster width {:?}", parts[0])))?;
        let h: usize = parts[1]
            .parse()
            .map_err(|_| Error::InvalidMedia(format!("bad raster height {:?}", parts[1])))?;
        if parts[2] != "4" {
            return Err(Error::InvalidMedia(format!(
                "raster must carry 4 planes, header says {:?}",
                parts[2]
            )));
        }
        let mut payload = vec![0u8; w * h * 4 * 8];
        reader.read_exact(&mut payload).map_err(|e| {
            Error::InvalidMedia(format!(
                "raster payload truncated: expected {} bytes ({e})",
                payload.len()
            ))
        })?;
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(Error::InvalidMedia(
                "raster payload has trailing bytes beyond W*H*4 values".into(),
            ));
        }
        let mut planes = vec![vec![0.0f64; w * h]; 4];
        for (p, plane) in planes.iter_mut().enumerate() {
            for (k, v) in plane.iter_mut().enumerate() {
                let off = (p * w * h + k) * 8;
                *v = f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
            }
        }
        Self::from_planes(w, h, &planes, mesh, rho)
    }

    /// CSV variant of [`Self::ingest_raster`]: one plane per file, in the
    /// order `C11, C13, C33, C55`. Each file holds `H` lines of `W`
    /// comma-separated values (row 0 at the domain bottom).
    pub fn ingest_raster_csv(paths: &[&Path; 4], mesh: &MeshHierarchy, rho: f64) -> Result<Self> {
        let mut planes: Vec<Vec<f64>> = Vec::with_capacity(4);
        let mut dims: Option<(usize, usize)> = None;
        for path in paths {
            let text = std::fs::read_to_string(path)?;
            let mut plane = Vec::new();
            let mut w: Option<usize> = None;
            let mut h = 0usize;
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::InvalidMedia(format!("bad CSV value {s:?} in {path:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                match w {
                    None => w = Some(row.len()),
                    Some(w0) if w0 != row.len() => {
                        return Err(Error::InvalidMedia(format!(
                            "ragged CSV rows in {path:?}: {w0} vs {}",
                            row.len()
                        )))
                    }
                    _ => {}
                }
                plane.extend(row);
                h += 1;
            }
            let w = w.ok_or_else(|| Error::InvalidMedia(format!("empty CSV plane {path:?}")))?;
            match dims {
                None => dims = Some((w, h)),
                Some(d) if d != (w, h) => {
                    return Err(Error::InvalidMedia(format!(
                        "plane {path:?} is {w}x{h}, expected {}x{}",
                        d.0, d.1
                    )))
                }
                _ => {}
            }
            planes.push(plane);
        }
        let (w, h) = dims.unwrap();
        Self::from_planes(w, h, &planes, mesh, rho)
    }

    fn from_planes(
        w: usize,
        h: usize,
        planes: &[Vec<f64>],
        mesh: &MeshHierarchy,
        rho: f64,
    ) -> Result<Self> {
        let n = mesh.fine_cells_per_side();
        if w < n || h < n {
            return Err(Error::InvalidMedia(format!(
                "raster {w}x{h} is coarser than the fine grid {n}x{n}"
            )));
        }
        let mut cells = Vec::with_capacity(n * n);
        for cy in 0..n {
            // Nearest raster row for the fine-cell center.
            let ry = (((cy as f64 + 0.5) * h as f64 / n as f64) as usize).min(h - 1);
            for cx in 0..n {
                let rx = (((cx as f64 + 0.5) * w as f64 / n as f64) as usize).min(w - 1);
                let k = ry * w + rx;
                cells.push(Voigt::new(
                    planes[0][k],
                    planes[1][k],
                    planes[2][k],
                    planes[3][k],
                ));
            }
        }
        Self::from_cells(n, n, cells, Density::Constant(rho))
    }

    /// Writes the field as a binary raster at the fine resolution. The
    /// produced file ingests back bit-identically on the same mesh.
    pub fn export_raster(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{} {} 4", self.nx, self.ny)?;
        for plane in 0..4 {
            for c in &self.cells {
                let v = match plane {
                    0 => c.c11,
                    1 => c.c13,
                    2 => c.c33,
                    _ => c.c55,
                };
                writer.write_all(&v.to_le_bytes())?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}
