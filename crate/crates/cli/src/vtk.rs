//! Legacy-ASCII VTK structured-grid snapshots of displacement fields.
//!
//! The fine space duplicates nodes along coarse-block interfaces; a
//! snapshot collapses each global grid point onto its owning block (values
//! agree for continuous fields) so viewers see a single `(n*f+1)^2` grid.
//! Values are printed with Rust's shortest round-trip formatting, so a
//! written file re-reads to bit-identical `f64`s.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use cemwave::mesh::MeshHierarchy;

/// Renders a displacement DOF vector as a legacy VTK structured grid with
/// point scalars `ux` and `uy`.
pub fn render_displacement(mesh: &MeshHierarchy, u: &[f64], title: &str) -> Result<String> {
    if u.len() != mesh.num_fine_dofs() {
        bail!(
            "displacement vector has {} entries, mesh has {} fine DOFs",
            u.len(),
            mesh.num_fine_dofs()
        );
    }
    let np = mesh.fine_cells_per_side() + 1;
    let hx = mesh.fine_hx();
    let hy = mesh.fine_hy();
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0")?;
    writeln!(s, "{title}")?;
    writeln!(s, "ASCII")?;
    writeln!(s, "DATASET STRUCTURED_GRID")?;
    writeln!(s, "DIMENSIONS {np} {np} 1")?;
    writeln!(s, "POINTS {} double", np * np)?;
    for gj in 0..np {
        for gi in 0..np {
            writeln!(s, "{} {} 0", gi as f64 * hx, gj as f64 * hy)?;
        }
    }
    writeln!(s, "POINT_DATA {}", np * np)?;
    for (name, comp) in [("ux", 0), ("uy", 1)] {
        writeln!(s, "SCALARS {name} double 1")?;
        writeln!(s, "LOOKUP_TABLE default")?;
        for gj in 0..np {
            for gi in 0..np {
                let (block, nx, ny) = mesh.grid_point_owner(gi, gj);
                writeln!(s, "{}", u[mesh.dof_index(block, nx, ny, comp)])?;
            }
        }
    }
    Ok(s)
}

/// Writes a snapshot file (see [`render_displacement`]).
pub fn write_displacement(path: &Path, mesh: &MeshHierarchy, u: &[f64], title: &str) -> Result<()> {
    let body = render_displacement(mesh, u, title)?;
    std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Reads back the `ux`/`uy` point scalars of a snapshot written by this
/// module. Used to verify round-trip precision.
pub fn read_point_scalars(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    let mut num_points = 0usize;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("POINT_DATA ") {
            num_points = rest.trim().parse().context("bad POINT_DATA count")?;
            break;
        }
    }
    if num_points == 0 {
        bail!("no POINT_DATA section found");
    }
    let mut fields = Vec::new();
    while let Some(line) = lines.next() {
        if !line.starts_with("SCALARS ") {
            continue;
        }
        lines.next(); // LOOKUP_TABLE default
        let mut vals = Vec::with_capacity(num_points);
        for _ in 0..num_points {
            let v = lines.next().context("truncated scalar block")?;
            vals.push(v.trim().parse::<f64>().context("bad scalar value")?);
        }
        fields.push(vals);
    }
    if fields.len() != 2 {
        bail!("expected 2 scalar fields, found {}", fields.len());
    }
    let uy = fields.pop().unwrap();
    let ux = fields.pop().unwrap();
    Ok((ux, uy))
}
