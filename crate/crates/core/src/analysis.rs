//! Error norms, the elliptic projection, and convergence studies.
//!
//! Errors between a reconstructed multiscale solution and the fine
//! reference are reported relative, in three norms: plain `L^2`, the DG
//! energy norm (broken strain energy plus penalized interface jumps; the
//! "H1" metric of the convergence tables), and a plain broken `H^1`
//! seminorm as a penalty-free variant.
//!
//! A convergence study sweeps `(coarse_n, layers, modes)` levels over a
//! *fixed* global fine resolution, so every level resolves the same
//! medium and the fine reference changes only through the interface set
//! of its broken space.

use crate::assembly::{broken_h1_squared, DgParams, FineOperators};
use crate::cem::{CemParams, CemSpace};
use crate::error::{Error, Result};
use crate::media::MediaField;
use crate::mesh::MeshHierarchy;
use crate::sparse::LdlFactor;
use crate::spectral::{AuxSpace, ModeCount};
use crate::wave::{check_stability, CoarseWave, FineWave, MassTreatment, SourceSpec};

/// Relative errors of a multiscale solution against a fine reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Relative `L^2` error.
    pub l2: f64,
    /// Relative DG-norm error (strain energy + penalized jumps).
    pub dg: f64,
    /// Relative broken `H^1` seminorm error (no jump terms).
    pub h1_broken: f64,
}

/// Relative errors of `u_multi` (already reconstructed to fine DOFs)
/// against the reference `u_ref`.  Both vectors must be admissible
/// (zero on the Dirichlet boundary).
pub fn relative_errors(
    mesh: &MeshHierarchy,
    ops: &FineOperators,
    u_multi: &[f64],
    u_ref: &[f64],
) -> Result<ErrorReport> {
    let n = mesh.num_fine_dofs();
    for (len, what) in [(u_multi.len(), "multiscale"), (u_ref.len(), "reference")] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
                context: format!("{what} solution vector"),
            });
        }
    }
    let diff: Vec<f64> = u_multi.iter().zip(u_ref).map(|(a, b)| a - b).collect();

    let ref_l2 = ops.mass_unit.quadratic(u_ref);
    let ref_dg = ops.seminorm.quadratic(u_ref);
    let ref_h1 = broken_h1_squared(mesh, u_ref);
    if ref_l2 <= 0.0 || ref_dg <= 0.0 {
        return Err(Error::Analysis(
            "error norms are relative; the reference solution has zero norm".into(),
        ));
    }

    Ok(ErrorReport {
        l2: (ops.mass_unit.quadratic(&diff) / ref_l2).sqrt(),
        dg: (ops.seminorm.quadratic(&diff) / ref_dg).sqrt(),
        h1_broken: if ref_h1 > 0.0 {
            (broken_h1_squared(mesh, &diff) / ref_h1).sqrt()
        } else {
            0.0
        },
    })
}

/// Elliptic projection onto the coarse space: solves `A_c c = g` with
/// `g_b = a_DG(v, phi_b)`, so that `a_DG(v - reconstruct(c), phi) = 0`
/// for every trial function.
pub fn elliptic_project(
    mesh: &MeshHierarchy,
    ops: &FineOperators,
    cem: &CemSpace,
    v: &[f64],
) -> Result<Vec<f64>> {
    let n = mesh.num_fine_dofs();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
            context: "elliptic projection input".into(),
        });
    }
    let g = cem.project_vector(&ops.a_dg.matvec(v));
    let factor = LdlFactor::new(cem.a_c())?;
    Ok(factor.solve(&g))
}

/// One level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct StudyLevel {
    /// Coarse blocks per side; must divide the study's global fine
    /// resolution.
    pub coarse_n: usize,
    /// Oversampling layers.
    pub num_layers: usize,
    /// Auxiliary modes per block.
    pub num_modes: usize,
}

/// One row of a study table.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    /// Oversampling layers of the level.
    pub nol: usize,
    /// Normalized coarse cell size `H / lx = 1 / coarse_n`.
    pub l: f64,
    /// Auxiliary modes per block.
    pub nbf: usize,
    /// Dimension of the coarse space.
    pub coarse_dim: usize,
    /// Dimension of the fine space.
    pub fine_dim: usize,
    /// Relative `L^2` error at the final time.
    pub error_l2: f64,
    /// Relative DG-norm error at the final time.
    pub error_dg: f64,
    /// Relative broken `H^1` seminorm error at the final time.
    pub error_h1_broken: f64,
}

/// Shared inputs of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct StudySpec<'a> {
    pub lx: f64,
    pub ly: f64,
    /// Global fine cells per side, identical on every level.
    pub global_fine: usize,
    /// Medium sampled at the global fine resolution.
    pub media: &'a MediaField,
    pub dg: DgParams,
    pub source: SourceSpec,
    pub tau: f64,
    pub t_final: f64,
    /// CFL safety factor checked on both systems of every level.
    pub safety: f64,
    pub levels: &'a [StudyLevel],
}

/// Runs one source-driven wave simulation per level — fine reference and
/// multiscale — and reports the relative errors at the final time.
pub fn convergence_study(spec: &StudySpec) -> Result<Vec<StudyRow>> {
    if spec.levels.is_empty() {
        return Err(Error::Analysis("study needs at least one level".into()));
    }
    spec.source.validate()?;
    let mut rows = Vec::with_capacity(spec.levels.len());
    for level in spec.levels {
        rows.push(run_level(spec, level)?);
    }
    Ok(rows)
}

/// True when the `L^2` column strictly decreases down the table.
pub fn l2_strictly_decreasing(rows: &[StudyRow]) -> bool {
    rows.windows(2).all(|w| w[1].error_l2 < w[0].error_l2)
}

/// True when the DG column strictly decreases down the table.
pub fn dg_strictly_decreasing(rows: &[StudyRow]) -> bool {
    rows.windows(2).all(|w| w[1].error_dg < w[0].error_dg)
}

fn run_level(spec: &StudySpec, level: &StudyLevel) -> Result<StudyRow> {
    if level.coarse_n == 0 || !spec.global_fine.is_multiple_of(level.coarse_n) {
        return Err(Error::Analysis(format!(
            "coarse_n {} does not divide the global fine resolution {}",
            level.coarse_n, spec.global_fine
        )));
    }
    let mesh = MeshHierarchy::build(
        spec.lx,
        spec.ly,
        level.coarse_n,
        spec.global_fine / level.coarse_n,
    )?;
    let ops = FineOperators::build(&mesh, spec.media, spec.dg)?;
    let aux = AuxSpace::build(&mesh, spec.media, ModeCount::Fixed(level.num_modes))?;
    let cem = CemSpace::build(&mesh, &ops, aux, CemParams::with_layers(level.num_layers))?;

    check_stability(&ops.a_dg, Some(&ops.mass_rho), spec.tau, spec.safety)?.ensure()?;
    check_stability(cem.a_c(), None, spec.tau, spec.safety)?.ensure()?;

    let steps = (spec.t_final / spec.tau).round().max(1.0) as usize;
    let fine = FineWave::new(&mesh, spec.media, &ops, spec.tau, MassTreatment::Consistent)?;
    let coarse = CoarseWave::new(&cem, spec.tau);

    let spatial = spec.source.spatial_load(&mesh);
    let coarse_spatial = cem.coarse_load(&mesh, &spatial);
    let n = mesh.num_fine_dofs();
    let zeros = vec![0.0; n];
    let w0 = spec.source.time_factor(0.0);
    let load0: Vec<f64> = spatial.iter().map(|v| v * w0).collect();

    let mut fine_state = fine.initial_state(&zeros, &zeros, &load0)?;
    let mut coarse_state = coarse.initial_state(&mesh, &ops, &zeros, &zeros, &load0)?;

    let mut load = vec![0.0; n];
    let mut coarse_load = vec![0.0; cem.num_bases()];
    while fine_state.step < steps {
        let w = spec.source.time_factor(fine_state.time());
        for (l, s) in load.iter_mut().zip(&spatial) {
            *l = w * s;
        }
        for (l, s) in coarse_load.iter_mut().zip(&coarse_spatial) {
            *l = w * s;
        }
        fine.step(&mut fine_state, &load)?;
        coarse.step(&mut coarse_state, &coarse_load)?;
    }

    let reconstructed = cem.reconstruct_fine(&mesh, &coarse_state.u_curr);
    let report = relative_errors(&mesh, &ops, &reconstructed, &fine_state.u_curr)?;
    Ok(StudyRow {
        nol: level.num_layers,
        l: 1.0 / level.coarse_n as f64,
        nbf: level.num_modes,
        coarse_dim: cem.num_bases(),
        fine_dim: n,
        error_l2: report.l2,
        error_dg: report.dg,
        error_h1_broken: report.h1_broken,
    })
}

/// Final state pair of a single (non-study) simulation, exposed for the
/// command-line runner.
pub struct RunOutput {
    /// Fine-grid displacement at the final time (reconstructed for
    /// multiscale runs).
    pub u_fine: Vec<f64>,
    /// Coarse coefficients at the final time (multiscale runs only).
    pub coarse_coefficients: Option<Vec<f64>>,
    /// Discrete energy at the final state pair.
    pub energy: f64,
    /// Steps taken.
    pub steps: usize,
}

/// Drives a source-driven fine simulation to `t_final` and returns the
/// terminal state.
pub fn run_fine(
    mesh: &MeshHierarchy,
    media: &MediaField,
    ops: &FineOperators,
    source: &SourceSpec,
    tau: f64,
    t_final: f64,
    safety: f64,
) -> Result<RunOutput> {
    source.validate()?;
    check_stability(&ops.a_dg, Some(&ops.mass_rho), tau, safety)?.ensure()?;
    let steps = (t_final / tau).round().max(1.0) as usize;
    let fine = FineWave::new(mesh, media, ops, tau, MassTreatment::Consistent)?;

    let spatial = source.spatial_load(mesh);
    let n = mesh.num_fine_dofs();
    let zeros = vec![0.0; n];
    let w0 = source.time_factor(0.0);
    let load0: Vec<f64> = spatial.iter().map(|v| v * w0).collect();
    let mut state = fine.initial_state(&zeros, &zeros, &load0)?;
    let mut load = vec![0.0; n];
    while state.step < steps {
        let w = source.time_factor(state.time());
        for (l, s) in load.iter_mut().zip(&spatial) {
            *l = w * s;
        }
        fine.step(&mut state, &load)?;
    }
    let energy = fine.energy(&state);
    Ok(RunOutput {
        u_fine: std::mem::take(&mut state.u_curr),
        coarse_coefficients: None,
        energy,
        steps: state.step,
    })
}

/// Drives a source-driven multiscale simulation to `t_final` and returns
/// the terminal state reconstructed on the fine grid.
pub fn run_multiscale(
    mesh: &MeshHierarchy,
    ops: &FineOperators,
    cem: &CemSpace,
    source: &SourceSpec,
    tau: f64,
    t_final: f64,
    safety: f64,
) -> Result<RunOutput> {
    source.validate()?;
    check_stability(cem.a_c(), None, tau, safety)?.ensure()?;
    let steps = (t_final / tau).round().max(1.0) as usize;
    let coarse = CoarseWave::new(cem, tau);

    let spatial = source.spatial_load(mesh);
    let coarse_spatial = cem.coarse_load(mesh, &spatial);
    let n = mesh.num_fine_dofs();
    let zeros = vec![0.0; n];
    let w0 = source.time_factor(0.0);
    let load0: Vec<f64> = spatial.iter().map(|v| v * w0).collect();
    let mut state = coarse.initial_state(mesh, ops, &zeros, &zeros, &load0)?;
    let mut load = vec![0.0; cem.num_bases()];
    while state.step < steps {
        let w = source.time_factor(state.time());
        for (l, s) in load.iter_mut().zip(&coarse_spatial) {
            *l = w * s;
        }
        coarse.step(&mut state, &load)?;
    }
    let energy = coarse.energy(&state);
    Ok(RunOutput {
        u_fine: cem.reconstruct_fine(mesh, &state.u_curr),
        coarse_coefficients: Some(std::mem::take(&mut state.u_curr)),
        energy,
        steps: state.step,
    })
}
