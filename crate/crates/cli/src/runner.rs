//! Run orchestration: builds the discrete systems described by a
//! [`Config`], drives the simulation or study, and writes snapshots,
//! tables and a replayable manifest into the output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use cemwave::analysis::{convergence_study, StudyLevel, StudySpec};
use cemwave::assembly::FineOperators;
use cemwave::cem::{CemParams, CemSpace};
use cemwave::mesh::MeshHierarchy;
use cemwave::spectral::{AuxSpace, ModeCount};
use cemwave::wave::{check_stability, CoarseWave, FineWave, MassTreatment, WaveState};

use crate::config::{default_layers, Config, Mode};
use crate::{table, vtk};

/// Environment variable that, when set, prefixes relative output
/// directories. Lets test harnesses redirect output without editing
/// configs.
pub const OUTPUT_ROOT_ENV: &str = "CEMWAVE_OUTPUT_ROOT";

/// What a completed run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub mode: Mode,
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`.
    pub files: Vec<String>,
    pub fine_dofs: usize,
    pub coarse_dim: Option<usize>,
    pub steps: usize,
    pub final_energy: Option<f64>,
}

/// Executes the run described by `config` and writes all outputs.
pub fn run(config: &Config) -> Result<RunSummary> {
    let out_dir = resolve_output_dir(&config.output.directory);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    match config.run.mode {
        Mode::Fine => run_single(config, &out_dir, false),
        Mode::Multiscale => run_single(config, &out_dir, true),
        Mode::Study => run_study(config, &out_dir),
    }
}

/// Applies the `CEMWAVE_OUTPUT_ROOT` prefix to relative output paths.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    if dir.is_relative() {
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            if !root.is_empty() {
                return PathBuf::from(root).join(dir);
            }
        }
    }
    dir.to_path_buf()
}

fn run_single(config: &Config, out_dir: &Path, multiscale: bool) -> Result<RunSummary> {
    let d = &config.domain;
    let mesh = MeshHierarchy::build(d.lx, d.ly, d.coarse_n, d.fine_per_coarse)?;
    let media = config.build_media(&mesh)?;
    let ops = FineOperators::build(&mesh, &media, config.dg_params())?;
    let source = config.source_spec();
    source.validate()?;
    let tau = config.time.tau;
    let steps = (config.time.t_final / tau).round().max(1.0) as usize;

    let cem = if multiscale {
        let aux = AuxSpace::build(&mesh, &media, ModeCount::Fixed(config.multiscale.num_modes))?;
        Some(CemSpace::build(
            &mesh,
            &ops,
            aux,
            CemParams::with_layers(config.effective_num_layers()),
        )?)
    } else {
        None
    };

    check_stability(&ops.a_dg, Some(&ops.mass_rho), tau, config.time.safety)?.ensure()?;
    if let Some(cem) = &cem {
        check_stability(cem.a_c(), None, tau, config.time.safety)?.ensure()?;
    }

    let spatial = source.spatial_load(&mesh);
    let zeros = vec![0.0; mesh.num_fine_dofs()];
    let w0 = source.time_factor(0.0);
    let load0: Vec<f64> = spatial.iter().map(|v| v * w0).collect();

    let mut files = Vec::new();
    let label = if multiscale { "multiscale" } else { "fine" };
    let stride = config.output.snapshot_stride;

    let snapshot = |state: &WaveState,
                        cem: Option<&CemSpace>,
                        name: String,
                        files: &mut Vec<String>|
     -> Result<()> {
        if !config.output.write_snapshots {
            return Ok(());
        }
        let u_full;
        let u = match cem {
            Some(cem) => {
                u_full = cem.reconstruct_fine(&mesh, &state.u_curr);
                &u_full
            }
            None => &state.u_curr,
        };
        let title = format!("{label} displacement, step {}", state.step);
        vtk::write_displacement(&out_dir.join(&name), &mesh, u, &title)?;
        files.push(name);
        Ok(())
    };

    let (steps_taken, final_energy) = match &cem {
        None => {
            let fine = FineWave::new(&mesh, &media, &ops, tau, MassTreatment::Consistent)?;
            let mut state = fine.initial_state(&zeros, &zeros, &load0)?;
            let mut load = vec![0.0; spatial.len()];
            while state.step < steps {
                let w = source.time_factor(state.time());
                for (l, s) in load.iter_mut().zip(&spatial) {
                    *l = w * s;
                }
                fine.step(&mut state, &load)?;
                if stride > 0 && state.step % stride == 0 && state.step < steps {
                    snapshot(&state, None, format!("{label}_step_{:06}.vtk", state.step), &mut files)?;
                }
            }
            snapshot(&state, None, format!("{label}_final.vtk"), &mut files)?;
            (state.step, fine.energy(&state))
        }
        Some(cem) => {
            let coarse = CoarseWave::new(cem, tau);
            let coarse_spatial = cem.coarse_load(&mesh, &spatial);
            let mut state = coarse.initial_state(&mesh, &ops, &zeros, &zeros, &load0)?;
            let mut load = vec![0.0; coarse_spatial.len()];
            while state.step < steps {
                let w = source.time_factor(state.time());
                for (l, s) in load.iter_mut().zip(&coarse_spatial) {
                    *l = w * s;
                }
                coarse.step(&mut state, &load)?;
                if stride > 0 && state.step % stride == 0 && state.step < steps {
                    snapshot(&state, Some(cem), format!("{label}_step_{:06}.vtk", state.step), &mut files)?;
                }
            }
            snapshot(&state, Some(cem), format!("{label}_final.vtk"), &mut files)?;
            (state.step, coarse.energy(&state))
        }
    };

    if config.output.export_basis {
        if let Some(cem) = &cem {
            let name = "basis.csv".to_string();
            std::fs::write(out_dir.join(&name), basis_csv(cem))?;
            files.push(name);
        }
    }

    let summary = RunSummary {
        mode: config.run.mode,
        output_dir: out_dir.to_path_buf(),
        files,
        fine_dofs: mesh.num_fine_dofs(),
        coarse_dim: cem.as_ref().map(|c| c.num_bases()),
        steps: steps_taken,
        final_energy: Some(final_energy),
    };
    write_manifest(config, &summary, out_dir)?;
    Ok(summary)
}

fn run_study(config: &Config, out_dir: &Path) -> Result<RunSummary> {
    let d = &config.domain;
    let global_fine = config.effective_global_fine();
    // The medium lives on the shared global fine grid; a trivial hierarchy
    // with one fine cell per block carries the same cell geometry.
    let media_mesh = MeshHierarchy::build(d.lx, d.ly, global_fine, 1)?;
    let media = config.build_media(&media_mesh)?;

    let levels: Vec<StudyLevel> = config
        .study
        .levels
        .iter()
        .map(|l| StudyLevel {
            coarse_n: l.coarse_n,
            num_layers: if l.num_layers > 0 {
                l.num_layers
            } else {
                default_layers(l.coarse_n)
            },
            num_modes: l.num_modes,
        })
        .collect();

    let spec = StudySpec {
        lx: d.lx,
        ly: d.ly,
        global_fine,
        media: &media,
        dg: config.dg_params(),
        source: config.source_spec(),
        tau: config.time.tau,
        t_final: config.time.t_final,
        safety: config.time.safety,
        levels: &levels,
    };
    let rows = convergence_study(&spec)?;

    let mut files = Vec::new();
    std::fs::write(out_dir.join("study.csv"), table::study_csv(&rows))?;
    files.push("study.csv".to_string());
    std::fs::write(out_dir.join("study.txt"), table::study_text(&rows))?;
    files.push("study.txt".to_string());

    let summary = RunSummary {
        mode: Mode::Study,
        output_dir: out_dir.to_path_buf(),
        files,
        fine_dofs: rows.last().map_or(0, |r| r.fine_dim),
        coarse_dim: rows.last().map(|r| r.coarse_dim),
        steps: (config.time.t_final / config.time.tau).round().max(1.0) as usize,
        final_energy: None,
    };
    write_manifest(config, &summary, out_dir)?;
    Ok(summary)
}

/// Sparse triplet dump of every multiscale basis function:
/// `basis,dof,value` with full-precision values.
fn basis_csv(cem: &CemSpace) -> String {
    let mut s = String::from("basis,dof,value\n");
    for b in 0..cem.num_bases() {
        for (dof, val) in cem.basis_triplets(b) {
            s.push_str(&format!("{b},{dof},{val}\n"));
        }
    }
    s
}

/// Writes `manifest.toml`: the fully resolved configuration plus run
/// provenance. The manifest is itself a valid config, so
/// `cemwave run --config manifest.toml` reproduces the run bit for bit.
/// No timestamps or host details are recorded, keeping reruns identical.
fn write_manifest(config: &Config, summary: &RunSummary, out_dir: &Path) -> Result<()> {
    let mut resolved = config.clone();
    resolved.multiscale.num_layers = config.effective_num_layers();
    if config.run.mode == Mode::Study {
        resolved.study.global_fine = config.effective_global_fine();
        for level in &mut resolved.study.levels {
            if level.num_layers == 0 {
                level.num_layers = default_layers(level.coarse_n);
            }
        }
    }
    resolved.manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
    resolved.manifest.mode_executed = summary.mode.to_string();
    resolved.manifest.fine_dofs = Some(summary.fine_dofs);
    resolved.manifest.coarse_dim = summary.coarse_dim;
    resolved.manifest.steps = Some(summary.steps);
    resolved.manifest.final_energy = summary.final_energy;
    resolved.manifest.raster_checksum = match &config.media.raster_path {
        Some(path) if config.media.model == "raster" => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("cannot read raster {}", path.display()))?;
            Some(format!("{:016x}", fnv1a(&bytes)))
        }
        _ => None,
    };
    std::fs::write(out_dir.join("manifest.toml"), resolved.to_toml())
        .context("cannot write manifest.toml")?;
    Ok(())
}

/// FNV-1a 64-bit hash, used to fingerprint raster inputs in manifests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
