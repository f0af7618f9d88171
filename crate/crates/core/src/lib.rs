//! Multiscale simulation of 2D anisotropic elastic waves.
//!
//! The crate provides two coupled solver layers on a structured two-level
//! grid hierarchy over a rectangular domain:
//!
//! * a **fine-scale reference solver**: an interior-penalty discontinuous
//!   Galerkin (IPDG) discretization on bilinear quadrilaterals, continuous
//!   inside each coarse block and discontinuous across coarse-block
//!   interfaces, stepped in time with explicit leapfrog;
//! * a **multiscale coarse solver**: per-block spectral auxiliary spaces
//!   drive constraint-energy-minimizing (CEM) localized basis functions,
//!   and the resulting coarse system has an identity mass matrix by
//!   construction, so coarse time stepping is fully explicit with no
//!   linear solves.
//!
//! Module map:
//!
//! * [`mesh`] — the two-level structured grid, DOF numbering, coarse-edge
//!   trace maps, and oversampling regions;
//! * [`media`] — per-cell anisotropic stiffness tensors (Voigt form),
//!   raster and layered model ingestion, positivity checks;
//! * [`assembly`] — block energy/mass forms and the global IPDG operator,
//!   DG norms, load vectors, boundary elimination;
//! * [`spectral`] — per-block generalized eigenproblems and the auxiliary
//!   projection `pi`;
//! * [`cem`] — localized constraint-energy-minimizing basis functions via
//!   saddle-point solves, coarse operator assembly, reconstruction;
//! * [`wave`] — leapfrog propagators for both layers, initial data,
//!   discrete energy, CFL verification, the Ricker source;
//! * [`analysis`] — relative error norms, elliptic projection, and
//!   convergence studies;
//! * [`sparse`] — the shared CSR operator type and sparse LDL^T / saddle
//!   point factorizations.

pub mod analysis;
pub mod assembly;
pub mod cem;
pub mod error;
pub mod media;
pub mod mesh;
pub mod sparse;
pub mod spectral;
pub mod wave;

pub use analysis::{
    convergence_study, elliptic_project, relative_errors, run_fine, run_multiscale, ErrorReport,
    RunOutput, StudyLevel, StudyRow, StudySpec,
};
pub use assembly::FineOperators;
pub use cem::{CemParams, CemSpace};
pub use error::{Error, Result};
pub use media::MediaField;
pub use mesh::MeshHierarchy;
pub use sparse::SparseOperator;
pub use spectral::AuxSpace;
pub use wave::{
    check_stability, discrete_energy, CoarseWave, FineWave, MassTreatment, SourceSpec,
    StabilityReport, WaveState,
};
