//! Run configuration: TOML with sections, strict key checking, dotted-path
//! overrides, and full-precision round-tripping for manifests.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cemwave::assembly::{DgParams, PenaltyScale};
use cemwave::media::{Layer, MediaField, Voigt};
use cemwave::mesh::MeshHierarchy;
use cemwave::wave::SourceSpec;

/// Which pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fine-grid reference simulation only.
    Fine,
    /// Multiscale simulation (plus reconstruction).
    Multiscale,
    /// Convergence study over several coarse levels.
    Study,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Fine => "fine",
            Mode::Multiscale => "multiscale",
            Mode::Study => "study",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(Mode::Fine),
            "multiscale" => Ok(Mode::Multiscale),
            "study" => Ok(Mode::Study),
            other => bail!("unknown mode {other:?} (expected fine, multiscale or study)"),
        }
    }
}

impl clap::ValueEnum for Mode {
    fn value_variants<'a>() -> &'a [Self] {
        &[Mode::Fine, Mode::Multiscale, Mode::Study]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Mode::Fine => "fine",
            Mode::Multiscale => "multiscale",
            Mode::Study => "study",
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub lx: f64,
    pub ly: f64,
    pub coarse_n: usize,
    pub fine_per_coarse: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            lx: 1.0,
            ly: 1.0,
            coarse_n: 8,
            fine_per_coarse: 4,
        }
    }
}

/// One material layer as written in a config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub y_min: f64,
    pub y_max: f64,
    pub c11: f64,
    pub c13: f64,
    pub c33: f64,
    pub c55: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MediaSection {
    /// `model1`, `model2`, `layered`, or `raster`.
    pub model: String,
    /// Binary raster path (`model = "raster"`); relative paths resolve
    /// against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raster_path: Option<PathBuf>,
    /// Layer list (`model = "layered"`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    /// Constant mass density.
    pub rho: f64,
}

impl Default for MediaSection {
    fn default() -> Self {
        MediaSection {
            model: "model1".into(),
            raster_path: None,
            layers: None,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DgSection {
    pub gamma: f64,
    /// `fine` (penalty scaled by the fine edge segment) or `coarse`.
    pub penalty_scale: String,
}

impl Default for DgSection {
    fn default() -> Self {
        DgSection {
            gamma: 2.0,
            penalty_scale: "fine".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MultiscaleSection {
    /// Auxiliary modes per block (Nbf).
    pub num_modes: usize,
    /// Oversampling layers (Nol); 0 selects `ceil(2 ln coarse_n)`.
    pub num_layers: usize,
}

impl Default for MultiscaleSection {
    fn default() -> Self {
        MultiscaleSection {
            num_modes: 6,
            num_layers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub tau: f64,
    pub t_final: f64,
    /// CFL safety factor in (0, 1].
    pub safety: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            tau: 1e-4,
            t_final: 0.4,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub f0: f64,
    pub center: [f64; 2],
    pub spatial_decay: f64,
    pub amplitude: f64,
    pub components: [f64; 2],
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            f0: 10.0,
            center: [0.5, 0.5],
            spatial_decay: 100.0,
            amplitude: 1.0,
            components: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; relative paths resolve against the working
    /// directory, or against `CEMWAVE_OUTPUT_ROOT` when that is set.
    pub directory: PathBuf,
    /// Write a VTK snapshot every `snapshot_stride` steps (0 = final
    /// snapshot only).
    pub snapshot_stride: usize,
    pub write_snapshots: bool,
    /// Dump every multiscale basis function as sparse triplets.
    pub export_basis: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            snapshot_stride: 0,
            write_snapshots: true,
            export_basis: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { mode: Mode::Fine }
    }
}

/// One study level as written in a config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudyLevelSpec {
    pub coarse_n: usize,
    pub num_layers: usize,
    pub num_modes: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    /// Global fine cells per side shared by all levels; 0 selects
    /// `coarse_n * fine_per_coarse` from `[domain]`.
    pub global_fine: usize,
    pub levels: Vec<StudyLevelSpec>,
}

/// Provenance block written into manifests; ignored (but accepted) when a
/// manifest is replayed as a config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestSection {
    #[serde(skip_serializing_if = "String::is_empty")]
    pub tool_version: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub mode_executed: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine_dofs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// FNV-1a checksum of the raster input, when one was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raster_checksum: Option<String>,
    /// Discrete energy of the final state pair (single runs).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_energy: Option<f64>,
}

/// The complete run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub domain: DomainSection,
    pub media: MediaSection,
    pub dg: DgSection,
    pub multiscale: MultiscaleSection,
    pub time: TimeSection,
    pub source: SourceSection,
    pub output: OutputSection,
    pub run: RunSection,
    pub study: StudySection,
    pub manifest: ManifestSection,
}

impl Config {
    /// Parses a TOML string, applying `key=value` overrides (dotted paths,
    /// e.g. `time.tau=2e-4`) on the raw document before the strict typed
    /// deserialization.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Config> {
        let mut value: toml::Value = text.parse().context("config is not valid TOML")?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let config: Config = value.try_into().map_err(|e| {
            anyhow::anyhow!("invalid configuration: {e}")
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative media paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::from_toml(&text, overrides)?;
        if let Some(raster) = &config.media.raster_path {
            if raster.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                config.media.raster_path = Some(base.join(raster));
            }
        }
        Ok(config)
    }

    /// Serializes the fully resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level sanity checks with the offending field in the message.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.lx > 0.0) || !(d.ly > 0.0) {
            bail!("domain.lx and domain.ly must be positive");
        }
        if d.coarse_n == 0 {
            bail!("domain.coarse_n must be at least 1");
        }
        if d.fine_per_coarse == 0 {
            bail!("domain.fine_per_coarse must be at least 1");
        }
        match self.media.model.as_str() {
            "model1" | "model2" => {}
            "raster" => {
                if self.media.raster_path.is_none() {
                    bail!("media.raster_path is required when media.model = \"raster\"");
                }
            }
            "layered" => {
                if self.media.layers.as_ref().is_none_or(Vec::is_empty) {
                    bail!("media.layers must list at least one layer when media.model = \"layered\"");
                }
            }
            other => bail!(
                "media.model {other:?} is not recognized (expected model1, model2, layered or raster)"
            ),
        }
        if !(self.media.rho > 0.0) {
            bail!("media.rho must be positive");
        }
        if !(self.dg.gamma > 0.0) {
            bail!("dg.gamma must be positive");
        }
        if self.dg.penalty_scale != "fine" && self.dg.penalty_scale != "coarse" {
            bail!(
                "dg.penalty_scale {:?} is not recognized (expected fine or coarse)",
                self.dg.penalty_scale
            );
        }
        if self.multiscale.num_modes == 0 {
            bail!("multiscale.num_modes must be at least 1");
        }
        if !(self.time.tau > 0.0) {
            bail!("time.tau must be positive");
        }
        if !(self.time.t_final > 0.0) {
            bail!("time.t_final must be positive");
        }
        if !(self.time.safety > 0.0 && self.time.safety <= 1.0) {
            bail!("time.safety must lie in (0, 1]");
        }
        if !(self.source.f0 > 0.0) {
            bail!("source.f0 must be positive");
        }
        if !(self.source.spatial_decay > 0.0) {
            bail!("source.spatial_decay must be positive");
        }
        if self.run.mode == Mode::Study && self.study.levels.is_empty() {
            bail!("study.levels must list at least one level when run.mode = \"study\"");
        }
        Ok(())
    }

    /// Oversampling layers, with the `ceil(2 ln coarse_n)` default when
    /// the config leaves it at 0.
    pub fn effective_num_layers(&self) -> usize {
        if self.multiscale.num_layers > 0 {
            self.multiscale.num_layers
        } else {
            default_layers(self.domain.coarse_n)
        }
    }

    /// Global fine resolution of a study (cells per side).
    pub fn effective_global_fine(&self) -> usize {
        if self.study.global_fine > 0 {
            self.study.global_fine
        } else {
            self.domain.coarse_n * self.domain.fine_per_coarse
        }
    }

    /// The DG parameters of this run.
    pub fn dg_params(&self) -> DgParams {
        DgParams {
            gamma: self.dg.gamma,
            penalty_scale: if self.dg.penalty_scale == "coarse" {
                PenaltyScale::CoarseCell
            } else {
                PenaltyScale::FineCell
            },
        }
    }

    /// The source of this run.
    pub fn source_spec(&self) -> SourceSpec {
        SourceSpec {
            f0: self.source.f0,
            center: self.source.center,
            spatial_decay: self.source.spatial_decay,
            amplitude: self.source.amplitude,
            components: self.source.components,
        }
    }

    /// Builds the medium at the resolution of `mesh`.
    pub fn build_media(&self, mesh: &MeshHierarchy) -> Result<MediaField> {
        let rho = self.media.rho;
        let media = match self.media.model.as_str() {
            "model1" => MediaField::builtin_model1(mesh, rho)?,
            "model2" => MediaField::builtin_model2(mesh, rho)?,
            "layered" => {
                let specs = self.media.layers.as_ref().expect("validated");
                let layers: Vec<Layer> = specs
                    .iter()
                    .map(|l| Layer {
                        y_min: l.y_min,
                        y_max: l.y_max,
                        stiffness: Voigt::new(l.c11, l.c13, l.c33, l.c55),
                    })
                    .collect();
                MediaField::layered(mesh, &layers, rho)?
            }
            "raster" => {
                let path = self.media.raster_path.as_ref().expect("validated");
                MediaField::ingest_raster(path, mesh, rho)?
            }
            _ => unreachable!("validated"),
        };
        Ok(media)
    }
}

/// Default oversampling layer count, `ceil(2 ln coarse_n)`, at least 1.
pub fn default_layers(coarse_n: usize) -> usize {
    ((2.0 * (coarse_n.max(2) as f64).ln()).ceil() as usize).max(1)
}

/// Applies one `dotted.path=value` override onto a raw TOML document.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .with_context(|| format!("override {spec:?} is not of the form key=value"))?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("override path {path:?} has empty segments");
    }
    // Parse the value through a one-line TOML document so numbers, bools,
    // arrays and strings all behave like they would in the file itself.
    let parsed: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };

    let mut node = root;
    for seg in &segments[..segments.len() - 1] {
        let table = node
            .as_table_mut()
            .with_context(|| format!("override path {path:?} crosses a non-table value"))?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .with_context(|| format!("override path {path:?} crosses a non-table value"))?;
    table.insert(segments[segments.len() - 1].to_string(), parsed);
    Ok(())
}
