//! Run configuration, read from a TOML document.
//!
//! Physics parameters (`code`, `noise`) have no defaults. Numerics, scan
//! ranges and output settings do.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gkp_core::{
    default_frame, hadamard_frame, Axis, GridParams, LogicalFrame, NoiseParams, SequenceRecipe,
    StateLabel, Step, Timings,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameChoice {
    #[default]
    Default,
    Hadamard,
}

/// A named table entry or an explicit step list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecipeEntry {
    Label(StateLabel),
    Custom(SequenceRecipe),
}

impl RecipeEntry {
    pub fn recipe(&self, params: &GridParams) -> SequenceRecipe {
        match self {
            RecipeEntry::Label(l) => l.recipe(params),
            RecipeEntry::Custom(r) => r.clone(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            RecipeEntry::Label(l) => l.name().to_string(),
            RecipeEntry::Custom(r) => r.name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub axes: Vec<Axis>,
    /// Range in units of the axis amplitude `l_j`.
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            axes: Axis::ALL.to_vec(),
            t_min: -1.5,
            t_max: 1.5,
            points: 121,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub fock_dim: usize,
    pub max_squeeze: f64,
    pub steps_per_segment: usize,
    pub convergence_tolerance: Option<f64>,
    pub track_positivity: bool,
    pub padding: usize,
    pub resamples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            fock_dim: 256,
            max_squeeze: 2.0,
            steps_per_segment: 512,
            convergence_tolerance: Some(1e-6),
            track_positivity: false,
            padding: 8,
            resamples: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(invalid(
                "output.format",
                format!("unknown format {other:?} (expected csv or json)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: Format::Csv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relabel {
    Hadamard,
}

/// A process under test: a step list applied after preparation, or a pure
/// readout relabeling. An empty step list is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub name: String,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel: Option<Relabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySpec {
    pub processes: Vec<ProcessSpec>,
    pub starts: usize,
    pub max_iterations: usize,
}

impl Default for TomographySpec {
    fn default() -> Self {
        Self {
            processes: Vec::new(),
            starts: 8,
            max_iterations: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginalSpec {
    /// Range in units of `|l_z|` (for `P(q)`) and `|l_x|` (for `P(p)`).
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for MarginalSpec {
    fn default() -> Self {
        Self {
            t_min: -4.5,
            t_max: 4.5,
            points: 361,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub q_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

impl Default for WignerSpec {
    fn default() -> Self {
        Self {
            q_min: -3.5,
            q_max: 3.5,
            q_points: 71,
            p_min: -3.5,
            p_max: 3.5,
            p_points: 71,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub code: GridParams,
    #[serde(default)]
    pub frame: FrameChoice,
    pub recipes: Vec<RecipeEntry>,
    /// Shots per readout setting; 0 means exact expectation values.
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    #[serde(default)]
    pub timings: Timings,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tomography: TomographySpec,
    #[serde(default)]
    pub marginals: MarginalSpec,
    #[serde(default)]
    pub wigner: WignerSpec,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.code.validate().map_err(|e| invalid("code", e))?;
        if self.recipes.is_empty() {
            return Err(invalid("recipes", "at least one recipe is required"));
        }
        for (i, r) in self.recipes.iter().enumerate() {
            r.recipe(&self.code)
                .validate()
                .map_err(|e| invalid(format!("recipes[{i}]"), e))?;
        }
        if let Some(noise) = &self.noise {
            noise.validate().map_err(|e| invalid("noise.gamma", e))?;
        }
        self.timings.validate().map_err(|e| invalid("timings", e))?;
        if self.scan.axes.is_empty() {
            return Err(invalid("scan.axes", "at least one axis is required"));
        }
        let (s, m, w) = (&self.scan, &self.marginals, &self.wigner);
        check_range("scan.t_min", "scan.points", s.t_min, s.t_max, s.points)?;
        check_range(
            "marginals.t_min",
            "marginals.points",
            m.t_min,
            m.t_max,
            m.points,
        )?;
        check_range(
            "wigner.q_min",
            "wigner.q_points",
            w.q_min,
            w.q_max,
            w.q_points,
        )?;
        check_range(
            "wigner.p_min",
            "wigner.p_points",
            w.p_min,
            w.p_max,
            w.p_points,
        )?;
        let n = &self.numerics;
        if self.code.r > n.max_squeeze {
            return Err(invalid(
                "code.r",
                format!(
                    "r = {} exceeds numerics.max_squeeze = {}",
                    self.code.r, n.max_squeeze
                ),
            ));
        }
        if n.fock_dim < 8 {
            return Err(invalid("numerics.fock_dim", "must be at least 8"));
        }
        if n.steps_per_segment == 0 {
            return Err(invalid("numerics.steps_per_segment", "must be positive"));
        }
        if n.padding == 0 {
            return Err(invalid("numerics.padding", "must be positive"));
        }
        if n.resamples < 100 {
            return Err(invalid("numerics.resamples", "must be at least 100"));
        }
        if !(n.max_squeeze.is_finite() && n.max_squeeze > 0.0) {
            return Err(invalid("numerics.max_squeeze", "must be positive"));
        }
        if self.tomography.starts == 0 {
            return Err(invalid("tomography.starts", "must be positive"));
        }
        for (i, p) in self.tomography.processes.iter().enumerate() {
            if p.relabel.is_some() && !p.steps.is_empty() {
                return Err(invalid(
                    format!("tomography.processes[{i}]"),
                    "a relabeling process cannot also have steps",
                ));
            }
            if p.steps.iter().any(|s| matches!(s, Step::SqueezePrep)) {
                return Err(invalid(
                    format!("tomography.processes[{i}].steps"),
                    "squeeze_prep is not allowed inside a process",
                ));
            }
        }
        Ok(())
    }

    pub fn frame(&self) -> LogicalFrame {
        let f = default_frame(&self.code);
        match self.frame {
            FrameChoice::Default => f,
            FrameChoice::Hadamard => hadamard_frame(&f),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the effective config. The
    /// output location is left out so reruns elsewhere hash the same.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn check_range(
    range_field: &str,
    points_field: &str,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(invalid(
            range_field,
            format!("[{lo}, {hi}] is not a finite increasing range"),
        ));
    }
    if points < 2 {
        return Err(invalid(points_field, "need at least two points"));
    }
    Ok(())
}
