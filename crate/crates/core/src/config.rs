//! JSON run configuration.
//!
//! Units live in key names (`t_end_ns`, `R1_ohm`). Unknown keys are rejected
//! and every error carries the key path or the line/column it refers to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{GateSpec, Library, LibraryEntry, Polarity};
use crate::integrator::RunSettings;
use crate::model::Filament;
use crate::params::{CellParams, Derivation, DerivationInputs, ParamsError};
use crate::stimuli::{apply_stimuli, StimulusError, StimulusSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    #[serde(rename = "R1_ohm")]
    pub r1_ohm: f64,
    #[serde(rename = "R2_ohm")]
    pub r2_ohm: f64,
    #[serde(rename = "L_henry")]
    pub l_henry: f64,
    #[serde(rename = "C0_farad")]
    pub c0_farad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpedGroup {
    /// Inclusive 1-based monomer range.
    pub cells: [usize; 2],
}

fn default_b() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilamentSpec {
    pub n_cells: usize,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ExplicitParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derive: Option<DerivationInputs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lumped_groups: Vec<LumpedGroup>,
}

impl FilamentSpec {
    pub fn with_params(n_cells: usize, p: &CellParams) -> Self {
        Self {
            n_cells,
            b: p.b,
            params: Some(ExplicitParams {
                r1_ohm: p.r1,
                r2_ohm: p.r2,
                l_henry: p.l,
                c0_farad: p.c0,
            }),
            derive: None,
            lumped_groups: Vec::new(),
        }
    }

    /// Per-monomer parameters, before lumping.
    pub fn cell_params(&self) -> Result<CellParams, ConfigError> {
        let params_err = |path: &str, e: ParamsError| ConfigError::at(path, e);
        match (&self.params, &self.derive) {
            (Some(_), Some(_)) => Err(ConfigError::at(
                "filament",
                "give either `params` or `derive`, not both",
            )),
            (None, None) => Err(ConfigError::at(
                "filament",
                "one of `params` or `derive` is required",
            )),
            (Some(p), None) => CellParams::new(p.r1_ohm, p.r2_ohm, p.l_henry, p.c0_farad, self.b)
                .map_err(|e| params_err("filament.params", e)),
            (None, Some(d)) => Derivation::compute(d)
                .and_then(|der| der.cell_params(self.b))
                .map_err(|e| params_err("filament.derive", e)),
        }
    }

    pub fn build(&self) -> Result<Filament, ConfigError> {
        if self.n_cells < 2 {
            return Err(ConfigError::at(
                "filament.n_cells",
                format!("need at least 2 cells, got {}", self.n_cells),
            ));
        }
        let base = self.cell_params()?;
        let groups: Vec<(usize, usize)> = self
            .lumped_groups
            .iter()
            .map(|g| (g.cells[0], g.cells[1]))
            .collect();
        Filament::with_lumped_groups(self.n_cells, base, &groups)
            .map_err(|e| ConfigError::at("filament.lumped_groups", e))
    }
}

/// Check a stimulus list against a filament; `path` prefixes error locations.
pub fn validate_stimuli(
    filament: &Filament,
    stimuli: &[StimulusSpec],
    path: &str,
) -> Result<(), ConfigError> {
    for (i, s) in stimuli.iter().enumerate() {
        let here = format!("{path}[{i}]");
        if s.cells.is_empty() {
            return Err(ConfigError::at(format!("{here}.cells"), "empty cell list"));
        }
        if let Some(&c) = s
            .cells
            .iter()
            .find(|&&c| c < 1 || c > filament.n_monomers())
        {
            return Err(ConfigError::at(
                format!("{here}.cells"),
                format!("cell {c} outside 1..={}", filament.n_monomers()),
            ));
        }
        s.waveform()
            .validate()
            .map_err(|e| ConfigError::at(format!("{here}.waveform"), e))?;
        apply_stimuli(filament, std::slice::from_ref(s))
            .map_err(|e| ConfigError::at(here.clone(), e))?;
    }
    match apply_stimuli(filament, stimuli) {
        Ok(_) => Ok(()),
        Err(e @ StimulusError::Overlap { .. }) => Err(ConfigError::at(path, e)),
        Err(e) => Err(ConfigError::at(path, e)),
    }
}

fn default_readout_theta() -> f64 {
    0.1
}

fn default_arrival_theta() -> f64 {
    0.01
}

fn default_window() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    #[serde(default)]
    pub cells: Vec<usize>,
    /// Raster and output-level threshold, as a fraction of `v0`.
    #[serde(default = "default_readout_theta")]
    pub threshold_fraction: f64,
    /// Threshold used for arrival times and the speed estimate.
    #[serde(default = "default_arrival_theta")]
    pub arrival_threshold_fraction: f64,
    #[serde(default = "default_window")]
    pub window_ns: f64,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default = "one")]
    pub v0: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            cells: Vec::new(),
            threshold_fraction: default_readout_theta(),
            arrival_threshold_fraction: default_arrival_theta(),
            window_ns: default_window(),
            polarity: Polarity::Signed,
            v0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    /// Library entry name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Inline gate definition, used instead of `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<GateSpec>,
    /// Input bits; absent means the full truth table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
}

impl GateConfig {
    /// Resolve to a library entry, applying the threshold override.
    pub fn resolve(&self, library: &Library) -> Result<LibraryEntry, ConfigError> {
        let mut entry = match (&self.name, &self.spec) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at(
                    "gate",
                    "give either `name` or `spec`, not both",
                ))
            }
            (None, None) => return Err(ConfigError::at("gate", "`name` or `spec` is required")),
            (Some(name), None) => library
                .get(name)
                .cloned()
                .ok_or_else(|| ConfigError::at("gate.name", format!("unknown gate {name:?}")))?,
            (None, Some(spec)) => LibraryEntry::Gate(spec.clone()),
        };
        if let Some(theta) = self.threshold_fraction {
            match &mut entry {
                LibraryEntry::Gate(g) => g.set_threshold(theta),
                LibraryEntry::Cascade(_) => {
                    return Err(ConfigError::at(
                        "gate.threshold_fraction",
                        "cannot override the threshold of a cascade",
                    ))
                }
            }
        }
        entry
            .validate(library)
            .map_err(|e| ConfigError::at("gate", e))?;
        if let Some(bits) = &self.inputs {
            if bits.len() != entry.n_inputs() {
                return Err(ConfigError::at(
                    "gate.inputs",
                    format!("expected {} bits, got {}", entry.n_inputs(), bits.len()),
                ));
            }
            if bits.iter().any(|&b| b > 1) {
                return Err(ConfigError::at("gate.inputs", "bits must be 0 or 1"));
            }
        }
        Ok(entry)
    }

    pub fn input_bits(&self) -> Option<Vec<bool>> {
        self.inputs
            .as_ref()
            .map(|b| b.iter().map(|&x| x == 1).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filament: Option<FilamentSpec>,
    #[serde(default)]
    pub stimuli: Vec<StimulusSpec>,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateConfig>,
    #[serde(default)]
    pub readout: ReadoutConfig,
}

impl RunConfig {
    /// Semantic checks that need more than the schema.
    pub fn validate(&self, library: &Library) -> Result<(), ConfigError> {
        if let Some(gate) = &self.gate {
            gate.resolve(library)?;
            if self.filament.is_some() || !self.stimuli.is_empty() {
                return Err(ConfigError::at(
                    "gate",
                    "a gate config takes its filament and stimuli from the gate; remove `filament` and `stimuli`",
                ));
            }
            return Ok(());
        }
        let spec = self
            .filament
            .as_ref()
            .ok_or_else(|| ConfigError::at("filament", "required unless `gate` is given"))?;
        let filament = spec.build()?;
        validate_stimuli(&filament, &self.stimuli, "stimuli")?;
        self.run.validate().map_err(|e| ConfigError::at("run", e))?;
        let r = &self.readout;
        for (key, theta) in [
            ("readout.threshold_fraction", r.threshold_fraction),
            (
                "readout.arrival_threshold_fraction",
                r.arrival_threshold_fraction,
            ),
        ] {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(ConfigError::at(
                    key,
                    format!("must lie in (0, 1), got {theta}"),
                ));
            }
        }
        if !(r.window_ns > 0.0 && r.window_ns <= self.run.t_end_ns) {
            return Err(ConfigError::at(
                "readout.window_ns",
                format!("must lie in (0, t_end_ns], got {}", r.window_ns),
            ));
        }
        if !(r.v0 > 0.0 && r.v0.is_finite()) {
            return Err(ConfigError::at("readout.v0", "must be > 0"));
        }
        if let Some(&c) = r.cells.iter().find(|&&c| c < 1 || c > spec.n_cells) {
            return Err(ConfigError::at(
                "readout.cells",
                format!("cell {c} outside 1..={}", spec.n_cells),
            ));
        }
        Ok(())
    }
}

/// Strict parse followed by semantic validation.
pub fn parse_config(bytes: &[u8], library: &Library) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = parse_json(bytes)?;
    config.validate(library)?;
    Ok(config)
}

/// Deserialize with key paths on data errors and line/column on syntax errors.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            ConfigError::Invalid {
                path,
                message: strip_position(&inner.to_string()),
            }
        } else {
            ConfigError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner.to_string()),
            }
        }
    })?;
    de.end().map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    Ok(value)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
