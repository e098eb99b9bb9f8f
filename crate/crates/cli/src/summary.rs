//! summary.json contents.

use serde::Serialize;

use actin_rlc::analysis::{arrival_times, digitize_trace, estimate_speed, Trace};
use actin_rlc::gates::{readout_level, GateOutcome, ReadoutResult, TruthTable};
use actin_rlc::params::DerivationInputs;
use actin_rlc::stimuli::{Mode, Shape};
use actin_rlc::{fingerprint, RunConfig};

pub const TOOL: &str = "actin";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub effective_config: RunConfig,
    pub trace: TraceInfo,
    /// Plain simulations only.
    pub arrivals: Option<Arrivals>,
    pub speed_m_per_s: Option<f64>,
    pub speed_error: Option<String>,
    pub raster: RasterInfo,
    pub readout: Option<ReadoutSummary>,
    pub gate: Option<GateSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceInfo {
    pub n_samples: usize,
    pub n_cells: usize,
    pub t_end_ns: f64,
    pub config_fingerprint: String,
    pub settings_fingerprint: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Arrivals {
    pub threshold_fraction: f64,
    /// Per cell, first sample at or above the threshold; null if never.
    pub times_ns: Vec<Option<f64>>,
    /// Midpoint of the first tanh-step clamp, if any.
    pub ramp_midpoint_ns: Option<f64>,
    /// `times_ns` measured from `ramp_midpoint_ns`.
    pub since_ramp_midpoint_ns: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RasterInfo {
    pub threshold_fraction: f64,
    pub excited_pixels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutSummary {
    pub cells: Vec<usize>,
    pub window_ns: f64,
    pub level: f64,
    pub bit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GateRow {
    pub inputs: String,
    pub outputs: Vec<ReadoutResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GateSummary {
    pub name: String,
    pub rows: Vec<GateRow>,
    pub matches_expected: bool,
    /// Only for full truth tables.
    pub margin: Option<f64>,
}

pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

impl GateSummary {
    pub fn from_outcome(name: &str, outcome: &GateOutcome) -> Self {
        Self {
            name: name.to_string(),
            rows: vec![GateRow {
                inputs: bit_string(&outcome.inputs),
                outputs: outcome.readouts.clone(),
            }],
            matches_expected: outcome.readouts.iter().all(|r| r.bit == r.expected),
            margin: None,
        }
    }

    pub fn from_table(table: &TruthTable) -> Self {
        Self {
            name: table.gate.clone(),
            rows: table
                .rows
                .iter()
                .map(|r| GateRow {
                    inputs: bit_string(&r.inputs),
                    outputs: r.readouts.clone(),
                })
                .collect(),
            matches_expected: table.matches_expected(),
            margin: Some(table.margin()),
        }
    }
}

fn ramp_midpoint(config: &RunConfig) -> Option<f64> {
    config
        .stimuli
        .iter()
        .find_map(|s| match (s.mode, s.waveform) {
            (Mode::Clamp, Shape::TanhStep { t0_ns }) => Some(t0_ns),
            _ => None,
        })
}

/// Observables of one trace under `config`'s readout settings.
pub fn build(config: &RunConfig, trace: &Trace, gate: Option<GateSummary>) -> Summary {
    let r = &config.readout;
    let times = arrival_times(trace, r.arrival_threshold_fraction, r.v0);
    let t0 = ramp_midpoint(config);
    let monomer_length = config
        .filament
        .as_ref()
        .and_then(|f| f.derive.as_ref().map(|d| d.monomer_length_m))
        .unwrap_or(DerivationInputs::default().monomer_length_m);
    let (speed, speed_error) = if gate.is_some() {
        (None, None)
    } else {
        match estimate_speed(trace, r.arrival_threshold_fraction, r.v0, monomer_length) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let readout = (!r.cells.is_empty()).then(|| {
        let level = readout_level(trace, &r.cells, r.window_ns, r.polarity);
        ReadoutSummary {
            cells: r.cells.clone(),
            window_ns: r.window_ns,
            level,
            bit: level >= r.threshold_fraction * r.v0,
        }
    });
    let raster = digitize_trace(trace, r.threshold_fraction, r.v0);
    Summary {
        tool: TOOL,
        tool_version: TOOL_VERSION,
        config_hash: fingerprint(config),
        effective_config: config.clone(),
        trace: TraceInfo {
            n_samples: trace.n_samples(),
            n_cells: trace.n_cells(),
            t_end_ns: trace.end_time(),
            config_fingerprint: trace.config_fingerprint.clone(),
            settings_fingerprint: trace.settings_fingerprint.clone(),
        },
        arrivals: gate.is_none().then(|| Arrivals {
            threshold_fraction: r.arrival_threshold_fraction,
            since_ramp_midpoint_ns: t0.map(|t0| times.iter().map(|t| t.map(|t| t - t0)).collect()),
            times_ns: times,
            ramp_midpoint_ns: t0,
        }),
        speed_m_per_s: speed,
        speed_error,
        raster: RasterInfo {
            threshold_fraction: r.threshold_fraction,
            excited_pixels: raster.count_ones(),
        },
        readout,
        gate,
    }
}

pub fn to_json(summary: &Summary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(summary).expect("serializable summary");
    bytes.push(b'\n');
    bytes
}
