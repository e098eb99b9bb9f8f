//! Boolean gates built from pulse collisions.
//!
//! A gate is one or more filament sections. Each logical input binds to a set
//! of stimuli (bit 1 applies them, bit 0 omits them) and each readout compares
//! the late-time level of its cells against `threshold_fraction * v0`.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Trace;
use crate::config::{parse_json, validate_stimuli, FilamentSpec};
use crate::integrator::{run_simulation, RunFailure, RunSettings};
use crate::stimuli::StimulusSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("invalid gate {gate}: {message}")]
    Spec { gate: String, message: String },
    #[error("gate {gate}, section {section}: {failure}")]
    Simulation {
        gate: String,
        section: String,
        failure: Box<RunFailure>,
    },
    #[error("calibration of {gate} failed: {message}\n{table}")]
    Calibration {
        gate: String,
        message: String,
        table: String,
    },
}

impl GateError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, GateError::Simulation { failure, .. } if failure.error.is_numerical())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicOp {
    And,
    Or,
    Not,
    Xor,
}

impl LogicOp {
    pub fn eval(self, bits: &[bool]) -> bool {
        match self {
            LogicOp::And => bits.iter().all(|&b| b),
            LogicOp::Or => bits.iter().any(|&b| b),
            LogicOp::Not => !bits[0],
            LogicOp::Xor => bits.iter().filter(|&&b| b).count() % 2 == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Signed,
    /// Compare `|V|`; for layouts whose ON state is a negative excursion.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSpec {
    pub name: String,
    /// All listed cells must exceed the threshold.
    pub cells: Vec<usize>,
    #[serde(default)]
    pub polarity: Polarity,
    pub expect: LogicOp,
    /// Overrides the gate's threshold for this readout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
    /// Reference layout; calibration moves `cells` at most 2 away from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_cells: Option<Vec<usize>>,
}

impl ReadoutSpec {
    fn nominal(&self) -> &[usize] {
        self.nominal_cells.as_deref().unwrap_or(&self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBinding {
    pub input: String,
    pub stimuli: Vec<StimulusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_cells: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub name: String,
    pub filament: FilamentSpec,
    pub bindings: Vec<InputBinding>,
    /// Always-applied stimuli, e.g. an auxiliary cell held at -V0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constants: Vec<StimulusSpec>,
    pub readouts: Vec<ReadoutSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub inputs: Vec<String>,
    /// Input amplitude; stimulus scales are in units of `v0`.
    #[serde(default = "one")]
    pub v0: f64,
    pub threshold_fraction: f64,
    #[serde(default = "one")]
    pub window_ns: f64,
    pub run: RunSettings,
    pub sections: Vec<GateSection>,
}

impl GateSpec {
    fn invalid(&self, message: impl Into<String>) -> GateError {
        GateError::Spec {
            gate: self.name.clone(),
            message: message.into(),
        }
    }

    pub fn readouts(&self) -> impl Iterator<Item = &ReadoutSpec> {
        self.sections.iter().flat_map(|s| s.readouts.iter())
    }

    pub fn threshold_of(&self, readout: &ReadoutSpec) -> f64 {
        readout
            .threshold_fraction
            .unwrap_or(self.threshold_fraction)
    }

    /// Set one threshold for every readout.
    pub fn set_threshold(&mut self, theta: f64) {
        self.threshold_fraction = theta;
        for s in &mut self.sections {
            for r in &mut s.readouts {
                r.threshold_fraction = None;
            }
        }
    }

    pub fn readout_names(&self) -> Vec<String> {
        self.readouts().map(|r| r.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if self.inputs.is_empty() {
            return Err(self.invalid("no inputs"));
        }
        let names: HashSet<&str> = self.inputs.iter().map(String::as_str).collect();
        if names.len() != self.inputs.len() {
            return Err(self.invalid("duplicate input names"));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(self.invalid(format!(
                "threshold_fraction must lie in (0, 1), got {}",
                self.threshold_fraction
            )));
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(self.invalid("v0 must be > 0"));
        }
        self.run
            .validate()
            .map_err(|e| self.invalid(format!("run: {e}")))?;
        if !(self.window_ns > 0.0 && self.window_ns <= self.run.t_end_ns) {
            return Err(self.invalid(format!(
                "window_ns must lie in (0, t_end_ns], got {}",
                self.window_ns
            )));
        }
        if self.sections.is_empty() {
            return Err(self.invalid("no sections"));
        }
        let mut bound = HashSet::new();
        let mut readout_names = HashSet::new();
        for section in &self.sections {
            let here = |m: String| self.invalid(format!("section {}: {m}", section.name));
            let filament = section.filament.build().map_err(|e| here(e.to_string()))?;
            validate_stimuli(&filament, &section.constants, "constants")
                .map_err(|e| here(e.to_string()))?;
            let mut all: Vec<StimulusSpec> = section.constants.clone();
            for binding in &section.bindings {
                if !names.contains(binding.input.as_str()) {
                    return Err(here(format!(
                        "binding to unknown input {:?}",
                        binding.input
                    )));
                }
                bound.insert(binding.input.as_str());
                all.extend(binding.stimuli.iter().cloned());
            }
            validate_stimuli(&filament, &all, "stimuli").map_err(|e| here(e.to_string()))?;
            if section.readouts.is_empty() {
                return Err(here("no readouts".into()));
            }
            for r in &section.readouts {
                if !readout_names.insert(r.name.as_str()) {
                    return Err(here(format!("duplicate readout {:?}", r.name)));
                }
                if r.cells.is_empty() {
                    return Err(here(format!("readout {:?} has no cells", r.name)));
                }
                if let Some(&c) = r
                    .cells
                    .iter()
                    .find(|&&c| c < 1 || c > filament.n_monomers())
                {
                    return Err(here(format!("readout {:?}: cell {c} out of range", r.name)));
                }
                let theta = self.threshold_of(r);
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(here(format!(
                        "readout {:?}: threshold_fraction must lie in (0, 1), got {theta}",
                        r.name
                    )));
                }
                if r.expect == LogicOp::Not && self.inputs.len() != 1 {
                    return Err(here(format!("readout {:?}: `not` needs one input", r.name)));
                }
            }
        }
        if let Some(unbound) = self.inputs.iter().find(|i| !bound.contains(i.as_str())) {
            return Err(self.invalid(format!("input {unbound:?} is not bound")));
        }
        Ok(())
    }

    /// Largest distance of any input or output cell from its nominal position.
    pub fn max_offset_from_nominal(&self) -> usize {
        let dist = |cells: &[usize], nominal: &[usize]| -> usize {
            let mut a = cells.to_vec();
            let mut b = nominal.to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a.len() != b.len() {
                return usize::MAX;
            }
            a.iter()
                .zip(&b)
                .map(|(x, y)| x.abs_diff(*y))
                .max()
                .unwrap_or(0)
        };
        let mut worst = 0;
        for section in &self.sections {
            for binding in &section.bindings {
                if let Some(nominal) = &binding.nominal_cells {
                    let cells: Vec<usize> = binding
                        .stimuli
                        .iter()
                        .flat_map(|s| s.cells.iter().copied())
                        .collect();
                    worst = worst.max(dist(&cells, nominal));
                }
            }
            for r in &section.readouts {
                worst = worst.max(dist(&r.cells, r.nominal()));
            }
        }
        worst
    }
}

/// Signed (or magnitude) late-time level of a readout: the smallest, over
/// its cells, of the largest value in the trailing window.
pub fn readout_level(trace: &Trace, cells: &[usize], window_ns: f64, polarity: Polarity) -> f64 {
    cells
        .iter()
        .map(|&c| trace.window_max(c, window_ns, polarity == Polarity::Magnitude))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutResult {
    pub name: String,
    pub level: f64,
    pub bit: bool,
    pub expected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub inputs: Vec<bool>,
    pub readouts: Vec<ReadoutResult>,
    /// One trace per section, in section order.
    pub traces: Vec<Trace>,
}

impl GateOutcome {
    pub fn bits(&self) -> Vec<bool> {
        self.readouts.iter().map(|r| r.bit).collect()
    }
}

/// Stimuli of `section` for the given input bits, scaled by `v0`.
pub fn section_stimuli(spec: &GateSpec, section: &GateSection, bits: &[bool]) -> Vec<StimulusSpec> {
    let scale = |s: &StimulusSpec| s.clone().with_scale(s.scale * spec.v0);
    let mut out: Vec<StimulusSpec> = section.constants.iter().map(scale).collect();
    for binding in &section.bindings {
        let idx = spec
            .inputs
            .iter()
            .position(|n| *n == binding.input)
            .expect("validated binding");
        if bits[idx] {
            out.extend(binding.stimuli.iter().map(scale));
        }
    }
    out
}

/// Run every section for one input combination and read the outputs.
pub fn run_gate(spec: &GateSpec, bits: &[bool]) -> Result<GateOutcome, GateError> {
    spec.validate()?;
    if bits.len() != spec.inputs.len() {
        return Err(spec.invalid(format!(
            "expected {} input bits, got {}",
            spec.inputs.len(),
            bits.len()
        )));
    }
    let mut traces = Vec::with_capacity(spec.sections.len());
    let mut readouts = Vec::new();
    for section in &spec.sections {
        let filament = section
            .filament
            .build()
            .map_err(|e| spec.invalid(e.to_string()))?;
        let stimuli = section_stimuli(spec, section, bits);
        let trace = run_simulation(&filament, &stimuli, &spec.run).map_err(|failure| {
            GateError::Simulation {
                gate: spec.name.clone(),
                section: section.name.clone(),
                failure: Box::new(failure),
            }
        })?;
        for r in &section.readouts {
            let level = readout_level(&trace, &r.cells, spec.window_ns, r.polarity);
            readouts.push(ReadoutResult {
                name: r.name.clone(),
                level,
                bit: level >= spec.threshold_of(r) * spec.v0,
                expected: r.expect.eval(bits),
            });
        }
        traces.push(trace);
    }
    Ok(GateOutcome {
        inputs: bits.to_vec(),
        readouts,
        traces,
    })
}

/// All input combinations with the first input varying fastest
/// (00, 10, 01, 11 for two inputs).
pub fn input_combinations(n_inputs: usize) -> Vec<Vec<bool>> {
    (0..1usize << n_inputs)
        .map(|k| (0..n_inputs).map(|i| (k >> i) & 1 == 1).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub gate: String,
    pub readout_names: Vec<String>,
    pub v0: f64,
    pub threshold_fraction: f64,
    pub rows: Vec<GateOutcome>,
}

impl TruthTable {
    /// Bits of one readout over all rows.
    pub fn column(&self, readout: &str) -> Vec<bool> {
        let k = self
            .readout_names
            .iter()
            .position(|n| n == readout)
            .expect("known readout");
        self.rows.iter().map(|r| r.readouts[k].bit).collect()
    }

    pub fn levels(&self, readout: &str) -> Vec<f64> {
        let k = self
            .readout_names
            .iter()
            .position(|n| n == readout)
            .expect("known readout");
        self.rows.iter().map(|r| r.readouts[k].level).collect()
    }

    pub fn matches_expected(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.readouts.iter().all(|o| o.bit == o.expected))
    }

    /// `(max OFF level, min ON level)` of one readout over all rows.
    pub fn level_gap(&self, readout: &str) -> (f64, f64) {
        let k = self
            .readout_names
            .iter()
            .position(|n| n == readout)
            .expect("known readout");
        level_gap(self.rows.iter().map(|r| &r.readouts[k]))
    }

    /// Smallest `(min ON - max OFF) / v0` over the readouts.
    pub fn margin(&self) -> f64 {
        self.readout_names
            .iter()
            .map(|name| {
                let (off, on) = self.level_gap(name);
                (on - off) / self.v0
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn format_levels(&self) -> String {
        let mut s = String::new();
        for row in &self.rows {
            let bits: String = row
                .inputs
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            s.push_str(&bits);
            for o in &row.readouts {
                s.push_str(&format!(
                    "  {}={:.4} (want {})",
                    o.name, o.level, o.expected as u8
                ));
            }
            s.push('\n');
        }
        s
    }
}

fn level_gap<'a>(readouts: impl Iterator<Item = &'a ReadoutResult>) -> (f64, f64) {
    let mut off = f64::NEG_INFINITY;
    let mut on = f64::INFINITY;
    for r in readouts {
        if r.expected {
            on = on.min(r.level);
        } else {
            off = off.max(r.level);
        }
    }
    (off, on)
}

/// Runs all input combinations, concurrently.
pub fn truth_table(spec: &GateSpec) -> Result<TruthTable, GateError> {
    spec.validate()?;
    let rows = input_combinations(spec.inputs.len())
        .par_iter()
        .map(|bits| run_gate(spec, bits))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TruthTable {
        gate: spec.name.clone(),
        readout_names: spec.readout_names(),
        v0: spec.v0,
        threshold_fraction: spec.threshold_fraction,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationTarget {
    Threshold,
    OutputCells,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub spec: GateSpec,
    pub margin: f64,
    /// `(readout, threshold fraction)` after calibration.
    pub thresholds: Vec<(String, f64)>,
    /// `(readout, shift from nominal)` for the chosen output cells.
    pub shifts: Vec<(String, i64)>,
    /// Levels per input combination, readouts in spec order.
    pub levels: Vec<Vec<f64>>,
}

fn shifted(cells: &[usize], shift: i64, n_cells: usize) -> Option<Vec<usize>> {
    cells
        .iter()
        .map(|&c| {
            let s = c as i64 + shift;
            (s >= 1 && s as usize <= n_cells).then_some(s as usize)
        })
        .collect()
}

/// Choose output cells (within 2 of nominal) and/or the threshold that
/// maximise the separation margin. The traces are computed once; only the
/// readout changes between candidates.
pub fn calibrate_gate(
    spec: &GateSpec,
    target: CalibrationTarget,
) -> Result<Calibration, GateError> {
    let table = truth_table(spec)?;
    let mut calibrated = spec.clone();
    let move_cells = matches!(
        target,
        CalibrationTarget::OutputCells | CalibrationTarget::Both
    );
    let move_theta = matches!(
        target,
        CalibrationTarget::Threshold | CalibrationTarget::Both
    );

    // (section, readout) pairs in spec order.
    let slots: Vec<(usize, usize)> = spec
        .sections
        .iter()
        .enumerate()
        .flat_map(|(s, sec)| (0..sec.readouts.len()).map(move |r| (s, r)))
        .collect();

    let candidates: Vec<Vec<(i64, Vec<usize>)>> = slots
        .iter()
        .map(|&(s, r)| {
            let readout = &spec.sections[s].readouts[r];
            let n_cells = spec.sections[s].filament.n_cells;
            let current = (current_shift(readout), readout.cells.clone());
            let mut list = vec![current.clone()];
            if move_cells {
                let mut shifts: Vec<i64> = (-2..=2).collect();
                shifts.sort_by_key(|s| (s.abs(), *s));
                for sh in shifts {
                    if let Some(cells) = shifted(readout.nominal(), sh, n_cells) {
                        if cells != current.1 {
                            list.push((sh, cells));
                        }
                    }
                }
            }
            list
        })
        .collect();

    let evaluate = |choice: &[usize]| -> Vec<Vec<ReadoutResult>> {
        table
            .rows
            .iter()
            .map(|row| {
                slots
                    .iter()
                    .enumerate()
                    .map(|(k, &(s, r))| {
                        let readout = &spec.sections[s].readouts[r];
                        let cells = &candidates[k][choice[k]].1;
                        let level =
                            readout_level(&row.traces[s], cells, spec.window_ns, readout.polarity);
                        ReadoutResult {
                            name: readout.name.clone(),
                            level,
                            bit: level >= spec.threshold_of(readout) * spec.v0,
                            expected: readout.expect.eval(&row.inputs),
                        }
                    })
                    .collect()
            })
            .collect()
    };

    // Exhaustive over the (small) product of per-readout candidates; the
    // first candidate of every list is the incumbent, replaced only on a
    // strict improvement.
    let mut choice = vec![0usize; slots.len()];
    let mut best_choice = choice.clone();
    let mut best = evaluate(&choice);
    let margin_of = |results: &[Vec<ReadoutResult>]| -> f64 {
        (0..slots.len())
            .map(|k| {
                let (off, on) = level_gap(results.iter().map(|row| &row[k]));
                (on - off) / spec.v0
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut best_margin = margin_of(&best);
    loop {
        let mut k = 0;
        while k < choice.len() {
            choice[k] += 1;
            if choice[k] < candidates[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == choice.len() {
            break;
        }
        let results = evaluate(&choice);
        let margin = margin_of(&results);
        if margin > best_margin {
            best_margin = margin;
            best = results;
            best_choice = choice.clone();
        }
    }

    let levels: Vec<Vec<f64>> = best
        .iter()
        .map(|row| row.iter().map(|r| r.level).collect())
        .collect();
    if best_margin.is_nan() || best_margin <= 0.0 {
        let mut t = table.clone();
        for (row, results) in t.rows.iter_mut().zip(&best) {
            row.readouts = results.clone();
        }
        return Err(GateError::Calibration {
            gate: spec.name.clone(),
            message: format!("no separating configuration (best margin {best_margin:.4})"),
            table: t.format_levels(),
        });
    }

    let mut shifts = Vec::new();
    for (k, &(s, r)) in slots.iter().enumerate() {
        let (shift, cells) = &candidates[k][best_choice[k]];
        let readout = &mut calibrated.sections[s].readouts[r];
        if readout.nominal_cells.is_none() && move_cells {
            readout.nominal_cells = Some(readout.cells.clone());
        }
        readout.cells = cells.clone();
        shifts.push((readout.name.clone(), *shift));
    }
    let mut thresholds = Vec::new();
    for (k, &(s, r)) in slots.iter().enumerate() {
        let readout = &calibrated.sections[s].readouts[r];
        let theta = if move_theta {
            let (off, on) = level_gap(best.iter().map(|row| &row[k]));
            midpoint_threshold(off, on, spec.v0)
        } else {
            calibrated.threshold_of(readout)
        };
        thresholds.push((readout.name.clone(), theta));
    }
    if move_theta {
        if thresholds.iter().all(|t| t.1 == thresholds[0].1) {
            calibrated.set_threshold(thresholds[0].1);
        } else {
            for (k, &(s, r)) in slots.iter().enumerate() {
                calibrated.sections[s].readouts[r].threshold_fraction = Some(thresholds[k].1);
            }
        }
    }
    Ok(Calibration {
        thresholds,
        spec: calibrated,
        margin: best_margin,
        shifts,
        levels,
    })
}

/// Middle of the gap rounded to 0.01, unless rounding leaves the gap.
fn midpoint_threshold(off: f64, on: f64, v0: f64) -> f64 {
    let off = off.max(0.0);
    let mid = 0.5 * (off + on) / v0;
    let rounded = (mid * 100.0).round() / 100.0;
    if rounded * v0 > off && rounded * v0 <= on && rounded > 0.0 {
        rounded
    } else {
        mid
    }
}

fn current_shift(readout: &ReadoutSpec) -> i64 {
    let nominal = readout.nominal();
    match (readout.cells.first(), nominal.first()) {
        (Some(&c), Some(&n)) => c as i64 - n as i64,
        _ => 0,
    }
}

/// A multi-stage circuit with ideal re-injection between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub inputs: Vec<String>,
    pub stages: Vec<CascadeStage>,
    /// `stage.readout` reference of the final output.
    pub output: String,
    pub expect: LogicOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageGate {
    Named(String),
    Inline(Box<GateSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeStage {
    pub name: String,
    pub gate: StageGate,
    /// One source per gate input: a cascade input name or `stage.readout`.
    pub wiring: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutcome {
    pub inputs: Vec<bool>,
    pub stages: Vec<(String, GateOutcome)>,
    pub output: ReadoutResult,
}

impl CascadeSpec {
    fn invalid(&self, message: impl Into<String>) -> GateError {
        GateError::Spec {
            gate: self.name.clone(),
            message: message.into(),
        }
    }

    fn resolve_stage<'a>(
        &self,
        stage: &'a CascadeStage,
        library: &'a Library,
    ) -> Result<&'a GateSpec, GateError> {
        match &stage.gate {
            StageGate::Inline(g) => Ok(g),
            StageGate::Named(name) => match library.get(name) {
                Some(LibraryEntry::Gate(g)) => Ok(g),
                Some(LibraryEntry::Cascade(_)) => Err(self.invalid(format!(
                    "stage {}: nested cascade {name:?} is not supported",
                    stage.name
                ))),
                None => Err(self.invalid(format!("stage {}: unknown gate {name:?}", stage.name))),
            },
        }
    }

    /// Checks that every reference points at an input or an earlier stage.
    pub fn validate(&self, library: &Library) -> Result<(), GateError> {
        if self.stages.is_empty() {
            return Err(self.invalid("no stages"));
        }
        let mut available: HashSet<String> = self.inputs.iter().cloned().collect();
        for stage in &self.stages {
            let gate = self.resolve_stage(stage, library)?;
            gate.validate()?;
            if stage.wiring.len() != gate.inputs.len() {
                return Err(self.invalid(format!(
                    "stage {}: {} wires for {} inputs",
                    stage.name,
                    stage.wiring.len(),
                    gate.inputs.len()
                )));
            }
            if let Some(missing) = stage.wiring.iter().find(|w| !available.contains(*w)) {
                return Err(self.invalid(format!(
                    "stage {}: {missing:?} is not produced before this stage",
                    stage.name
                )));
            }
            for r in gate.readouts() {
                available.insert(format!("{}.{}", stage.name, r.name));
            }
        }
        if !available.contains(&self.output) || self.inputs.contains(&self.output) {
            return Err(self.invalid(format!("output {:?} is not a stage readout", self.output)));
        }
        Ok(())
    }
}

pub fn run_cascade(
    spec: &CascadeSpec,
    bits: &[bool],
    library: &Library,
) -> Result<CascadeOutcome, GateError> {
    spec.validate(library)?;
    if bits.len() != spec.inputs.len() {
        return Err(spec.invalid(format!(
            "expected {} input bits, got {}",
            spec.inputs.len(),
            bits.len()
        )));
    }
    let mut values: BTreeMap<String, (bool, f64)> = spec
        .inputs
        .iter()
        .cloned()
        .zip(bits.iter().map(|&b| (b, if b { 1.0 } else { 0.0 })))
        .collect();
    let mut stages = Vec::new();
    for stage in &spec.stages {
        let gate = spec.resolve_stage(stage, library)?;
        let stage_bits: Vec<bool> = stage.wiring.iter().map(|w| values[w].0).collect();
        let outcome = run_gate(gate, &stage_bits)?;
        for r in &outcome.readouts {
            values.insert(format!("{}.{}", stage.name, r.name), (r.bit, r.level));
        }
        stages.push((stage.name.clone(), outcome));
    }
    let (bit, level) = values[&spec.output];
    Ok(CascadeOutcome {
        inputs: bits.to_vec(),
        stages,
        output: ReadoutResult {
            name: spec.output.clone(),
            level,
            bit,
            expected: spec.expect.eval(bits),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LibraryEntry {
    Gate(GateSpec),
    Cascade(CascadeSpec),
}

impl LibraryEntry {
    pub fn name(&self) -> &str {
        match self {
            LibraryEntry::Gate(g) => &g.name,
            LibraryEntry::Cascade(c) => &c.name,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            LibraryEntry::Gate(g) => g.inputs.len(),
            LibraryEntry::Cascade(c) => c.inputs.len(),
        }
    }

    pub fn validate(&self, library: &Library) -> Result<(), GateError> {
        match self {
            LibraryEntry::Gate(g) => g.validate(),
            LibraryEntry::Cascade(c) => c.validate(library),
        }
    }

    /// Truth table of a gate, or of a cascade's final output. For cascades
    /// the rows carry the final stage's traces.
    pub fn truth_table(&self, library: &Library) -> Result<TruthTable, GateError> {
        match self {
            LibraryEntry::Gate(g) => truth_table(g),
            LibraryEntry::Cascade(c) => {
                c.validate(library)?;
                let rows = input_combinations(c.inputs.len())
                    .par_iter()
                    .map(|bits| {
                        run_cascade(c, bits, library).map(|out| {
                            let last = out.stages.last().expect("non-empty cascade").1.clone();
                            GateOutcome {
                                inputs: out.inputs,
                                readouts: vec![out.output],
                                traces: last.traces,
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let final_gate = c.resolve_stage(c.stages.last().expect("non-empty"), library)?;
                Ok(TruthTable {
                    gate: c.name.clone(),
                    readout_names: vec![c.output.clone()],
                    v0: final_gate.v0,
                    threshold_fraction: final_gate.threshold_fraction,
                    rows,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Library {
    entries: BTreeMap<String, LibraryEntry>,
}

impl Library {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: LibraryEntry) -> Option<LibraryEntry> {
        self.entries.insert(entry.name().to_string(), entry)
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.entries.get(name)
    }

    pub fn gate(&self, name: &str) -> Option<&GateSpec> {
        match self.get(name)? {
            LibraryEntry::Gate(g) => Some(g),
            LibraryEntry::Cascade(_) => None,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("AND_u", include_str!("../gates/AND_u.json")),
    ("OR_u", include_str!("../gates/OR_u.json")),
    ("NOT_u", include_str!("../gates/NOT_u.json")),
    ("XOR_u_cascade", include_str!("../gates/XOR_u_cascade.json")),
    ("AND_f", include_str!("../gates/AND_f.json")),
    ("XOR_f", include_str!("../gates/XOR_f.json")),
    ("HALFADDER_f", include_str!("../gates/HALFADDER_f.json")),
    ("XOR_f_lumped", include_str!("../gates/XOR_f_lumped.json")),
];

/// Parse one library file.
pub fn parse_library_entry(bytes: &[u8]) -> Result<LibraryEntry, crate::config::ConfigError> {
    let value: serde_json::Value = parse_json(bytes)?;
    if value.get("stages").is_some() {
        parse_json::<CascadeSpec>(bytes).map(LibraryEntry::Cascade)
    } else {
        parse_json::<GateSpec>(bytes).map(LibraryEntry::Gate)
    }
}

/// The shipped gates, parsed once.
pub fn builtin_gate_library() -> &'static Library {
    static LIBRARY: OnceLock<Library> = OnceLock::new();
    LIBRARY.get_or_init(|| {
        let mut lib = Library::new();
        for (name, text) in BUILTIN {
            let entry = parse_library_entry(text.as_bytes())
                .unwrap_or_else(|e| panic!("shipped gate {name} is malformed: {e}"));
            assert_eq!(entry.name(), *name, "gate file name mismatch");
            lib.insert(entry);
        }
        lib
    })
}
