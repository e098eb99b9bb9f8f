use std::path::Path;

use actin_rlc::analysis::{digitize_trace, render_raster_pbm, Trace};
use actin_rlc::gates::{run_cascade, run_gate, GateError, GateOutcome, LibraryEntry};
use actin_rlc::{builtin_gate_library, parse_config, run_simulation, RunConfig};

use crate::error::{read_file, write_file, CliError};
use crate::summary::{self, GateSummary, Summary};

pub struct Outputs {
    /// `(file suffix, trace)`; the first entry has an empty suffix.
    pub traces: Vec<(String, Trace)>,
    pub summary: Summary,
}

pub struct Failure {
    pub error: CliError,
    pub partial: Option<Box<Trace>>,
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

fn gate_failure(e: GateError) -> Failure {
    let partial = match &e {
        GateError::Simulation { failure, .. } => failure.partial.clone(),
        _ => None,
    };
    Failure {
        error: e.into(),
        partial,
    }
}

/// Run a validated config.
pub fn execute(config: &RunConfig) -> Result<Outputs, Failure> {
    let library = builtin_gate_library();
    if let Some(gate) = &config.gate {
        let entry = gate.resolve(library).map_err(CliError::from)?;
        let bits = gate.input_bits().ok_or_else(|| {
            CliError::Config(
                "gate.inputs: required for simulate (use `gate --truth-table` for all rows)".into(),
            )
        })?;
        let (outcome, section_names) = match &entry {
            LibraryEntry::Gate(spec) => (
                run_gate(spec, &bits).map_err(gate_failure)?,
                spec.sections
                    .iter()
                    .map(|s| s.name.clone())
                    .collect::<Vec<_>>(),
            ),
            LibraryEntry::Cascade(c) => {
                let out = run_cascade(c, &bits, library).map_err(gate_failure)?;
                let (stage, last) = out.stages.last().expect("non-empty cascade").clone();
                let names = (0..last.traces.len())
                    .map(|k| format!("{stage}_{k}"))
                    .collect();
                (
                    GateOutcome {
                        inputs: out.inputs,
                        readouts: vec![out.output],
                        traces: last.traces,
                    },
                    names,
                )
            }
        };
        let gate_summary = GateSummary::from_outcome(entry.name(), &outcome);
        let summary = summary::build(config, &outcome.traces[0], Some(gate_summary));
        let traces = outcome
            .traces
            .into_iter()
            .zip(section_names)
            .enumerate()
            .map(|(k, (t, name))| {
                (
                    if k == 0 {
                        String::new()
                    } else {
                        format!("_{name}")
                    },
                    t,
                )
            })
            .collect();
        return Ok(Outputs { traces, summary });
    }
    let spec = config
        .filament
        .as_ref()
        .expect("validated config has a filament");
    let filament = spec.build().map_err(CliError::from)?;
    let trace = run_simulation(&filament, &config.stimuli, &config.run).map_err(|f| Failure {
        error: f.error.into(),
        partial: f.partial,
    })?;
    let summary = summary::build(config, &trace, None);
    Ok(Outputs {
        traces: vec![(String::new(), trace)],
        summary,
    })
}

pub fn csv_bytes(trace: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("writing to memory");
    buf
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let bytes = read_file(path)?;
    parse_config(&bytes, builtin_gate_library())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match execute(&config) {
        Ok(outputs) => {
            let r = &config.readout;
            for (suffix, trace) in &outputs.traces {
                write_file(&out.join(format!("trace{suffix}.csv")), &csv_bytes(trace))?;
                let raster = digitize_trace(trace, r.threshold_fraction, r.v0);
                write_file(
                    &out.join(format!("raster{suffix}.pbm")),
                    &render_raster_pbm(&raster),
                )?;
            }
            write_file(
                &out.join("summary.json"),
                &summary::to_json(&outputs.summary),
            )?;
            let s = &outputs.summary;
            println!(
                "wrote {} ({} samples x {} cells)",
                out.display(),
                s.trace.n_samples,
                s.trace.n_cells
            );
            if let Some(v) = s.speed_m_per_s {
                println!("speed {v:.3} m/s");
            }
            if let Some(g) = &s.gate {
                for row in &g.rows {
                    for o in &row.outputs {
                        println!(
                            "{} {}: {}={} (level {:.4})",
                            g.name, row.inputs, o.name, o.bit as u8, o.level
                        );
                    }
                }
            }
            Ok(())
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                write_file(&out.join("trace.csv.partial"), &csv_bytes(partial))?;
            }
            Err(failure.error)
        }
    }
}
