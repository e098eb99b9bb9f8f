use std::path::{Path, PathBuf};

use clap::Args;

use actin_rlc::analysis::{digitize_trace, render_raster_pbm};
use actin_rlc::gates::{parse_library_entry, LibraryEntry, TruthTable};
use actin_rlc::{builtin_gate_library, Library};

use crate::error::{read_file, write_file, CliError};
use crate::summary::{bit_string, GateSummary};

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Library gate name (see `--list`).
    pub name: Option<String>,
    /// Input bits, as `1 0` or `10`.
    pub bits: Vec<String>,
    /// Gate or cascade spec file instead of a library name.
    #[arg(long, conflicts_with = "name")]
    pub spec: Option<PathBuf>,
    /// Run all input combinations (00, 10, 01, 11).
    #[arg(long)]
    pub truth_table: bool,
    /// Override the gate threshold (fraction of V0).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write one PBM raster per input combination and section here.
    #[arg(long)]
    pub raster: Option<PathBuf>,
    /// Threshold of the rasters (fraction of V0).
    #[arg(long, default_value_t = 0.1)]
    pub raster_threshold: f64,
    #[arg(long)]
    pub json: bool,
    /// List library gates and exit.
    #[arg(long)]
    pub list: bool,
}

pub fn load_entry(
    name: Option<&str>,
    spec: Option<&Path>,
    library: &Library,
) -> Result<LibraryEntry, CliError> {
    match (name, spec) {
        (Some(n), None) => library.get(n).cloned().ok_or_else(|| {
            let known: Vec<&str> = library.names().collect();
            CliError::Config(format!("unknown gate {n:?}; known: {}", known.join(", ")))
        }),
        (None, Some(path)) => {
            let entry = parse_library_entry(&read_file(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            entry.validate(library)?;
            Ok(entry)
        }
        _ => Err(CliError::Config("give a gate name or --spec".into())),
    }
}

fn parse_bits(raw: &[String], n: usize) -> Result<Vec<bool>, CliError> {
    let joined: String = raw.concat();
    let bits: Vec<bool> = joined
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(CliError::Config(format!("bad input bit {other:?}"))),
        })
        .collect::<Result<_, _>>()?;
    if bits.len() != n {
        return Err(CliError::Config(format!(
            "expected {n} input bits, got {}",
            bits.len()
        )));
    }
    Ok(bits)
}

fn write_rasters(table: &TruthTable, dir: &Path, theta: f64) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for row in &table.rows {
        for (k, trace) in row.traces.iter().enumerate() {
            let raster = digitize_trace(trace, theta, table.v0);
            let suffix = if row.traces.len() > 1 {
                format!("_s{}", k + 1)
            } else {
                String::new()
            };
            let path = dir.join(format!(
                "{}_{}{suffix}.pbm",
                table.gate,
                bit_string(&row.inputs)
            ));
            write_file(&path, &render_raster_pbm(&raster))?;
        }
    }
    Ok(())
}

pub fn run(args: &GateArgs) -> Result<(), CliError> {
    let library = builtin_gate_library();
    if args.list {
        for e in library.entries() {
            let description = match e {
                LibraryEntry::Gate(g) => &g.description,
                LibraryEntry::Cascade(c) => &c.description,
            };
            println!("{:<14} {description}", e.name());
        }
        return Ok(());
    }
    let mut entry = load_entry(args.name.as_deref(), args.spec.as_deref(), library)?;
    if let Some(theta) = args.threshold {
        match &mut entry {
            LibraryEntry::Gate(g) => g.set_threshold(theta),
            LibraryEntry::Cascade(_) => {
                return Err(CliError::Config(
                    "--threshold does not apply to cascades".into(),
                ))
            }
        }
        entry.validate(library)?;
    }
    if !(args.raster_threshold > 0.0 && args.raster_threshold < 1.0) {
        return Err(CliError::Config(
            "--raster-threshold must lie in (0, 1)".into(),
        ));
    }

    let table = if args.truth_table {
        if !args.bits.is_empty() {
            return Err(CliError::Config("--truth-table takes no input bits".into()));
        }
        entry.truth_table(library)?
    } else {
        let bits = parse_bits(&args.bits, entry.n_inputs())?;
        single_row(&entry, &bits, library)?
    };

    if let Some(dir) = &args.raster {
        write_rasters(&table, dir, args.raster_threshold)?;
    }

    let mut summary = GateSummary::from_table(&table);
    if !args.truth_table {
        summary.margin = None;
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("serializable")
        );
        return Ok(());
    }
    for row in &summary.rows {
        let outs: Vec<String> = row
            .outputs
            .iter()
            .map(|o| format!("{}={}", o.name, o.bit as u8))
            .collect();
        let levels: Vec<String> = row
            .outputs
            .iter()
            .map(|o| format!("{:.4}", o.level))
            .collect();
        println!(
            "{} {}: {} (levels {})",
            summary.name,
            row.inputs,
            outs.join(" "),
            levels.join(" ")
        );
    }
    if args.truth_table {
        for name in &table.readout_names {
            let col: Vec<String> = table
                .column(name)
                .iter()
                .map(|&b| (b as u8).to_string())
                .collect();
            println!("{name}: {}", col.join(","));
        }
        println!(
            "margin {:.4} V0; matches expected: {}",
            table.margin(),
            if table.matches_expected() {
                "yes"
            } else {
                "no"
            }
        );
    }
    Ok(())
}

/// One input combination, packaged as a one-row table.
fn single_row(
    entry: &LibraryEntry,
    bits: &[bool],
    library: &Library,
) -> Result<TruthTable, CliError> {
    use actin_rlc::gates::{run_cascade, run_gate, GateOutcome};
    match entry {
        LibraryEntry::Gate(g) => {
            let outcome = run_gate(g, bits)?;
            Ok(TruthTable {
                gate: g.name.clone(),
                readout_names: g.readout_names(),
                v0: g.v0,
                threshold_fraction: g.threshold_fraction,
                rows: vec![outcome],
            })
        }
        LibraryEntry::Cascade(c) => {
            let out = run_cascade(c, bits, library)?;
            let last = out.stages.last().expect("non-empty cascade").1.clone();
            let final_gate = match &c.stages.last().expect("non-empty").gate {
                actin_rlc::gates::StageGate::Inline(g) => (**g).clone(),
                actin_rlc::gates::StageGate::Named(n) => library
                    .gate(n)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("unknown gate {n:?}")))?,
            };
            Ok(TruthTable {
                gate: c.name.clone(),
                readout_names: vec![c.output.clone()],
                v0: final_gate.v0,
                threshold_fraction: final_gate.threshold_fraction,
                rows: vec![GateOutcome {
                    inputs: out.inputs,
                    readouts: vec![out.output],
                    traces: last.traces,
                }],
            })
        }
    }
}
