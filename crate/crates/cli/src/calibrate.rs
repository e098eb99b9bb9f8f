use actin_rlc::builtin_gate_library;
use actin_rlc::gates::{calibrate_gate, input_combinations, CalibrationTarget, LibraryEntry};

use crate::error::{write_file, CliError};
use crate::gate::load_entry;
use crate::summary::bit_string;
use crate::{CalibrateArgs, Free};

pub fn run(args: &CalibrateArgs) -> Result<(), CliError> {
    let library = builtin_gate_library();
    let entry = load_entry(args.name.as_deref(), args.spec.as_deref(), library)?;
    let spec = match entry {
        LibraryEntry::Gate(g) => g,
        LibraryEntry::Cascade(c) => {
            return Err(CliError::Config(format!(
                "{} is a cascade; calibrate its stages instead",
                c.name
            )))
        }
    };
    let target = match args.free {
        Free::Threshold => CalibrationTarget::Threshold,
        Free::OutputCells => CalibrationTarget::OutputCells,
        Free::Both => CalibrationTarget::Both,
    };
    let cal = calibrate_gate(&spec, target)?;
    if let Some(path) = &args.out {
        let mut bytes = serde_json::to_vec_pretty(&cal.spec).expect("serializable");
        bytes.push(b'\n');
        write_file(path, &bytes)?;
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&cal).expect("serializable")
        );
        return Ok(());
    }
    println!("gate {}: margin {:.4} V0", spec.name, cal.margin);
    for ((name, theta), (_, shift)) in cal.thresholds.iter().zip(&cal.shifts) {
        let cells = cal
            .spec
            .readouts()
            .find(|r| &r.name == name)
            .map(|r| r.cells.clone())
            .unwrap_or_default();
        println!("  {name}: threshold {theta} V0, cells {cells:?} (shift {shift:+})");
    }
    let names = spec.readout_names();
    for (bits, levels) in input_combinations(spec.inputs.len())
        .iter()
        .zip(&cal.levels)
    {
        let cols: Vec<String> = names
            .iter()
            .zip(levels)
            .map(|(n, l)| format!("{n}={l:.4}"))
            .collect();
        println!("  {}  {}", bit_string(bits), cols.join("  "));
    }
    Ok(())
}
