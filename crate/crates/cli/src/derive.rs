use clap::Args;
use serde::Serialize;

use actin_rlc::params::Derivation;
use actin_rlc::DerivationInputs;

use crate::error::CliError;

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub temperature_k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dielectric_constant: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub monomer_length_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub actin_radius_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub ion_size_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub magnetic_permeability: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub conc_k_molar: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub conc_na_molar: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub molar_conductivity_k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub molar_conductivity_na: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r2_ratio: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

impl DeriveArgs {
    fn inputs(&self) -> DerivationInputs {
        let mut i = DerivationInputs::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut i.temperature_k, self.temperature_k);
        set(&mut i.dielectric_constant, self.dielectric_constant);
        set(&mut i.monomer_length_m, self.monomer_length_m);
        set(&mut i.actin_radius_m, self.actin_radius_m);
        set(&mut i.ion_size_m, self.ion_size_m);
        set(&mut i.magnetic_permeability, self.magnetic_permeability);
        set(&mut i.conc_k_molar, self.conc_k_molar);
        set(&mut i.conc_na_molar, self.conc_na_molar);
        set(&mut i.molar_conductivity_k, self.molar_conductivity_k);
        set(&mut i.molar_conductivity_na, self.molar_conductivity_na);
        set(&mut i.r2_ratio, self.r2_ratio);
        i
    }
}

#[derive(Serialize)]
struct Report {
    inputs: DerivationInputs,
    si: Derivation,
    /// Same values in pF, pH and MOhm.
    display: Display,
}

#[derive(Serialize)]
struct Display {
    bjerrum_length_nm: f64,
    c0_pf: f64,
    l_ph: f64,
    r1_mohm: f64,
    r2_mohm: f64,
}

pub fn run(args: &DeriveArgs) -> Result<(), CliError> {
    let inputs = args.inputs();
    let d = Derivation::compute(&inputs).map_err(|e| CliError::Config(e.to_string()))?;
    let display = Display {
        bjerrum_length_nm: d.bjerrum_length_m * 1e9,
        c0_pf: d.c0_farad * 1e12,
        l_ph: d.l_henry * 1e12,
        r1_mohm: d.r1_ohm * 1e-6,
        r2_mohm: d.r2_ohm * 1e-6,
    };
    if args.json {
        let report = Report {
            inputs,
            si: d,
            display,
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("serializable")
        );
        return Ok(());
    }
    println!("{:<16} {:>14} {:>14}", "quantity", "SI", "display");
    let rows = [
        (
            "bjerrum_length",
            d.bjerrum_length_m,
            "m",
            display.bjerrum_length_nm,
            "nm",
        ),
        ("C0", d.c0_farad, "F", display.c0_pf, "pF"),
        ("L", d.l_henry, "H", display.l_ph, "pH"),
        ("R1", d.r1_ohm, "Ohm", display.r1_mohm, "MOhm"),
        ("R2", d.r2_ohm, "Ohm", display.r2_mohm, "MOhm"),
    ];
    for (name, si, si_unit, shown, unit) in rows {
        let shown = if shown.abs() < 1e-2 {
            format!("{shown:.4e}")
        } else {
            format!("{shown:.4}")
        };
        println!("{name:<16} {si:>10.4e} {si_unit:<3} {shown:>10} {unit}");
    }
    println!("{:<16} {:>10.4}", "coil_turns", d.coil_turns);
    println!("{:<16} {:>10.4e} Ohm m", "resistivity", d.resistivity_ohm_m);
    Ok(())
}
