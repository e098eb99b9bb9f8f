//! Electrical parameters of one actin monomer.
//!
//! The monomer is treated as a coaxial cable whose outer radius is the actin
//! radius plus one Bjerrum length. Capacitance, inductance and resistance all
//! follow from that geometry and the ionic composition of the solution. Lumped
//! groups of monomers combine the per-monomer values with series/parallel rules.
//!
//! Everything here is SI. Presentation code converts to pF / pH / MOhm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical constants (CODATA 2018, exact where SI defines them).
pub mod constants {
    /// Elementary charge, C.
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Vacuum permittivity, F/m.
    pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
    /// Boltzmann constant, J/K.
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    /// Vacuum permeability, H/m.
    pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
}

use constants::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("{quantity} must be {requirement}, got {value}")]
    Domain {
        quantity: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn require_positive(quantity: &'static str, value: f64) -> Result<(), ParamsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParamsError::Domain {
            quantity,
            requirement: "finite and > 0",
            value,
        })
    }
}

/// Physical inputs to the parameter derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DerivationInputs {
    /// Absolute temperature, K.
    pub temperature_k: f64,
    /// Relative dielectric constant of the solution.
    pub dielectric_constant: f64,
    /// Monomer length, m.
    pub monomer_length_m: f64,
    /// Actin radius, m.
    pub actin_radius_m: f64,
    /// Hydrated ion size, m. Sets the number of coil turns per monomer.
    pub ion_size_m: f64,
    /// Magnetic permeability, H/m.
    pub magnetic_permeability: f64,
    /// K+ concentration, mol/L.
    pub conc_k_molar: f64,
    /// Na+ concentration, mol/L.
    pub conc_na_molar: f64,
    /// Molar conductivity of K+, (Ohm m)^-1 M^-1.
    pub molar_conductivity_k: f64,
    /// Molar conductivity of Na+, (Ohm m)^-1 M^-1.
    pub molar_conductivity_na: f64,
    /// R2 = R1 / r2_ratio.
    pub r2_ratio: f64,
}

impl Default for DerivationInputs {
    fn default() -> Self {
        Self {
            temperature_k: 293.0,
            dielectric_constant: 80.0,
            monomer_length_m: 5.4e-9,
            actin_radius_m: 2.5e-9,
            ion_size_m: 3.6e-10,
            magnetic_permeability: VACUUM_PERMEABILITY,
            conc_k_molar: 0.15,
            conc_na_molar: 0.02,
            molar_conductivity_k: 7.4,
            molar_conductivity_na: 5.0,
            r2_ratio: 7.0,
        }
    }
}

impl DerivationInputs {
    pub fn validate(&self) -> Result<(), ParamsError> {
        require_positive("temperature_k", self.temperature_k)?;
        require_positive("dielectric_constant", self.dielectric_constant)?;
        require_positive("monomer_length_m", self.monomer_length_m)?;
        require_positive("actin_radius_m", self.actin_radius_m)?;
        require_positive("ion_size_m", self.ion_size_m)?;
        require_positive("magnetic_permeability", self.magnetic_permeability)?;
        require_positive("molar_conductivity_k", self.molar_conductivity_k)?;
        require_positive("molar_conductivity_na", self.molar_conductivity_na)?;
        require_positive("r2_ratio", self.r2_ratio)?;
        for (name, c) in [
            ("conc_k_molar", self.conc_k_molar),
            ("conc_na_molar", self.conc_na_molar),
        ] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(ParamsError::Domain {
                    quantity: name,
                    requirement: "finite and >= 0",
                    value: c,
                });
            }
        }
        Ok(())
    }

    fn log_radius_ratio(&self, lambda_b: f64) -> f64 {
        ((self.actin_radius_m + lambda_b) / self.actin_radius_m).ln()
    }
}

/// Bjerrum length `e^2 / (4 pi eps eps0 kB T)`, m.
pub fn bjerrum_length(inputs: &DerivationInputs) -> Result<f64, ParamsError> {
    require_positive("temperature_k", inputs.temperature_k)?;
    require_positive("dielectric_constant", inputs.dielectric_constant)?;
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    Ok(e2
        / (4.0
            * std::f64::consts::PI
            * inputs.dielectric_constant
            * VACUUM_PERMITTIVITY
            * BOLTZMANN
            * inputs.temperature_k))
}

/// Capacitance of one monomer, F.
pub fn monomer_capacitance(inputs: &DerivationInputs, lambda_b: f64) -> Result<f64, ParamsError> {
    require_positive("lambda_b", lambda_b)?;
    require_positive("monomer_length_m", inputs.monomer_length_m)?;
    require_positive("actin_radius_m", inputs.actin_radius_m)?;
    require_positive("dielectric_constant", inputs.dielectric_constant)?;
    let log = inputs.log_radius_ratio(lambda_b);
    Ok(2.0
        * std::f64::consts::PI
        * inputs.dielectric_constant
        * VACUUM_PERMITTIVITY
        * inputs.monomer_length_m
        / log)
}

/// Number of ion windings along one monomer, `l / r_h`. Not rounded.
pub fn coil_turns(inputs: &DerivationInputs) -> Result<f64, ParamsError> {
    require_positive("monomer_length_m", inputs.monomer_length_m)?;
    require_positive("ion_size_m", inputs.ion_size_m)?;
    Ok(inputs.monomer_length_m / inputs.ion_size_m)
}

/// Inductance of one monomer, H.
pub fn monomer_inductance(inputs: &DerivationInputs, lambda_b: f64) -> Result<f64, ParamsError> {
    require_positive("lambda_b", lambda_b)?;
    require_positive("actin_radius_m", inputs.actin_radius_m)?;
    require_positive("magnetic_permeability", inputs.magnetic_permeability)?;
    let turns = coil_turns(inputs)?;
    let outer = inputs.actin_radius_m + lambda_b;
    Ok(
        inputs.magnetic_permeability * turns * turns * std::f64::consts::PI * outer * outer
            / inputs.monomer_length_m,
    )
}

/// Resistivity of the ionic solution, Ohm m.
pub fn solution_resistivity(inputs: &DerivationInputs) -> Result<f64, ParamsError> {
    let conductivity = inputs.molar_conductivity_k * inputs.conc_k_molar
        + inputs.molar_conductivity_na * inputs.conc_na_molar;
    if !(conductivity.is_finite() && conductivity > 0.0) {
        return Err(ParamsError::Domain {
            quantity: "solution conductivity",
            requirement: "> 0 (at least one ion concentration must be positive)",
            value: conductivity,
        });
    }
    Ok(1.0 / conductivity)
}

/// `(R1, R2)` of one monomer, Ohm.
pub fn monomer_resistances(
    inputs: &DerivationInputs,
    lambda_b: f64,
    rho: f64,
) -> Result<(f64, f64), ParamsError> {
    require_positive("rho", rho)?;
    require_positive("lambda_b", lambda_b)?;
    require_positive("monomer_length_m", inputs.monomer_length_m)?;
    require_positive("r2_ratio", inputs.r2_ratio)?;
    let r1 = rho * inputs.log_radius_ratio(lambda_b)
        / (2.0 * std::f64::consts::PI * inputs.monomer_length_m);
    Ok((r1, r1 / inputs.r2_ratio))
}

/// Intermediate and final values of the full derivation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivation {
    pub bjerrum_length_m: f64,
    pub coil_turns: f64,
    pub resistivity_ohm_m: f64,
    pub c0_farad: f64,
    pub l_henry: f64,
    pub r1_ohm: f64,
    pub r2_ohm: f64,
}

impl Derivation {
    pub fn compute(inputs: &DerivationInputs) -> Result<Self, ParamsError> {
        inputs.validate()?;
        let lambda_b = bjerrum_length(inputs)?;
        let rho = solution_resistivity(inputs)?;
        let (r1, r2) = monomer_resistances(inputs, lambda_b, rho)?;
        Ok(Self {
            bjerrum_length_m: lambda_b,
            coil_turns: coil_turns(inputs)?,
            resistivity_ohm_m: rho,
            c0_farad: monomer_capacitance(inputs, lambda_b)?,
            l_henry: monomer_inductance(inputs, lambda_b)?,
            r1_ohm: r1,
            r2_ohm: r2,
        })
    }

    pub fn cell_params(&self, b: f64) -> Result<CellParams, ParamsError> {
        CellParams::new(self.r1_ohm, self.r2_ohm, self.l_henry, self.c0_farad, b)
    }
}

/// Electrical parameters of one lattice unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Series resistance, Ohm.
    pub r1: f64,
    /// Coupling (shunt) resistance, Ohm.
    pub r2: f64,
    /// Inductance, H.
    pub l: f64,
    /// Linear capacitance, F.
    pub c0: f64,
    /// Capacitor nonlinearity, 1/V.
    pub b: f64,
    /// Monomers represented by this unit.
    pub n_monomers: u32,
}

impl CellParams {
    pub fn new(r1: f64, r2: f64, l: f64, c0: f64, b: f64) -> Result<Self, ParamsError> {
        let p = Self {
            r1,
            r2,
            l,
            c0,
            b,
            n_monomers: 1,
        };
        p.validate()?;
        Ok(p)
    }

    /// Values used for pulse propagation and the unforced gates.
    pub fn reference() -> Self {
        Self {
            r1: 6.11e6,
            r2: 0.9e6,
            l: 1.7e-12,
            c0: 96e-18,
            b: 0.1,
            n_monomers: 1,
        }
    }

    /// Resistances used for the forced (sinusoidally driven) gates.
    pub fn forced_reference() -> Self {
        Self {
            r1: 9.23e6,
            r2: 1.32e6,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        require_positive("R1", self.r1)?;
        require_positive("R2", self.r2)?;
        require_positive("L", self.l)?;
        require_positive("C0", self.c0)?;
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(ParamsError::Domain {
                quantity: "b",
                requirement: "finite and >= 0",
                value: self.b,
            });
        }
        if self.n_monomers < 1 {
            return Err(ParamsError::Domain {
                quantity: "n_monomers",
                requirement: ">= 1",
                value: self.n_monomers as f64,
            });
        }
        Ok(())
    }

    /// Combine `n` copies of `self` into one lumped unit: R1, L and C0 add,
    /// R2 adds in parallel.
    pub fn lump(&self, n: u32) -> Result<Self, ParamsError> {
        if n < 1 {
            return Err(ParamsError::Domain {
                quantity: "lump size",
                requirement: ">= 1",
                value: n as f64,
            });
        }
        let k = n as f64;
        Ok(Self {
            r1: self.r1 * k,
            r2: self.r2 / k,
            l: self.l * k,
            c0: self.c0 * k,
            b: self.b,
            n_monomers: self.n_monomers * n,
        })
    }
}
