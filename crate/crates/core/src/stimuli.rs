//! Input excitations: the decaying tanh step, sinusoids and constant holds,
//! applied either as initial voltages or as clamps for the whole run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{charge_map, ClampSchedule, Filament, LatticeState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StimulusError {
    #[error("stimulus cell {cell} outside 1..={n_cells}")]
    CellOutOfRange { cell: usize, n_cells: usize },
    #[error("cell {cell} is targeted by more than one stimulus")]
    Overlap { cell: usize },
    #[error("initial voltage {v} at cell {cell} is beyond the charge-map branch limit {limit}")]
    Domain { cell: usize, v: f64, limit: f64 },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("stimulus has no cells")]
    Empty,
}

/// Unit-amplitude waveform shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `1/2 - tanh(t - t0)/2`: holds 1, falls through 1/2 at `t0`, ends at 0.
    TanhStep {
        t0_ns: f64,
    },
    Sine {
        amplitude: f64,
        period_ns: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    Constant {
        value: f64,
    },
}

/// A shape multiplied by `scale` volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waveform {
    pub shape: Shape,
    pub scale: f64,
}

impl Waveform {
    pub fn new(shape: Shape, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn validate(&self) -> Result<(), StimulusError> {
        if !self.scale.is_finite() {
            return Err(StimulusError::InvalidWaveform(format!(
                "scale must be finite, got {}",
                self.scale
            )));
        }
        match self.shape {
            Shape::Sine {
                amplitude,
                period_ns,
                phase_rad,
            } => {
                if !(period_ns.is_finite() && period_ns > 0.0) {
                    return Err(StimulusError::InvalidWaveform(format!(
                        "sine period must be > 0, got {period_ns}"
                    )));
                }
                if !(amplitude.is_finite() && phase_rad.is_finite()) {
                    return Err(StimulusError::InvalidWaveform(
                        "sine amplitude and phase must be finite".into(),
                    ));
                }
            }
            Shape::TanhStep { t0_ns } if !t0_ns.is_finite() => {
                return Err(StimulusError::InvalidWaveform("t0 must be finite".into()));
            }
            Shape::Constant { value } if !value.is_finite() => {
                return Err(StimulusError::InvalidWaveform(
                    "value must be finite".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Voltage at `t_ns`.
    pub fn value(&self, t_ns: f64) -> f64 {
        self.scale
            * match self.shape {
                Shape::TanhStep { t0_ns } => eval_tanh_step(t_ns, t0_ns),
                Shape::Sine {
                    amplitude,
                    period_ns,
                    phase_rad,
                } => eval_sine(t_ns, amplitude, period_ns, phase_rad),
                Shape::Constant { value } => value,
            }
    }

    /// dV/dt in V/ns.
    pub fn derivative(&self, t_ns: f64) -> f64 {
        self.scale
            * match self.shape {
                Shape::TanhStep { t0_ns } => {
                    let c = (t_ns - t0_ns).cosh();
                    -0.5 / (c * c)
                }
                Shape::Sine {
                    amplitude,
                    period_ns,
                    phase_rad,
                } => {
                    let omega = std::f64::consts::TAU / period_ns;
                    amplitude * omega * (omega * t_ns + phase_rad).cos()
                }
                Shape::Constant { .. } => 0.0,
            }
    }
}

pub fn eval_tanh_step(t_ns: f64, t0_ns: f64) -> f64 {
    0.5 - 0.5 * (t_ns - t0_ns).tanh()
}

pub fn eval_sine(t_ns: f64, amplitude: f64, period_ns: f64, phase_rad: f64) -> f64 {
    amplitude * (std::f64::consts::TAU * t_ns / period_ns + phase_rad).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Set `V` at t = 0 (with `U = 0`) and let the cell evolve freely.
    Initial,
    /// Impose the waveform for the whole run.
    Clamp,
}

fn default_scale() -> f64 {
    1.0
}

/// A waveform applied to a set of monomers (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusSpec {
    pub cells: Vec<usize>,
    pub mode: Mode,
    pub waveform: Shape,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

impl StimulusSpec {
    pub fn new(cells: Vec<usize>, mode: Mode, waveform: Shape) -> Self {
        Self {
            cells,
            mode,
            waveform,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn waveform(&self) -> Waveform {
        Waveform::new(self.waveform, self.scale)
    }
}

/// Build the t = 0 state and the clamp schedule for a set of stimuli.
///
/// Cells of a lumped group all address the group's unit. Two stimuli may not
/// touch the same unit.
pub fn apply_stimuli(
    filament: &Filament,
    specs: &[StimulusSpec],
) -> Result<(LatticeState, ClampSchedule), StimulusError> {
    let n_units = filament.n_units();
    let b = filament.b();
    let mut state = LatticeState::zeros(n_units);
    let mut clamps = ClampSchedule::none(n_units);
    let mut owner: Vec<Option<usize>> = vec![None; n_units];

    for (k, spec) in specs.iter().enumerate() {
        if spec.cells.is_empty() {
            return Err(StimulusError::Empty);
        }
        let waveform = spec.waveform();
        waveform.validate()?;
        for &cell in &spec.cells {
            let unit = filament
                .unit_of(cell)
                .ok_or(StimulusError::CellOutOfRange {
                    cell,
                    n_cells: filament.n_monomers(),
                })?;
            match owner[unit] {
                Some(j) if j == k => continue,
                Some(_) => return Err(StimulusError::Overlap { cell }),
                None => owner[unit] = Some(k),
            }
            match spec.mode {
                Mode::Initial => {
                    let v = waveform.value(0.0);
                    if b > 0.0 && v > 0.5 / b {
                        return Err(StimulusError::Domain {
                            cell,
                            v,
                            limit: 0.5 / b,
                        });
                    }
                    state.w[unit] = charge_map(v, b);
                }
                Mode::Clamp => {
                    clamps.set(unit, waveform);
                }
            }
        }
    }
    state.enforce_clamps(&clamps, b);
    Ok((state, clamps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::CellParams;

    #[test]
    fn tanh_step_examples() {
        assert_eq!(eval_tanh_step(3.0, 3.0), 0.5);
        assert!((eval_tanh_step(-1e3, 3.0) - 1.0).abs() < 1e-15);
        assert!(eval_tanh_step(1e3, 3.0).abs() < 1e-15);
        let expected = (1.0 - (-3.0f64).tanh()) / 2.0;
        assert!((eval_tanh_step(0.0, 3.0) - expected).abs() < 1e-15);
        assert!((eval_tanh_step(0.0, 3.0) - 0.99753).abs() < 1e-5);
    }

    #[test]
    fn tanh_step_matches_exponential_form() {
        for i in 0..=4000 {
            let t = -20.0 + 0.01 * i as f64;
            let t0 = 3.0;
            let (ep, em) = ((t - t0).exp(), (-t + t0).exp());
            let exp_form = 0.5 - (ep - em) / (2.0 * (ep + em));
            assert!((eval_tanh_step(t, t0) - exp_form).abs() < 1e-14, "t = {t}");
        }
    }

    #[test]
    fn sine_examples() {
        assert_eq!(eval_sine(0.0, 1.0, 1.0, 0.0), 0.0);
        assert!((eval_sine(0.25, 1.0, 1.0, 0.0) - 1.0).abs() < 1e-15);
        for i in 0..100 {
            let t = 0.037 * i as f64;
            let a = eval_sine(t, 1.0, 1.0, 0.0);
            let b = eval_sine(t, 1.0, 1.0, std::f64::consts::PI);
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let shapes = [
            Shape::TanhStep { t0_ns: 3.0 },
            Shape::Sine {
                amplitude: 0.8,
                period_ns: 1.0,
                phase_rad: 0.3,
            },
            Shape::Constant { value: -1.0 },
        ];
        for shape in shapes {
            let wf = Waveform::new(shape, 1.5);
            for i in 0..50 {
                let t = 0.13 * i as f64;
                let h = 1e-5;
                let fd = (wf.value(t + h) - wf.value(t - h)) / (2.0 * h);
                assert!((fd - wf.derivative(t)).abs() < 1e-8, "{shape:?} at {t}");
            }
        }
    }

    #[test]
    fn waveform_validation() {
        let bad = Waveform::new(
            Shape::Sine {
                amplitude: 1.0,
                period_ns: 0.0,
                phase_rad: 0.0,
            },
            1.0,
        );
        assert!(bad.validate().is_err());
        assert!(Waveform::new(Shape::Constant { value: 1.0 }, f64::NAN)
            .validate()
            .is_err());
    }

    fn filament(n: usize) -> Filament {
        Filament::uniform(n, CellParams::reference()).unwrap()
    }

    fn hold(cells: Vec<usize>, v: f64) -> StimulusSpec {
        StimulusSpec::new(cells, Mode::Initial, Shape::Constant { value: v })
    }

    #[test]
    fn empty_stimuli_give_zero_state() {
        let (state, clamps) = apply_stimuli(&filament(20), &[]).unwrap();
        assert!(state.w.iter().chain(&state.u).all(|&x| x == 0.0));
        assert!(clamps.is_empty());
    }

    #[test]
    fn initial_inputs_set_charge_and_leave_rate_zero() {
        let (state, clamps) =
            apply_stimuli(&filament(20), &[hold(vec![8], 1.0), hold(vec![15], 1.0)]).unwrap();
        assert!(clamps.is_empty());
        for (i, &w) in state.w.iter().enumerate() {
            if i == 7 || i == 14 {
                assert!((w - 0.9).abs() < 1e-15);
            } else {
                assert_eq!(w, 0.0);
            }
        }
        assert!(state.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn not_gate_auxiliary_cell() {
        let (state, _) =
            apply_stimuli(&filament(20), &[hold(vec![9], -1.0), hold(vec![11], 1.0)]).unwrap();
        assert!((state.w[8] + 1.1).abs() < 1e-15);
        assert!((state.w[10] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn clamps_register_and_overlaps_fail() {
        let sine = Shape::Sine {
            amplitude: 1.0,
            period_ns: 1.0,
            phase_rad: 0.0,
        };
        let a = StimulusSpec::new(vec![8], Mode::Clamp, sine);
        let b = StimulusSpec::new(vec![8, 9], Mode::Clamp, sine);
        let (_, clamps) = apply_stimuli(&filament(20), std::slice::from_ref(&a)).unwrap();
        assert!(clamps.is_clamped(7));
        assert_eq!(
            apply_stimuli(&filament(20), &[a, b]),
            Err(StimulusError::Overlap { cell: 8 })
        );
    }

    #[test]
    fn bad_cells_and_domain() {
        assert!(matches!(
            apply_stimuli(&filament(20), &[hold(vec![21], 1.0)]),
            Err(StimulusError::CellOutOfRange { cell: 21, .. })
        ));
        assert!(matches!(
            apply_stimuli(&filament(20), &[hold(vec![3], 6.0)]),
            Err(StimulusError::Domain { .. })
        ));
    }

    #[test]
    fn lumped_group_cells_address_one_unit() {
        let f =
            Filament::with_lumped_groups(40, CellParams::forced_reference(), &[(10, 19)]).unwrap();
        let spec = StimulusSpec::new(
            (10..=19).collect(),
            Mode::Clamp,
            Shape::Constant { value: 0.5 },
        );
        let (state, clamps) = apply_stimuli(&f, &[spec]).unwrap();
        let unit = f.unit_of(10).unwrap();
        assert!(clamps.is_clamped(unit));
        assert!((state.w[unit] - charge_map(0.5, 0.1)).abs() < 1e-15);
    }
}
