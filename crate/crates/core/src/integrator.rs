//! Time stepping.
//!
//! With physical parameters the damping rate R1/L is ~4e18 1/s while the
//! interesting dynamics live on the ns scale, so the default method is the
//! implicit trapezoidal rule. Each step solves for the new rates `U` with
//! Newton's method; the Jacobian couples a unit only to its two neighbours and
//! is solved with a tridiagonal sweep. RK4 is kept as a reference method for
//! non-stiff test configurations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Trace;
use crate::fingerprint;
use crate::model::{
    drive_terms, effective_fields, invert_charge_map, rhs_first_order, ClampSchedule, Filament,
    LatticeState, ModelError,
};
use crate::stimuli::{apply_stimuli, StimulusError, StimulusSpec};
use crate::tridiag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error("invalid run settings: {0}")]
    Settings(String),
    #[error("Newton iteration did not converge at t = {t_ns} ns after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged {
        t_ns: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("non-finite value at unit {unit}, t = {t_ns} ns")]
    NonFinite { t_ns: f64, unit: usize },
}

impl SimError {
    /// True for failures of the physics/numerics, false for bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SimError::Model(ModelError::DomainExceeded { .. })
                | SimError::NewtonDiverged { .. }
                | SimError::NonFinite { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    ImplicitTrapezoidal,
    ExplicitRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub t_end_ns: f64,
    pub dt_ns: f64,
    pub sample_every_ns: f64,
    pub method: Method,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            t_end_ns: 10.0,
            dt_ns: 1e-3,
            sample_every_ns: 1e-2,
            method: Method::ImplicitTrapezoidal,
            newton_tol: 1e-10,
            newton_max_iters: 25,
        }
    }
}

impl RunSettings {
    pub fn with_t_end(mut self, t_end_ns: f64) -> Self {
        self.t_end_ns = t_end_ns;
        self
    }

    pub fn with_dt(mut self, dt_ns: f64) -> Self {
        self.dt_ns = dt_ns;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Settings(msg));
        if !(self.dt_ns.is_finite() && self.dt_ns > 0.0) {
            return bad(format!("dt_ns must be > 0, got {}", self.dt_ns));
        }
        if !(self.sample_every_ns >= self.dt_ns && self.sample_every_ns.is_finite()) {
            return bad(format!(
                "sample_every_ns ({}) must be >= dt_ns ({})",
                self.sample_every_ns, self.dt_ns
            ));
        }
        if !(self.t_end_ns >= self.sample_every_ns && self.t_end_ns.is_finite()) {
            return bad(format!(
                "t_end_ns ({}) must be >= sample_every_ns ({})",
                self.t_end_ns, self.sample_every_ns
            ));
        }
        let ratio = self.sample_every_ns / self.dt_ns;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "sample_every_ns ({}) must be an integer multiple of dt_ns ({})",
                self.sample_every_ns, self.dt_ns
            ));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return bad(format!("newton_tol must be > 0, got {}", self.newton_tol));
        }
        if self.newton_max_iters == 0 {
            return bad("newton_max_iters must be >= 1".into());
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.sample_every_ns / self.dt_ns).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.t_end_ns / self.sample_every_ns + 1e-9).floor() as usize + 1
    }
}

fn check_finite(state: &LatticeState) -> Result<(), SimError> {
    for (i, (w, u)) in state.w.iter().zip(&state.u).enumerate() {
        if !(w.is_finite() && u.is_finite()) {
            return Err(SimError::NonFinite {
                t_ns: state.t_ns,
                unit: i + 1,
            });
        }
    }
    Ok(())
}

fn max_abs<'a>(xs: impl Iterator<Item = &'a f64>) -> f64 {
    xs.fold(0.0, |m, x| m.max(x.abs()))
}

/// One trapezoidal step. Returns the number of Newton iterations used.
pub fn step_implicit(
    state: &mut LatticeState,
    filament: &Filament,
    clamps: &ClampSchedule,
    dt_ns: f64,
    newton_tol: f64,
    newton_max_iters: usize,
) -> Result<usize, SimError> {
    let n = filament.n_units();
    let b = filament.b();
    let c = filament.coeffs();
    let h = 0.5 * dt_ns;
    let t0 = state.t_ns;
    let t1 = t0 + dt_ns;

    let (v0, u0) = effective_fields(&state.w, &state.u, filament, clamps, t0)?;
    let mut f0 = vec![0.0; n];
    drive_terms(&v0, &u0, filament, clamps, &mut f0);

    let mut w1 = state.w.clone();
    let mut v1 = v0.clone();
    let mut u1 = u0.clone();
    let free: Vec<bool> = (0..n).map(|i| !clamps.is_clamped(i)).collect();
    for i in 0..n {
        if let Some((v, w, u)) = clamps.imposed(i, t1, b) {
            v1[i] = v;
            w1[i] = w;
            u1[i] = u;
        }
    }

    let mut f1 = vec![0.0; n];
    let mut slope = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut residual = f64::INFINITY;

    let update_voltages = |w1: &mut [f64], v1: &mut [f64], u1: &[f64]| -> Result<(), SimError> {
        for i in 0..n {
            if free[i] {
                w1[i] = state.w[i] + h * (u0[i] + u1[i]);
                v1[i] =
                    invert_charge_map(w1[i], b).map_err(|limit| ModelError::DomainExceeded {
                        unit: i + 1,
                        t_ns: t1,
                        w: w1[i],
                        limit,
                    })?;
            }
        }
        Ok(())
    };

    for iteration in 1..=newton_max_iters {
        update_voltages(&mut w1, &mut v1, &u1)?;
        drive_terms(&v1, &u1, filament, clamps, &mut f1);
        for i in 0..n {
            slope[i] = if free[i] {
                1.0 / (1.0 - 2.0 * b * v1[i])
            } else {
                0.0
            };
        }
        residual = 0.0;
        for i in 0..n {
            if !free[i] {
                lower[i] = 0.0;
                upper[i] = 0.0;
                diag[i] = 1.0;
                delta[i] = 0.0;
                continue;
            }
            let g = c.inertia[i] * (u1[i] - u0[i]) - h * (f0[i] + f1[i]);
            residual = residual.max(g.abs());
            delta[i] = -g;
            diag[i] =
                c.inertia[i] + h * c.series[i] + 2.0 * h * c.coupling[i] + 2.0 * h * h * slope[i];
            lower[i] = if i > 0 && free[i - 1] {
                -h * c.coupling[i] - h * h * slope[i - 1]
            } else {
                0.0
            };
            upper[i] = if i + 1 < n && free[i + 1] {
                -h * c.coupling[i] - h * h * slope[i + 1]
            } else {
                0.0
            };
        }
        tridiag::solve_in_place(&lower, &mut diag, &upper, &mut delta);
        for i in 0..n {
            u1[i] += delta[i];
        }
        let step = max_abs(delta.iter());
        let scale = max_abs(u1.iter());
        if !step.is_finite() {
            break;
        }
        if step == 0.0 || step <= newton_tol * scale {
            update_voltages(&mut w1, &mut v1, &u1)?;
            state.w = w1;
            state.u = u1;
            state.t_ns = t1;
            check_finite(state)?;
            return Ok(iteration);
        }
    }
    Err(SimError::NewtonDiverged {
        t_ns: t1,
        residual,
        iterations: newton_max_iters,
    })
}

/// One classical RK4 step.
pub fn step_rk4(
    state: &mut LatticeState,
    filament: &Filament,
    clamps: &ClampSchedule,
    dt_ns: f64,
) -> Result<(), SimError> {
    let t0 = state.t_ns;
    let eval = |w: &[f64], u: &[f64], t: f64| -> Result<(Vec<f64>, Vec<f64>), SimError> {
        let s = LatticeState {
            w: w.to_vec(),
            u: u.to_vec(),
            t_ns: t,
        };
        Ok(rhs_first_order(&s, filament, clamps, t)?)
    };
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
    };
    let (k1w, k1u) = eval(&state.w, &state.u, t0)?;
    let (k2w, k2u) = eval(
        &axpy(&state.w, 0.5 * dt_ns, &k1w),
        &axpy(&state.u, 0.5 * dt_ns, &k1u),
        t0 + 0.5 * dt_ns,
    )?;
    let (k3w, k3u) = eval(
        &axpy(&state.w, 0.5 * dt_ns, &k2w),
        &axpy(&state.u, 0.5 * dt_ns, &k2u),
        t0 + 0.5 * dt_ns,
    )?;
    let (k4w, k4u) = eval(
        &axpy(&state.w, dt_ns, &k3w),
        &axpy(&state.u, dt_ns, &k3u),
        t0 + dt_ns,
    )?;
    for i in 0..state.len() {
        state.w[i] += dt_ns / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        state.u[i] += dt_ns / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
    }
    state.t_ns = t0 + dt_ns;
    state.enforce_clamps(clamps, filament.b());
    check_finite(state)
}

/// Advance by `dt_ns` with the configured method.
pub fn step(
    state: &mut LatticeState,
    filament: &Filament,
    clamps: &ClampSchedule,
    settings: &RunSettings,
) -> Result<(), SimError> {
    match settings.method {
        Method::ImplicitTrapezoidal => step_implicit(
            state,
            filament,
            clamps,
            settings.dt_ns,
            settings.newton_tol,
            settings.newton_max_iters,
        )
        .map(|_| ()),
        Method::ExplicitRk4 => step_rk4(state, filament, clamps, settings.dt_ns),
    }
}

/// A failed run together with everything sampled before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: SimError,
    pub partial: Option<Box<Trace>>,
}

impl From<SimError> for RunFailure {
    fn from(error: SimError) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

/// Integrate from t = 0 to `t_end_ns`, sampling every monomer's voltage.
pub fn run_simulation(
    filament: &Filament,
    stimuli: &[StimulusSpec],
    settings: &RunSettings,
) -> Result<Trace, RunFailure> {
    settings.validate()?;
    let (mut state, clamps) = apply_stimuli(filament, stimuli).map_err(SimError::from)?;
    let b = filament.b();
    let steps_per_sample = settings.steps_per_sample();
    let n_samples = settings.n_samples();

    let mut trace = Trace {
        times_ns: Vec::with_capacity(n_samples),
        voltages: Vec::with_capacity(n_samples),
        config_fingerprint: fingerprint(&(filament, stimuli)),
        settings_fingerprint: fingerprint(settings),
    };
    let record = |trace: &mut Trace, state: &LatticeState, t: f64| -> Result<(), SimError> {
        let v = state.voltages(b)?;
        trace.times_ns.push(t);
        trace.voltages.push(filament.expand_to_monomers(&v));
        Ok(())
    };
    if let Err(e) = record(&mut trace, &state, 0.0) {
        return Err(RunFailure {
            error: e,
            partial: Some(Box::new(trace)),
        });
    }
    let mut step_index = 0usize;
    for k in 1..n_samples {
        for _ in 0..steps_per_sample {
            if let Err(e) = step(&mut state, filament, &clamps, settings) {
                return Err(RunFailure {
                    error: e,
                    partial: Some(Box::new(trace)),
                });
            }
            step_index += 1;
            state.t_ns = step_index as f64 * settings.dt_ns;
            state.enforce_clamps(&clamps, b);
        }
        let t = k as f64 * settings.sample_every_ns;
        if let Err(e) = record(&mut trace, &state, t) {
            return Err(RunFailure {
                error: e,
                partial: Some(Box::new(trace)),
            });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dt_ns: f64,
    /// max over samples and cells of |V(dt) - V(dt/2)|.
    pub max_abs_diff: f64,
}

/// Compare a run at `dt` against the same run at `dt/2`.
pub fn convergence_report(
    filament: &Filament,
    stimuli: &[StimulusSpec],
    settings: &RunSettings,
) -> Result<ConvergenceReport, RunFailure> {
    let coarse = run_simulation(filament, stimuli, settings)?;
    let fine_settings = settings.with_dt(settings.dt_ns / 2.0);
    let fine = run_simulation(filament, stimuli, &fine_settings)?;
    let max_abs_diff = coarse
        .voltages
        .iter()
        .zip(&fine.voltages)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok(ConvergenceReport {
        dt_ns: settings.dt_ns,
        max_abs_diff,
    })
}
