//! Lattice dynamics of a chain of nonlinear RLC units.
//!
//! Each unit carries a charge-like variable `W = V - b V^2` (charge over C0)
//! and its rate `U = dW/dt`. For an unclamped unit `n`
//!
//! ```text
//! L C0 dU_n/dt = (V_{n+1} + V_{n-1} - 2 V_n) - R1 C0 U_n - R2 C0 (2 U_n - U_{n+1} - U_{n-1})
//! ```
//!
//! Both ends are grounded: the phantom neighbours outside the chain sit at
//! `V = 0, U = 0`. Clamped units follow an imposed waveform and feed their
//! analytic `V` and `U` to their neighbours.
//!
//! Time is in ns throughout this module; the SI coefficients are converted once
//! when a [`Filament`] is built.

use serde::Serialize;
use thiserror::Error;

use crate::params::CellParams;
use crate::stimuli::Waveform;

const NS_PER_S: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(
        "nonlinearity domain exceeded at unit {unit}, t = {t_ns} ns: W = {w} > 1/(4b) = {limit}"
    )]
    DomainExceeded {
        unit: usize,
        t_ns: f64,
        w: f64,
        limit: f64,
    },
    #[error("invalid filament: {0}")]
    InvalidFilament(String),
}

/// `W = v - b v^2`.
#[inline]
pub fn charge_map(v: f64, b: f64) -> f64 {
    v - b * v * v
}

/// Largest `W` that [`invert_charge_map`] accepts, `1/(4b)`.
#[inline]
pub fn charge_map_limit(b: f64) -> f64 {
    if b > 0.0 {
        0.25 / b
    } else {
        f64::INFINITY
    }
}

/// Inverse of [`charge_map`] on the branch through the origin.
///
/// Returns `Err(limit)` when `w > 1/(4b)`.
#[inline]
pub fn invert_charge_map(w: f64, b: f64) -> Result<f64, f64> {
    if b == 0.0 {
        return Ok(w);
    }
    let limit = charge_map_limit(b);
    if w > limit || w.is_nan() {
        return Err(limit);
    }
    let disc = (1.0 - 4.0 * b * w).max(0.0);
    // 2w / (1 + sqrt(.)) is the cancellation-free form of (1 - sqrt(.)) / 2b.
    Ok(2.0 * w / (1.0 + disc.sqrt()))
}

/// `dV/dW` at a given `V`.
#[inline]
pub fn charge_map_slope_inverse(v: f64, b: f64) -> f64 {
    1.0 / (1.0 - 2.0 * b * v)
}

/// Lattice of units plus the monomer numbering used by stimuli and readouts.
///
/// Monomers are numbered 1..=n_monomers. A lumped group of consecutive
/// monomers maps onto a single unit; every other monomer is its own unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Filament {
    units: Vec<CellParams>,
    unit_of_monomer: Vec<usize>,
    b: f64,
    #[serde(skip)]
    coeffs: Coefficients,
}

/// Per-unit coefficients in ns units.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Coefficients {
    /// L C0, ns^2.
    pub inertia: Vec<f64>,
    /// R1 C0, ns.
    pub series: Vec<f64>,
    /// R2 C0, ns.
    pub coupling: Vec<f64>,
}

impl Filament {
    /// `n` identical units.
    pub fn uniform(n: usize, params: CellParams) -> Result<Self, ModelError> {
        Self::from_units(vec![params; n])
    }

    /// One unit per entry; monomer `k` is unit `k`.
    ///
    /// Resistances may be zero here (lossless diagnostics); `L` and `C0` must
    /// be positive and `b` uniform.
    pub fn from_units(units: Vec<CellParams>) -> Result<Self, ModelError> {
        let mapping = (0..units.len()).collect();
        Self::build(units, mapping)
    }

    /// `n_monomers` copies of `base`, with each inclusive 1-based range in
    /// `groups` collapsed into one lumped unit.
    pub fn with_lumped_groups(
        n_monomers: usize,
        base: CellParams,
        groups: &[(usize, usize)],
    ) -> Result<Self, ModelError> {
        let mut sorted = groups.to_vec();
        sorted.sort_unstable();
        for &(lo, hi) in &sorted {
            if lo < 1 || hi < lo || hi > n_monomers {
                return Err(ModelError::InvalidFilament(format!(
                    "lumped group [{lo}, {hi}] outside 1..={n_monomers}"
                )));
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].0 <= pair[0].1 {
                return Err(ModelError::InvalidFilament(format!(
                    "lumped groups [{}, {}] and [{}, {}] overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        let mut units = Vec::new();
        let mut mapping = Vec::with_capacity(n_monomers);
        let mut monomer = 1;
        let mut next_group = sorted.iter().peekable();
        while monomer <= n_monomers {
            match next_group.peek() {
                Some(&&(lo, hi)) if lo == monomer => {
                    let size = (hi - lo + 1) as u32;
                    let lumped = base
                        .lump(size)
                        .map_err(|e| ModelError::InvalidFilament(e.to_string()))?;
                    units.push(lumped);
                    mapping.extend(std::iter::repeat_n(units.len() - 1, size as usize));
                    monomer = hi + 1;
                    next_group.next();
                }
                _ => {
                    units.push(base);
                    mapping.push(units.len() - 1);
                    monomer += 1;
                }
            }
        }
        Self::build(units, mapping)
    }

    fn build(units: Vec<CellParams>, unit_of_monomer: Vec<usize>) -> Result<Self, ModelError> {
        if units.len() < 2 {
            return Err(ModelError::InvalidFilament(format!(
                "need at least 2 units, got {}",
                units.len()
            )));
        }
        let b = units[0].b;
        if !(b.is_finite() && b >= 0.0) {
            return Err(ModelError::InvalidFilament(format!(
                "b must be >= 0, got {b}"
            )));
        }
        for (i, p) in units.iter().enumerate() {
            let ok = p.l > 0.0
                && p.c0 > 0.0
                && p.r1 >= 0.0
                && p.r2 >= 0.0
                && [p.l, p.c0, p.r1, p.r2].iter().all(|x| x.is_finite());
            if !ok {
                return Err(ModelError::InvalidFilament(format!(
                    "unit {} has invalid parameters {p:?}",
                    i + 1
                )));
            }
            if p.b != b {
                return Err(ModelError::InvalidFilament(
                    "b must be the same for every unit".into(),
                ));
            }
        }
        let coeffs = Coefficients {
            inertia: units
                .iter()
                .map(|p| p.l * p.c0 * NS_PER_S * NS_PER_S)
                .collect(),
            series: units.iter().map(|p| p.r1 * p.c0 * NS_PER_S).collect(),
            coupling: units.iter().map(|p| p.r2 * p.c0 * NS_PER_S).collect(),
        };
        Ok(Self {
            units,
            unit_of_monomer,
            b,
            coeffs,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_monomers(&self) -> usize {
        self.unit_of_monomer.len()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn units(&self) -> &[CellParams] {
        &self.units
    }

    /// Unit index (0-based) holding 1-based monomer `monomer`.
    pub fn unit_of(&self, monomer: usize) -> Option<usize> {
        monomer
            .checked_sub(1)
            .and_then(|i| self.unit_of_monomer.get(i).copied())
    }

    pub fn unit_of_monomer(&self) -> &[usize] {
        &self.unit_of_monomer
    }

    pub(crate) fn coeffs(&self) -> &Coefficients {
        &self.coeffs
    }

    /// Spread unit values over monomers.
    pub fn expand_to_monomers(&self, per_unit: &[f64]) -> Vec<f64> {
        self.unit_of_monomer.iter().map(|&u| per_unit[u]).collect()
    }
}

/// Per-unit imposed waveforms.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ClampSchedule {
    waveforms: Vec<Option<Waveform>>,
}

impl ClampSchedule {
    pub fn none(n_units: usize) -> Self {
        Self {
            waveforms: vec![None; n_units],
        }
    }

    pub fn len(&self) -> usize {
        self.waveforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveforms.iter().all(Option::is_none)
    }

    pub fn get(&self, unit: usize) -> Option<&Waveform> {
        self.waveforms.get(unit).and_then(Option::as_ref)
    }

    pub fn is_clamped(&self, unit: usize) -> bool {
        self.get(unit).is_some()
    }

    /// Returns the previous waveform if the unit was already clamped.
    pub fn set(&mut self, unit: usize, waveform: Waveform) -> Option<Waveform> {
        self.waveforms[unit].replace(waveform)
    }

    /// Imposed `(V, W, U)` for a clamped unit at `t_ns`; `U` in V/ns.
    pub fn imposed(&self, unit: usize, t_ns: f64, b: f64) -> Option<(f64, f64, f64)> {
        self.get(unit).map(|wf| {
            let v = wf.value(t_ns);
            let dv = wf.derivative(t_ns);
            (v, charge_map(v, b), (1.0 - 2.0 * b * v) * dv)
        })
    }
}

/// Charge-like state `W` and its rate `U` (V/ns) for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub t_ns: f64,
}

impl LatticeState {
    pub fn zeros(n_units: usize) -> Self {
        Self {
            w: vec![0.0; n_units],
            u: vec![0.0; n_units],
            t_ns: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Voltages of all units.
    pub fn voltages(&self, b: f64) -> Result<Vec<f64>, ModelError> {
        self.w
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                invert_charge_map(w, b).map_err(|limit| ModelError::DomainExceeded {
                    unit: i + 1,
                    t_ns: self.t_ns,
                    w,
                    limit,
                })
            })
            .collect()
    }

    /// Overwrite clamped units with their imposed values at `self.t_ns`.
    pub fn enforce_clamps(&mut self, clamps: &ClampSchedule, b: f64) {
        for i in 0..self.len() {
            if let Some((_, w, u)) = clamps.imposed(i, self.t_ns, b) {
                self.w[i] = w;
                self.u[i] = u;
            }
        }
    }
}

/// Voltages and rates with clamped units replaced by their imposed values.
pub(crate) fn effective_fields(
    w: &[f64],
    u: &[f64],
    filament: &Filament,
    clamps: &ClampSchedule,
    t_ns: f64,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let b = filament.b();
    let mut v = Vec::with_capacity(w.len());
    let mut rate = u.to_vec();
    for (i, &wi) in w.iter().enumerate() {
        if let Some((vc, _, uc)) = clamps.imposed(i, t_ns, b) {
            v.push(vc);
            rate[i] = uc;
        } else {
            let vi = invert_charge_map(wi, b).map_err(|limit| ModelError::DomainExceeded {
                unit: i + 1,
                t_ns,
                w: wi,
                limit,
            })?;
            v.push(vi);
        }
    }
    Ok((v, rate))
}

/// `L C0 dU/dt` for every unclamped unit (zero for clamped units), given
/// effective voltages and rates.
pub(crate) fn drive_terms(
    v: &[f64],
    u: &[f64],
    filament: &Filament,
    clamps: &ClampSchedule,
    out: &mut [f64],
) {
    let n = v.len();
    let c = filament.coeffs();
    for i in 0..n {
        if clamps.is_clamped(i) {
            out[i] = 0.0;
            continue;
        }
        let (vl, ul) = if i > 0 {
            (v[i - 1], u[i - 1])
        } else {
            (0.0, 0.0)
        };
        let (vr, ur) = if i + 1 < n {
            (v[i + 1], u[i + 1])
        } else {
            (0.0, 0.0)
        };
        let laplacian = vr + vl - 2.0 * v[i];
        out[i] = laplacian - c.series[i] * u[i] - c.coupling[i] * (2.0 * u[i] - ur - ul);
    }
}

/// First-order right-hand side `(dW/dt, dU/dt)` in ns units.
pub fn rhs_first_order(
    state: &LatticeState,
    filament: &Filament,
    clamps: &ClampSchedule,
    t_ns: f64,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let n = filament.n_units();
    assert_eq!(state.len(), n, "state and filament disagree on unit count");
    let (v, u) = effective_fields(&state.w, &state.u, filament, clamps, t_ns)?;
    let mut du = vec![0.0; n];
    drive_terms(&v, &u, filament, clamps, &mut du);
    let inertia = &filament.coeffs().inertia;
    let mut dw = vec![0.0; n];
    for i in 0..n {
        if clamps.is_clamped(i) {
            du[i] = 0.0;
        } else {
            dw[i] = u[i];
            du[i] /= inertia[i];
        }
    }
    Ok((dw, du))
}
