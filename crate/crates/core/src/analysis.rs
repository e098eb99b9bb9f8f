//! Observables extracted from traces: arrival times, propagation speed, line
//! energy and binary spacetime rasters.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Filament, LatticeState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("need at least two cells with arrivals, got {0}")]
    InsufficientArrivals(usize),
    #[error("arrival times do not increase along the filament (slope {0:e} s/m)")]
    NonPositiveSlope(f64),
    #[error("malformed PBM: {0}")]
    Pbm(String),
}

/// Sampled voltages of every monomer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub times_ns: Vec<f64>,
    /// `voltages[sample][cell]`, cell 0 = monomer 1.
    pub voltages: Vec<Vec<f64>>,
    pub config_fingerprint: String,
    pub settings_fingerprint: String,
}

impl Trace {
    pub fn n_samples(&self) -> usize {
        self.times_ns.len()
    }

    pub fn n_cells(&self) -> usize {
        self.voltages.first().map_or(0, Vec::len)
    }

    /// Time series of 1-based `cell`.
    pub fn cell(&self, cell: usize) -> impl Iterator<Item = f64> + '_ {
        self.voltages.iter().map(move |row| row[cell - 1])
    }

    pub fn end_time(&self) -> f64 {
        self.times_ns.last().copied().unwrap_or(0.0)
    }

    /// Largest voltage of `cell` over samples with `t >= t_end - window`.
    /// With `magnitude`, compares `|V|` instead of signed `V`.
    pub fn window_max(&self, cell: usize, window_ns: f64, magnitude: bool) -> f64 {
        let start = self.end_time() - window_ns - 1e-9;
        self.times_ns
            .iter()
            .zip(&self.voltages)
            .filter(|(t, _)| **t >= start)
            .map(|(_, row)| {
                let v = row[cell - 1];
                if magnitude {
                    v.abs()
                } else {
                    v
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `t_ns,V1,...,VN` with shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t_ns")?;
        for i in 1..=self.n_cells() {
            write!(out, ",V{i}")?;
        }
        writeln!(out)?;
        for (t, row) in self.times_ns.iter().zip(&self.voltages) {
            write!(out, "{t}")?;
            for v in row {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// First sample time at which each cell reaches `theta * v0`.
pub fn arrival_times(trace: &Trace, theta: f64, v0: f64) -> Vec<Option<f64>> {
    let level = theta * v0;
    (1..=trace.n_cells())
        .map(|cell| {
            trace
                .times_ns
                .iter()
                .zip(trace.cell(cell))
                .find(|(_, v)| *v >= level)
                .map(|(t, _)| *t)
        })
        .collect()
}

/// Speed in m/s from the least-squares slope of arrival time against position.
/// `arrivals[k]` belongs to cell `k + 1` at position `(k + 1) * monomer_length`.
pub fn speed_from_arrivals(
    arrivals: &[Option<f64>],
    monomer_length_m: f64,
) -> Result<f64, AnalysisError> {
    let points: Vec<(f64, f64)> = arrivals
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.map(|t| ((k + 1) as f64 * monomer_length_m, t * 1e-9)))
        .collect();
    if points.len() < 2 {
        return Err(AnalysisError::InsufficientArrivals(points.len()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_t = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxt: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_t)).sum();
    let slope = sxt / sxx;
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(AnalysisError::NonPositiveSlope(slope));
    }
    Ok(1.0 / slope)
}

pub fn estimate_speed(
    trace: &Trace,
    theta: f64,
    v0: f64,
    monomer_length_m: f64,
) -> Result<f64, AnalysisError> {
    speed_from_arrivals(&arrival_times(trace, theta, v0), monomer_length_m)
}

/// `sum 1/2 L C0 (dV/dt)^2 + 1/2 sum (V_{n+1} - V_n)^2` over the chain including
/// both grounded ends, with time in ns. Meaningful as a conserved quantity
/// only for `b = 0` and zero resistance.
pub fn line_energy(state: &LatticeState, filament: &Filament) -> f64 {
    let b = filament.b();
    let inertia = &filament.coeffs().inertia;
    let v: Vec<f64> = state
        .w
        .iter()
        .map(|&w| crate::model::invert_charge_map(w, b).unwrap_or(f64::NAN))
        .collect();
    let kinetic: f64 = v
        .iter()
        .zip(&state.u)
        .zip(inertia)
        .map(|((&vi, &ui), &a)| {
            let dv = ui * crate::model::charge_map_slope_inverse(vi, b);
            0.5 * a * dv * dv
        })
        .sum();
    let mut potential = 0.0;
    let mut prev = 0.0;
    for &vi in v.iter().chain(std::iter::once(&0.0)) {
        potential += 0.5 * (vi - prev) * (vi - prev);
        prev = vi;
    }
    kinetic + potential
}

/// Cells x samples bitmap. `get(cell, sample)` with 1-based cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub n_cells: usize,
    pub n_samples: usize,
    bits: Vec<bool>,
}

impl Raster {
    pub fn new(n_cells: usize, n_samples: usize) -> Self {
        Self {
            n_cells,
            n_samples,
            bits: vec![false; n_cells * n_samples],
        }
    }

    pub fn get(&self, cell: usize, sample: usize) -> bool {
        self.bits[(cell - 1) * self.n_samples + sample]
    }

    pub fn set(&mut self, cell: usize, sample: usize, on: bool) {
        self.bits[(cell - 1) * self.n_samples + sample] = on;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Raster) -> bool {
        self.n_cells == other.n_cells
            && self.n_samples == other.n_samples
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Black where `V >= theta * v0` (signed).
pub fn digitize_trace(trace: &Trace, theta: f64, v0: f64) -> Raster {
    let level = theta * v0;
    let mut raster = Raster::new(trace.n_cells(), trace.n_samples());
    for (s, row) in trace.voltages.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            raster.set(c + 1, s, v >= level);
        }
    }
    raster
}

/// Plain PBM (P1): width = samples, height = cells, top row = highest cell.
pub fn render_raster_pbm(raster: &Raster) -> Vec<u8> {
    let mut out = format!("P1\n{} {}\n", raster.n_samples, raster.n_cells).into_bytes();
    for cell in (1..=raster.n_cells).rev() {
        for s in 0..raster.n_samples {
            if s > 0 {
                out.push(b' ');
            }
            out.push(if raster.get(cell, s) { b'1' } else { b'0' });
        }
        out.push(b'\n');
    }
    out
}

/// Inverse of [`render_raster_pbm`]; accepts any whitespace layout of P1.
pub fn parse_raster_pbm(bytes: &[u8]) -> Result<Raster, AnalysisError> {
    let text = std::str::from_utf8(bytes).map_err(|e| AnalysisError::Pbm(e.to_string()))?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P1") {
        return Err(AnalysisError::Pbm("missing P1 magic".into()));
    }
    let mut dim = || -> Result<usize, AnalysisError> {
        tokens
            .next()
            .ok_or_else(|| AnalysisError::Pbm("missing dimensions".into()))?
            .parse()
            .map_err(|e: std::num::ParseIntError| AnalysisError::Pbm(e.to_string()))
    };
    let width = dim()?;
    let height = dim()?;
    let mut raster = Raster::new(height, width);
    let pixels: Vec<&str> = tokens.collect();
    if pixels.len() != width * height {
        return Err(AnalysisError::Pbm(format!(
            "expected {} pixels, found {}",
            width * height,
            pixels.len()
        )));
    }
    for (k, p) in pixels.iter().enumerate() {
        let row = k / width;
        let on = match *p {
            "1" => true,
            "0" => false,
            other => return Err(AnalysisError::Pbm(format!("bad pixel {other:?}"))),
        };
        raster.set(height - row, k % width, on);
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::CellParams;
    use proptest::prelude::*;

    fn synthetic(rows: Vec<Vec<f64>>, dt: f64) -> Trace {
        Trace {
            times_ns: (0..rows.len()).map(|k| k as f64 * dt).collect(),
            voltages: rows,
            config_fingerprint: String::new(),
            settings_fingerprint: String::new(),
        }
    }

    #[test]
    fn zero_trace_has_no_arrivals_and_blank_raster() {
        let t = synthetic(vec![vec![0.0; 5]; 10], 0.1);
        assert!(arrival_times(&t, 0.1, 1.0).iter().all(Option::is_none));
        assert_eq!(digitize_trace(&t, 0.1, 1.0).count_ones(), 0);
        assert!(estimate_speed(&t, 0.1, 1.0, 5.4e-9).is_err());
    }

    #[test]
    fn constructed_arrivals_give_exact_speed() {
        let l = 5.4e-9;
        let per_cell_ns = l / 16.0 * 1e9;
        let arrivals: Vec<Option<f64>> = (1..=12).map(|n| Some(n as f64 * per_cell_ns)).collect();
        let v = speed_from_arrivals(&arrivals, l).unwrap();
        assert!((v - 16.0).abs() < 1e-9, "{v}");
        let shifted: Vec<Option<f64>> = arrivals.iter().map(|t| t.map(|t| t + 2.5)).collect();
        let w = speed_from_arrivals(&shifted, l).unwrap();
        assert!((v - w).abs() < 1e-9);
        assert!(matches!(
            speed_from_arrivals(&[Some(1.0), None], l),
            Err(AnalysisError::InsufficientArrivals(1))
        ));
    }

    #[test]
    fn clamped_input_arrives_at_first_crossing_sample() {
        let rows: Vec<Vec<f64>> = (0..10).map(|k| vec![0.05 * k as f64, 0.0]).collect();
        let t = synthetic(rows, 0.5);
        assert_eq!(arrival_times(&t, 0.1, 1.0), vec![Some(1.0), None]);
    }

    #[test]
    fn pbm_examples() {
        let mut r = Raster::new(1, 1);
        assert_eq!(render_raster_pbm(&r), b"P1\n1 1\n0\n");
        r = Raster::new(2, 2);
        for c in 1..=2 {
            for s in 0..2 {
                r.set(c, s, true);
            }
        }
        assert_eq!(render_raster_pbm(&r), b"P1\n2 2\n1 1\n1 1\n");
    }

    #[test]
    fn pbm_top_row_is_highest_cell() {
        let mut r = Raster::new(3, 2);
        r.set(3, 1, true);
        assert_eq!(render_raster_pbm(&r), b"P1\n2 3\n0 1\n0 0\n0 0\n");
        assert!(parse_raster_pbm(b"P2\n1 1\n0\n").is_err());
        assert!(parse_raster_pbm(b"P1\n2 2\n0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn pbm_roundtrip(cells in 1usize..8, samples in 1usize..12, seed in any::<u64>()) {
            let mut r = Raster::new(cells, samples);
            let mut x = seed;
            for c in 1..=cells {
                for s in 0..samples {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    r.set(c, s, (x >> 33) & 1 == 1);
                }
            }
            prop_assert_eq!(parse_raster_pbm(&render_raster_pbm(&r)).unwrap(), r);
        }

        #[test]
        fn thresholds_are_monotone(values in prop::collection::vec(-1.0f64..1.0, 24), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
            let rows: Vec<Vec<f64>> = values.chunks(4).map(<[f64]>::to_vec).collect();
            let t = synthetic(rows, 0.1);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(digitize_trace(&t, hi, 1.0).is_subset_of(&digitize_trace(&t, lo, 1.0)));
            let a_lo = arrival_times(&t, lo, 1.0);
            let a_hi = arrival_times(&t, hi, 1.0);
            for (l, h) in a_lo.iter().zip(&a_hi) {
                if let Some(h) = h {
                    prop_assert!(l.unwrap() <= *h);
                }
            }
        }
    }

    #[test]
    fn energy_of_simple_states() {
        let f = Filament::uniform(
            5,
            CellParams {
                r1: 0.0,
                r2: 0.0,
                l: 1e-9,
                c0: 1e-9,
                b: 0.0,
                n_monomers: 1,
            },
        )
        .unwrap();
        assert_eq!(line_energy(&LatticeState::zeros(5), &f), 0.0);
        let mut s = LatticeState::zeros(5);
        s.w[2] = 0.5;
        // two bonds of length 0.5 around the excited cell
        assert!((line_energy(&s, &f) - 0.25).abs() < 1e-15);
        s.w[2] = 0.0;
        s.u[0] = 2.0;
        assert!((line_energy(&s, &f) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let t = synthetic(vec![vec![0.0, 0.5], vec![1.0, -0.25]], 0.01);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t_ns,V1,V2\n0,0e0,5e-1\n0.01,1e0,-2.5e-1\n"
        );
    }
}
