use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde_json::Value;

use actin_rlc::gates::{LibraryEntry, TruthTable};
use actin_rlc::{builtin_gate_library, parse_config, RunConfig};

use crate::error::{read_file, write_file, CliError};
use crate::simulate::execute;

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    /// `dotted.key=v1,v2,...`; repeat for a product grid (first key outermost).
    #[arg(long = "grid", required = true)]
    pub grid: Vec<String>,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct Axis {
    key: String,
    values: Vec<Value>,
}

fn parse_axis(raw: &str) -> Result<Axis, CliError> {
    let (key, values) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("grid {raw:?}: expected key=v1,v2,...")))?;
    if key.is_empty() {
        return Err(CliError::Config(format!("grid {raw:?}: empty key")));
    }
    let values: Vec<Value> = values
        .split(',')
        .map(|v| serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().into())))
        .collect();
    Ok(Axis {
        key: key.to_string(),
        values,
    })
}

fn grid_points(axes: &[Axis]) -> Vec<Vec<Value>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

/// Set `a.b.c` in `root`; every parent must already be an object.
fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut node = root;
    for part in parts {
        node = match node {
            Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| format!("{key}: no key {part:?}"))?,
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| format!("{key}: {part:?} is not an index"))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| format!("{key}: index {i} out of range"))?
            }
            _ => return Err(format!("{key}: {part:?} is not an object")),
        };
    }
    match node {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
            Ok(())
        }
        _ => Err(format!("{key}: parent is not an object")),
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Row {
    pub status: &'static str,
    pub speed_m_per_s: Option<f64>,
    pub readout_level: Option<f64>,
    pub bits: String,
    pub margin: Option<f64>,
    pub threshold_margin: Option<f64>,
    pub error: String,
}

impl Row {
    fn failed(status: &'static str, error: impl ToString) -> Self {
        Self {
            status,
            error: error.to_string(),
            ..Default::default()
        }
    }
}

fn status_of(e: &CliError) -> &'static str {
    match e.exit_code() {
        2 => "numerical_error",
        _ => "config_error",
    }
}

/// Distance of each readout's threshold from its nearest ON/OFF level, as a
/// fraction of v0; the smallest over readouts.
fn threshold_margin(entry: &LibraryEntry, table: &TruthTable) -> f64 {
    table
        .readout_names
        .iter()
        .map(|name| {
            let theta = match entry {
                LibraryEntry::Gate(g) => g
                    .readouts()
                    .find(|r| &r.name == name)
                    .map(|r| g.threshold_of(r))
                    .unwrap_or(g.threshold_fraction),
                LibraryEntry::Cascade(_) => table.threshold_fraction,
            };
            let (off, on) = table.level_gap(name);
            let level = theta * table.v0;
            (on - level).min(level - off) / table.v0
        })
        .fold(f64::INFINITY, f64::min)
}

fn table_bits(table: &TruthTable) -> String {
    table
        .readout_names
        .iter()
        .map(|n| {
            let col: String = table
                .column(n)
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            format!("{n}={col}")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn evaluate(config: &RunConfig) -> Row {
    let library = builtin_gate_library();
    if let Some(gate) = &config.gate {
        if gate.inputs.is_none() {
            let entry = match gate.resolve(library) {
                Ok(e) => e,
                Err(e) => return Row::failed("config_error", e),
            };
            return match entry.truth_table(library) {
                Ok(table) => Row {
                    status: "ok",
                    bits: table_bits(&table),
                    margin: Some(table.margin()),
                    threshold_margin: Some(threshold_margin(&entry, &table)),
                    ..Default::default()
                },
                Err(e) => {
                    let e = CliError::from(e);
                    Row::failed(status_of(&e), e)
                }
            };
        }
    }
    match execute(config) {
        Ok(out) => {
            let s = out.summary;
            let bits = match (&s.gate, &s.readout) {
                (Some(g), _) => g.rows[0]
                    .outputs
                    .iter()
                    .map(|o| format!("{}={}", o.name, o.bit as u8))
                    .collect::<Vec<_>>()
                    .join(";"),
                (None, Some(r)) => (r.bit as u8).to_string(),
                (None, None) => String::new(),
            };
            Row {
                status: "ok",
                speed_m_per_s: s.speed_m_per_s,
                readout_level: s.readout.as_ref().map(|r| r.level),
                bits,
                ..Default::default()
            }
        }
        Err(f) => Row::failed(status_of(&f.error), f.error),
    }
}

fn point_row(base: &Value, axes: &[Axis], point: &[Value]) -> Row {
    let mut doc = base.clone();
    for (axis, v) in axes.iter().zip(point) {
        if let Err(e) = set_dotted(&mut doc, &axis.key, v.clone()) {
            return Row::failed("config_error", e);
        }
    }
    let bytes = serde_json::to_vec(&doc).expect("serializable");
    match parse_config(&bytes, builtin_gate_library()) {
        Ok(config) => evaluate(&config),
        Err(e) => Row::failed("config_error", e),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.config)?;
    // Catch syntax errors and bad base configs before fanning out.
    parse_config(&bytes, builtin_gate_library())
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let axes: Vec<Axis> = args
        .grid
        .iter()
        .map(|g| parse_axis(g))
        .collect::<Result<_, _>>()?;
    let points = grid_points(&axes);
    let rows: Vec<Row> = points
        .par_iter()
        .map(|p| point_row(&base, &axes, p))
        .collect();

    let mut out = Vec::new();
    let header: Vec<String> = std::iter::once("point".to_string())
        .chain(axes.iter().map(|a| csv_field(&a.key)))
        .chain(
            [
                "status",
                "speed_m_per_s",
                "readout_level",
                "bits",
                "margin",
                "threshold_margin",
                "error",
            ]
            .map(String::from),
        )
        .collect();
    writeln!(out, "{}", header.join(",")).expect("in-memory write");
    for (i, (point, row)) in points.iter().zip(&rows).enumerate() {
        let mut fields = vec![i.to_string()];
        fields.extend(point.iter().map(|v| csv_field(&value_text(v))));
        fields.extend([
            row.status.to_string(),
            opt(row.speed_m_per_s),
            opt(row.readout_level),
            csv_field(&row.bits),
            opt(row.margin),
            opt(row.threshold_margin),
            csv_field(&row.error),
        ]);
        writeln!(out, "{}", fields.join(",")).expect("in-memory write");
    }
    match &args.out {
        Some(path) => write_file(path, &out)?,
        None => std::io::stdout()
            .write_all(&out)
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = parse_axis("filament.params.R1_ohm=6.11e6,6.11e5").unwrap();
        assert_eq!(a.key, "filament.params.R1_ohm");
        assert_eq!(a.values, vec![Value::from(6.11e6), Value::from(6.11e5)]);
        let m = parse_axis("run.method=explicit_rk4").unwrap();
        assert_eq!(m.values, vec![Value::from("explicit_rk4")]);
        assert!(parse_axis("nokey").is_err());
    }

    #[test]
    fn grid_order_is_first_key_outermost() {
        let axes = [parse_axis("a=1,2").unwrap(), parse_axis("b=3,4").unwrap()];
        let p = grid_points(&axes);
        let flat: Vec<String> = p
            .iter()
            .map(|q| q.iter().map(value_text).collect::<Vec<_>>().join(""))
            .collect();
        assert_eq!(flat, ["13", "14", "23", "24"]);
    }

    #[test]
    fn dotted_set() {
        let mut v: Value = serde_json::json!({"a": {"b": 1}, "l": [{"x": 1}]});
        set_dotted(&mut v, "a.b", Value::from(2)).unwrap();
        set_dotted(&mut v, "a.c", Value::from(3)).unwrap();
        set_dotted(&mut v, "l.0.x", Value::from(4)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"a": {"b": 2, "c": 3}, "l": [{"x": 4}]})
        );
        assert!(set_dotted(&mut v, "z.y", Value::from(1)).is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }
}
