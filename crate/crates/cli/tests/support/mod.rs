//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regex::Regex;
use serde_json::Value;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped(rel: &str) -> PathBuf {
    workspace_root().join("configs").join(rel)
}

pub fn actin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actin"))
        .args(args)
        .output()
        .expect("spawn actin")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `actin simulate config --out dir`, asserting success.
pub fn simulate(config: &Path, out: &Path) -> Output {
    let o = actin(&[
        "simulate",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}: {}", config.display(), stderr(&o));
    o
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

pub fn summary_schema() -> Value {
    read_json(&workspace_root().join("schemas/summary.schema.json"))
}

fn type_matches(name: &str, v: &Value) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        other => panic!("schema type {other:?} not supported"),
    }
}

/// Checks `value` against the keyword subset the summary schema uses. Returns
/// one message per violation, each prefixed with its JSON pointer.
pub fn schema_errors(schema: &Value, value: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check(schema, value, "", &mut errors);
    errors
}

fn check(schema: &Value, v: &Value, at: &str, errors: &mut Vec<String>) {
    let s = schema.as_object().expect("schema node is an object");
    let mut fail = |msg: String| errors.push(format!("{at}: {msg}"));
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(name) => type_matches(name, v),
            Value::Array(names) => names.iter().any(|n| type_matches(n.as_str().unwrap(), v)),
            _ => panic!("bad type keyword"),
        };
        if !ok {
            fail(format!("{v} is not of type {t}"));
            return;
        }
    }
    if let Some(c) = s.get("const") {
        if c != v {
            fail(format!("{v} != const {c}"));
        }
    }
    if let Some(Value::Array(options)) = s.get("enum") {
        if !options.contains(v) {
            fail(format!("{v} not in enum"));
        }
    }
    if let (Some(Value::String(p)), Value::String(text)) = (s.get("pattern"), v) {
        if !Regex::new(p).unwrap().is_match(text) {
            fail(format!("{text:?} does not match {p}"));
        }
    }
    if let Some(x) = v.as_f64() {
        let bound = |k: &str| s.get(k).and_then(Value::as_f64);
        if bound("minimum").is_some_and(|m| x < m) {
            fail(format!("{x} below minimum"));
        }
        if bound("exclusiveMinimum").is_some_and(|m| x <= m) {
            fail(format!("{x} not above exclusiveMinimum"));
        }
        if bound("exclusiveMaximum").is_some_and(|m| x >= m) {
            fail(format!("{x} not below exclusiveMaximum"));
        }
    }
    if let Value::Object(map) = v {
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(k) {
                    fail(format!("missing required key {k:?}"));
                }
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, child) in map {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => check(sub, child, &format!("{at}/{k}"), errors),
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errors.push(format!("{at}: unexpected key {k:?}"))
                }
                None => {}
            }
        }
    }
    if let (Value::Array(items), Some(item_schema)) = (v, s.get("items")) {
        for (i, item) in items.iter().enumerate() {
            check(item_schema, item, &format!("{at}/{i}"), errors);
        }
    }
}
