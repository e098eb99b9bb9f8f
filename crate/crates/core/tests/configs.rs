//! Every shipped run configuration parses and validates.

use std::path::PathBuf;

use actin_rlc::{builtin_gate_library, parse_config};

fn shipped_configs() -> Vec<PathBuf> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files = Vec::new();
    for dir in ["pulses", "gates"] {
        for entry in std::fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                files.push(path);
            }
        }
    }
    files.sort();
    files
}

#[test]
fn shipped_configs_parse() {
    let files = shipped_configs();
    assert_eq!(files.len(), 12);
    for path in files {
        let bytes = std::fs::read(&path).unwrap();
        let config = parse_config(&bytes, builtin_gate_library())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(
            config.filament.is_some() != config.gate.is_some(),
            "{}",
            path.display()
        );
    }
}

#[test]
fn gate_configs_name_library_gates() {
    let lib = builtin_gate_library();
    let mut named: Vec<String> = shipped_configs()
        .iter()
        .filter_map(|p| {
            let config = parse_config(&std::fs::read(p).unwrap(), lib).unwrap();
            config.gate.and_then(|g| g.name)
        })
        .collect();
    named.sort();
    let mut all: Vec<String> = lib.names().map(String::from).collect();
    all.sort();
    assert_eq!(named, all);
}
