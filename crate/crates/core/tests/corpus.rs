//! Replays the checked-in fuzz corpus seeds through the fuzz targets' checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde_json::Value;
use slip_core::harness::{apply_overrides, read_results_csv, write_results_csv, ExperimentConfig};
use slip_core::percept::pgm::PgmImage;
use slip_core::policy::PolicyConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("config_json") {
        if let Ok(cfg) = ExperimentConfig::from_json(std::str::from_utf8(&bytes).unwrap()) {
            accepted += 1;
            cfg.policy_config()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn override_seeds() {
    let base = PolicyConfig::default();
    let mut accepted = 0;
    for (_, bytes) in seeds("overrides") {
        let map: BTreeMap<String, Value> = serde_json::from_slice(&bytes).unwrap();
        if let Ok(cfg) = apply_overrides(&base, &map) {
            accepted += 1;
            assert_ne!(cfg, base);
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn results_seeds_round_trip() {
    for (name, bytes) in seeds("results_csv") {
        let rows = read_results_csv(bytes.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        write_results_csv(&mut out, &rows).unwrap();
        if !rows.is_empty() {
            assert_eq!(out, bytes, "{name}");
        }
    }
}

#[test]
fn pgm_seeds_round_trip() {
    let mut decoded = 0;
    for (_, bytes) in seeds("pgm_decode") {
        if let Ok(img) = PgmImage::decode(&bytes) {
            decoded += 1;
            assert_eq!(img.data.len(), img.width * img.height);
            assert_eq!(PgmImage::decode(&img.encode()).unwrap(), img);
        }
    }
    assert!(decoded >= 2);
}
