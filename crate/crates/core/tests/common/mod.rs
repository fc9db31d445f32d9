#![allow(dead_code)]

pub mod grad;

use std::path::PathBuf;

use ctxforge::config::ResolvedConfig;
use ctxforge::object::{load_exemplars, ExemplarOptions, ObjectExemplar};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repository root")
}

pub fn shapes() -> Vec<ObjectExemplar> {
    let opts = ExemplarOptions { side: Some(28), channels: 1, background_key: None };
    load_exemplars(&repo_root().join("assets/shapes"), 5, &opts).unwrap()
}

/// The `shapes` preset with its exemplar path made absolute.
pub fn shapes_config(extra: &[(&str, &str)]) -> ResolvedConfig {
    let dir = repo_root().join("assets/shapes").display().to_string();
    let mut pairs = vec![("data.exemplars".to_string(), dir)];
    pairs.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    ResolvedConfig::resolve(Some("shapes"), None, &pairs).unwrap()
}
