#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use plap::{parse_config, RunConfig};

pub fn config_text(p: f64, alpha: f64, g1: &str, g2: &str, h: &str, extra: &str) -> String {
    format!(
        "seed = 1\n\n[problem]\np = {p:?}\nalpha = {alpha:?}\nn = 3\nf1 = \"1\"\nf2 = \"1\"\ng1 = \"{g1}\"\ng2 = \"{g2}\"\nh = \"{h}\"\n{extra}"
    )
}

pub fn config(p: f64, alpha: f64, g1: &str, g2: &str, h: &str) -> RunConfig {
    parse_config(&config_text(p, alpha, g1, g2, h, "")).unwrap()
}

/// The three reference problems: `p = 2`, `α = 0`, `g₁ = t`, `g₂ = 1` and `h = t, t⁶, t⁴`.
pub fn reference(h: &str) -> RunConfig {
    config(2.0, 0.0, "t", "1", h)
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_plap")).args(args).output().unwrap()
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

/// Parsed CSV rows keyed by header.
pub fn csv_rows(text: &str) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().unwrap().clone();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}
