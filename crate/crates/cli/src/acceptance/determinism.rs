use std::path::{Path, PathBuf};

use rayon::ThreadPoolBuilder;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{Ctx, Outcome};
use crate::config::ExperimentConfig;
use crate::experiments::{run, RunOptions};

/// Reduced versions of the shipped configs: same code paths, smaller sizes.
fn configs(seed: u64) -> Vec<serde_json::Value> {
    let xi = json!({"D": 1, "poly": {"2": 1.0}});
    vec![
        json!({"command": "solve", "seed": seed, "params": {
            "psi": {"separable_convex": {"h": {"affine": {"a": 0.2, "b": 0.5}}, "a": {"affine": {"a": 0.1, "b": 0.3}}}},
            "xi": xi, "partition": {"uniform": 3}, "times": [0.0, 0.5, 1.0],
            "samples": [[0.0, 0.0, 0.0], [0.1, 0.4, 0.9], [0.2, 0.2, 0.3], [1.0, 1.0, 1.5]],
            "method": "hopf_lax"}}),
        json!({"command": "converge", "seed": seed, "params": {
            "psi": {"composed_concave": {"h": {"affine": {"a": 0.0, "b": 1.0}}}},
            "xi": xi, "first": 4, "last": 16, "points": 8, "radius": 2.0, "t_max": 1.0}}),
        json!({"command": "fm-verify", "params": {
            "partition": {"uniform": 2}, "x_max": 2.0, "steps": 12,
            "function": {"separable": {"h": [0.2, 0.6], "a": [0.3, 0.5]}}}}),
        json!({"command": "compare", "params": {
            "psi": {"piecewise_linear_mean": {"value0": 0.0, "breaks": [0.5], "slopes": [0.3, 0.8]}},
            "xi": xi, "dx": 0.01, "horizon": 1.0, "time_steps": 4, "r": 2.0, "stride": 4,
            "negative_control": 4.0}}),
        json!({"command": "spinglass", "seed": seed, "params": {
            "N_list": [4, 6], "beta": 0.5, "t_list": [0.25, 0.5],
            "measure": {"atoms": [0.0, 0.3], "levels": [0.0, 0.5, 1.0]},
            "replicas": 200, "bound": false}}),
    ]
}

fn csv_hashes(files: &[PathBuf], root: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "csv"))
        .map(|f| {
            let bytes = std::fs::read(f).unwrap_or_default();
            let name = f.strip_prefix(root).unwrap_or(f).display().to_string();
            (name, Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
        })
        .collect();
    out.sort();
    out
}

fn scratch(tag: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos());
    std::env::temp_dir().join(format!("conehj-determinism-{}-{nanos}-{tag}", std::process::id()))
}

pub fn determinism(ctx: &mut Ctx) -> Outcome {
    let mut runs: Vec<Vec<(String, String)>> = Vec::new();
    let mut errors = Vec::new();
    for threads in [1, 3] {
        let root = scratch(&threads.to_string());
        let pool = match ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(p) => p,
            Err(e) => return Outcome::new(false, format!("thread pool: {e}")),
        };
        let mut hashes = Vec::new();
        for (i, cfg) in configs(ctx.seed).into_iter().enumerate() {
            let parsed = match ExperimentConfig::parse(&cfg.to_string()) {
                Ok(c) => c,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            let opts = RunOptions { out: root.join(format!("run{i}")), ..RunOptions::default() };
            match pool.install(|| run(&parsed, &opts)) {
                Ok(o) => hashes.extend(csv_hashes(&o.files, &root)),
                Err(e) => errors.push(format!("{}: {e:#}", parsed.command().as_str())),
            }
        }
        let _ = std::fs::remove_dir_all(&root);
        runs.push(hashes);
    }
    let same = runs[0] == runs[1];
    let n = runs[0].len();
    let differing: Vec<&str> =
        runs[0].iter().zip(&runs[1]).filter(|(a, b)| a != b).map(|(a, _)| a.0.as_str()).collect();
    Outcome::new(
        errors.is_empty() && same && n > 0,
        if !errors.is_empty() {
            format!("run errors: {}", errors.join("; "))
        } else if same {
            format!("{n} CSVs byte-identical under 1 and 3 threads")
        } else {
            format!("CSVs differ across thread counts: {}", differing.join(", "))
        },
    )
}
