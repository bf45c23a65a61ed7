//! Configuration-driven experiment runner.
//!
//! [`run`] executes the experiment blocks of a [`ScenarioConfig`] in order
//! and writes, per run directory: the effective `config.toml`, one CSV per
//! block table, `summary.json` and `manifest.json` (checksums, wall-clock,
//! pass rollup). Every file except the manifest is a pure function of the
//! effective configuration.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use roughsde::StreamSpec;
use serde_json::{json, Map, Value};

pub use config::{parse_config, parse_config_str, Experiment, ScenarioConfig};
pub use error::{CliError, ConfigError, Result};
pub use manifest::{BlockEntry, FileEntry, RunManifest, MANIFEST_FILE};

use crate::error::io_err;
use crate::experiments::{run_block, Context};
use crate::manifest::file_entry;
use crate::output::sha256_bytes;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";

/// Master seed of the block at `index` in the config's block list; stable
/// under filtering.
pub fn block_seed(seed: u64, index: usize) -> u64 {
    StreamSpec::derive_master(seed, index as u64 + 1)
}

/// Unique block names: the block's `name`, else its kind, suffixed `_2`,
/// `_3`, ... on repeats.
pub fn block_names(config: &ScenarioConfig) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    config
        .experiments
        .iter()
        .map(|b| {
            let base = b.label().unwrap_or(b.kind()).to_string();
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}_{n}")
            }
        })
        .collect()
}

/// Run the blocks accepted by `filter` (all when `None`) into `out`.
///
/// A block that fails with an error is recorded in the manifest and the
/// run continues; the returned manifest reports it via
/// [`RunManifest::any_error`].
pub fn run(config: &ScenarioConfig, out: &Path, filter: Option<&dyn Fn(&Experiment) -> bool>) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let config_text = config.to_toml();
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, &config_text).map_err(io_err(&config_path))?;
    let config_hash = sha256_bytes(config_text.as_bytes());

    let field = config.scenario.field().map_err(|source| CliError::Block {
        block: "scenario".into(),
        source,
    })?;
    let domain = config.domain.build().map_err(|source| CliError::Block {
        block: "domain".into(),
        source,
    })?;

    let names = block_names(config);
    let mut blocks = Vec::new();
    let mut summaries = Map::new();
    for (index, (block, name)) in config.experiments.iter().zip(&names).enumerate() {
        if filter.is_some_and(|f| !f(block)) {
            continue;
        }
        info!("block {name} ({})", block.kind());
        let t0 = Instant::now();
        let ctx = Context {
            config,
            field: field.clone(),
            domain: domain.clone(),
            seed: block_seed(config.seed, index),
        };
        let mut entry = BlockEntry {
            name: name.clone(),
            kind: block.kind().into(),
            files: vec![],
            pass: None,
            error: None,
            wall_clock_s: 0.0,
        };
        match run_block(&ctx, block) {
            Ok(output) => {
                for (suffix, table) in &output.tables {
                    let file = if suffix.is_empty() {
                        format!("{name}.csv")
                    } else {
                        format!("{name}_{suffix}.csv")
                    };
                    table.write(&out.join(&file))?;
                    entry.files.push(file_entry(out, &file)?);
                }
                entry.pass = output.pass;
                summaries.insert(
                    name.clone(),
                    json!({ "kind": block.kind(), "pass": output.pass, "result": output.summary }),
                );
                if output.pass == Some(false) {
                    warn!("block {name}: check failed");
                }
            }
            Err(e) => {
                warn!("block {name}: {e}");
                entry.error = Some(e.to_string());
                summaries.insert(name.clone(), json!({ "kind": block.kind(), "error": e.to_string() }));
            }
        }
        entry.wall_clock_s = t0.elapsed().as_secs_f64();
        blocks.push(entry);
    }

    let pass = blocks.iter().all(|b| b.error.is_none() && b.pass != Some(false));
    let summary = json!({
        "config_hash": config_hash,
        "seed": config.seed,
        "pass": pass,
        "blocks": Value::Object(summaries),
    });
    let summary_path = out.join(SUMMARY_FILE);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n").map_err(io_err(&summary_path))?;

    let manifest = RunManifest {
        config_hash,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        blocks,
        files: vec![file_entry(out, CONFIG_FILE)?, file_entry(out, SUMMARY_FILE)?],
        wall_clock_s: started.elapsed().as_secs_f64(),
        pass,
    };
    manifest.write(out)?;
    Ok(manifest)
}
