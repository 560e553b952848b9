//! Optional plain-text config file for `select`, merged under the
//! command-line flags (flags win).
//!
//! Format: one `key = value` per line; `#` starts a comment; blank
//! lines ignored. Keys: `input`, `output`, `k`, `min_s_w`, `tie_break`,
//! `report`, `jobs`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use pcpo_core::pipeline::{PipelineConfig, TieBreak};

use crate::SelectArgs;

fn parse_file(path: &PathBuf) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("config file {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected 'key = value'", idx + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let known = ["input", "output", "k", "min_s_w", "tie_break", "report", "jobs"];
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            return Err(format!("config: unknown key '{key}'"));
        }
    }
    Ok(map)
}

fn parsed<T: FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| format!("config key '{key}': {e}")))
        .transpose()
}

/// Merges CLI flags over the optional config file into a pipeline config.
pub fn resolve_select(args: SelectArgs) -> Result<PipelineConfig, String> {
    let file = match &args.config {
        Some(path) => parse_file(path)?,
        None => HashMap::new(),
    };

    let input = args
        .input
        .or_else(|| file.get("input").map(PathBuf::from))
        .ok_or("missing required option: --input")?;
    let output = args
        .output
        .or_else(|| file.get("output").map(PathBuf::from))
        .ok_or("missing required option: --output")?;

    let mut cfg = PipelineConfig::new(input, output);
    if let Some(k) = args.k.or(parsed(&file, "k")?) {
        if k == 0 {
            return Err("k must be at least 1".into());
        }
        cfg.k = k;
    }
    if let Some(min_s_w) = args.min_s_w.or(parsed(&file, "min_s_w")?) {
        if !(0.0..=1.0).contains(&min_s_w) {
            return Err("min_s_w must be within [0, 1]".into());
        }
        cfg.min_s_w = min_s_w;
    }
    let tie_break = args
        .tie_break
        .as_deref()
        .or_else(|| file.get("tie_break").map(String::as_str));
    if let Some(s) = tie_break {
        cfg.tie_break = TieBreak::from_str(s)?;
    }
    cfg.report = args.report.or_else(|| file.get("report").map(PathBuf::from));
    if let Some(jobs) = args.jobs.or(parsed(&file, "jobs")?) {
        if jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        cfg.jobs = jobs;
    }
    Ok(cfg)
}
