use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::CliError;

pub const SUBCOMMANDS: [&str; 4] = ["profile", "critical", "classify", "sweep"];

/// Artifact version and wall-clock stamp of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl Provenance {
    pub fn now() -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }
}

/// The fully merged invocation, echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub config_file: Option<String>,
    /// Every flag after merging the config file, angles in degrees.
    pub parameters: serde_json::Value,
    pub provenance: Provenance,
}

impl RunConfig {
    pub fn new<P: Serialize>(command: &str, config_file: Option<&str>, parameters: &P) -> Self {
        Self {
            command: command.to_string(),
            config_file: config_file.map(str::to_string),
            parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
            provenance: Provenance::now(),
        }
    }

    /// `# key = value` lines for CSV preambles.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# command = {}", self.command),
            format!("# version = {}", self.provenance.version),
            format!("# timestamp = {}", self.provenance.timestamp),
        ];
        if let Some(f) = &self.config_file {
            lines.push(format!("# config_file = {f}"));
        }
        if let serde_json::Value::Object(map) = &self.parameters {
            for (k, v) in map {
                lines.push(format!("# {k} = {v}"));
            }
        }
        lines
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::invalid(format!(
                "config line {}: expected key = value, got {raw:?}",
                i + 1
            )));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::invalid(format!("config line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Flag tokens equivalent to a config file. Booleans become bare flags
/// when true and are dropped when false.
pub fn config_tokens(entries: &BTreeMap<String, String>) -> Vec<String> {
    let mut tokens = Vec::new();
    for (k, v) in entries {
        match v.to_ascii_lowercase().as_str() {
            "true" => tokens.push(format!("--{k}")),
            "false" => {}
            _ => {
                tokens.push(format!("--{k}"));
                tokens.push(v.clone());
            }
        }
    }
    tokens
}

/// The `--config` path in raw arguments, if any.
pub fn find_config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Insert the config file's flags right after the subcommand so that
/// explicit flags, which come later, override them.
pub fn merge_config(args: Vec<String>) -> Result<(Vec<String>, Option<String>), CliError> {
    let Some(path) = find_config_path(&args) else {
        return Ok((args, None));
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::invalid(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    let Some(at) = args.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok((args, Some(path)));
    };
    let mut merged = args[..=at].to_vec();
    merged.extend(config_tokens(&entries));
    merged.extend_from_slice(&args[at + 1..]);
    Ok((merged, Some(path)))
}
