//! `--config` support: a TOML table of flag names whose values are appended
//! after the command-line flags, so they take precedence.

use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use clap::{CommandFactory, FromArgMatches};

use crate::Cli;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn parse(args: &[OsString]) -> Cli {
    let matches = command().try_get_matches_from(args).unwrap_or_else(|e| e.exit());
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn scalar(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(ConfigError(format!("{key}: unsupported value {other}"))),
    }
}

/// Flag arguments for one config file.
pub fn config_args(path: &Path, subcommand: &str) -> Result<Vec<OsString>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let cmd = command();
    let sub = cmd.find_subcommand(subcommand).ok_or_else(|| ConfigError(format!("unknown command {subcommand}")))?;
    let mut out = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.as_str()))
            .ok_or_else(|| ConfigError(format!("{key} is not a flag of `{subcommand}`")))?;
        let repeated = matches!(arg.get_action(), clap::ArgAction::Append) && arg.get_value_delimiter().is_none();
        match value {
            toml::Value::Array(items) if repeated => {
                for item in items {
                    out.push(format!("--{flag}").into());
                    out.push(scalar(key, item)?.into());
                }
            }
            toml::Value::Array(items) => {
                let joined = items.iter().map(|i| scalar(key, i)).collect::<Result<Vec<_>, _>>()?.join(",");
                out.push(format!("--{flag}={joined}").into());
            }
            v => out.push(format!("--{flag}={}", scalar(key, v)?).into()),
        }
    }
    Ok(out)
}

pub fn parse_with_overrides(args: Vec<OsString>) -> anyhow::Result<Cli> {
    let first = parse(&args);
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let matches = command().try_get_matches_from(&args).unwrap_or_else(|e| e.exit());
    let sub = matches.subcommand_name().unwrap_or_default().to_string();
    let mut full = args;
    full.extend(config_args(&path, &sub)?);
    Ok(parse(&full))
}
