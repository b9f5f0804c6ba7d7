//! Parameter resolution: config file first, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use serde_json::{Map, Value};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    pub usage: Option<String>,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        Self {
            code: 2,
            message,
            usage: None,
        }
    }
}

impl From<optrec_core::Error> for CliError {
    fn from(e: optrec_core::Error) -> Self {
        use optrec_core::Error as E;
        let code = match e {
            E::ResourceCap { .. } | E::Overflow(_) => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
            usage: None,
        }
    }
}

/// Flat `key=value` lines; `#` comments; repeated keys accumulate.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, Vec<String>>, CliError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", i + 1)))?;
        out.entry(normalize(k.trim()))
            .or_default()
            .push(v.trim().to_string());
    }
    Ok(out)
}

fn normalize(key: &str) -> String {
    key.replace('_', "-")
}

/// Resolved parameters of one run. Lookups with defaults record the
/// default, so [`Params::run_config`] lists every value the run used.
pub struct Params {
    command: String,
    values: BTreeMap<String, Vec<String>>,
    usage: String,
}

fn flags(cmd: &Command, m: &ArgMatches, into: &mut BTreeMap<String, Vec<String>>) {
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if id == "config" || m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Some(raw) = m.get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            into.insert(normalize(id), vals);
        }
    }
}

impl Params {
    pub fn resolve(cli: &mut Command, top: &ArgMatches, config: Option<&Path>) -> Result<Self, CliError> {
        let (name, sub) = top.subcommand().expect("subcommand is required");
        let sub_cmd = cli.find_subcommand_mut(name).expect("known subcommand");
        let usage = sub_cmd
            .render_usage()
            .to_string()
            .replacen("Usage: ", "Usage: optrec ", 1);
        let sub_cmd = sub_cmd.clone();
        let mut values = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        flags(cli, top, &mut values);
        flags(&sub_cmd, sub, &mut values);
        let kind = values.remove("kind");
        let command = match kind {
            Some(k) => format!("{name} {}", k.join(" ")),
            None => name.to_string(),
        };
        Ok(Self {
            command,
            values,
            usage,
        })
    }

    pub fn run_config(&self) -> Value {
        let params: Map<String, Value> = self
            .values
            .iter()
            .map(|(k, v)| {
                let v = if v.len() == 1 {
                    Value::String(v[0].clone())
                } else {
                    Value::Array(v.iter().cloned().map(Value::String).collect())
                };
                (k.clone(), v)
            })
            .collect();
        serde_json::json!({ "command": self.command, "params": params })
    }

    /// Last value given for `key`.
    pub fn opt(&self, key: &str) -> Option<String> {
        self.values.get(key).and_then(|v| v.last().cloned())
    }

    pub fn get_or(&mut self, key: &str, default: &str) -> String {
        self.values
            .entry(key.to_string())
            .or_insert_with(|| vec![default.to_string()])
            .last()
            .cloned()
            .unwrap_or_default()
    }

    pub fn req(&self, key: &str) -> Result<String, CliError> {
        self.opt(key).ok_or_else(|| CliError {
            code: 2,
            message: format!("missing required parameter --{key}"),
            usage: Some(self.usage.clone()),
        })
    }

    pub fn parse<T: FromStr>(&self, key: &str, s: &str) -> Result<T, CliError> {
        s.trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad value for --{key}: {s:?}")))
    }

    pub fn parse_or<T: FromStr>(&mut self, key: &str, default: &str) -> Result<T, CliError> {
        let s = self.get_or(key, default);
        self.parse(key, &s)
    }

    pub fn parse_req<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let s = self.req(key)?;
        self.parse(key, &s)
    }

    fn split<T: FromStr>(&self, key: &str, vals: &[String]) -> Result<Vec<T>, CliError> {
        vals.iter()
            .flat_map(|v| v.split(','))
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| self.parse(key, t))
            .collect()
    }

    /// Comma-separated and/or repeated values.
    pub fn req_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.req(key)?;
        self.split(key, &self.values[key])
    }

    pub fn list_or<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError> {
        self.get_or(key, default);
        self.split(key, &self.values[key])
    }
}
