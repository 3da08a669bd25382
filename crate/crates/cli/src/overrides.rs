//! One `--flag` per key of the tracking configuration.

use std::path::Path;

use clap::{Arg, ArgMatches, Command};
use splatpose::metrics_io::TrackConfig;
use toml::{Table, Value};

use crate::CliError;

/// A config leaf and the flag that overrides it.
pub struct Key {
    pub section: String,
    pub key: String,
    pub flag: String,
}

fn default_table() -> Table {
    toml::from_str(&TrackConfig::default().to_toml()).expect("default config parses")
}

/// Keys are addressed as `--lr-rot`; a name shared by two sections is
/// qualified as `--coarse-alpha-support`.
pub fn keys() -> Vec<Key> {
    let table = default_table();
    let mut leaves = Vec::new();
    for (section, v) in &table {
        if let Value::Table(t) = v {
            leaves.extend(t.keys().map(|k| (section.clone(), k.clone())));
        }
    }
    let shared = |k: &str| leaves.iter().filter(|(_, other)| other == k).count() > 1;
    leaves
        .iter()
        .map(|(section, key)| {
            let name = if shared(key) { format!("{section}_{key}") } else { key.clone() };
            Key {
                section: section.clone(),
                key: key.clone(),
                flag: name.replace('_', "-"),
            }
        })
        .collect()
}

pub fn add_args(cmd: Command) -> Command {
    cmd.next_help_heading("Config overrides").args(keys().into_iter().map(|k| {
        Arg::new(k.flag.clone())
            .long(k.flag)
            .value_name("VALUE")
            .allow_negative_numbers(true)
            .help(format!("{}.{}", k.section, k.key))
    }))
}

/// A bare word such as `adam` is taken as a string.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

pub fn apply(cfg: &TrackConfig, m: &ArgMatches) -> Result<TrackConfig, CliError> {
    let mut table: Table = toml::from_str(&cfg.to_toml()).expect("config round-trips");
    let mut changed = false;
    for k in keys() {
        if let Some(raw) = m.get_one::<String>(&k.flag) {
            let Some(Value::Table(section)) = table.get_mut(&k.section) else {
                unreachable!("section {} comes from the config itself", k.section);
            };
            section.insert(k.key, parse_value(raw));
            changed = true;
        }
    }
    if !changed {
        return Ok(cfg.clone());
    }
    let text = toml::to_string(&table).expect("table serializes");
    TrackConfig::from_toml(&text, Path::new("<command line>")).map_err(|e| CliError::Usage(e.to_string()))
}
