//! Config-file loading with command-line overrides: flags win over file
//! keys, and the merged result is validated as a whole.

use std::path::Path;

use vst_core::config::RunConfig;
use vst_core::{Error, Result};

fn parse_literal(raw: &str) -> toml::Value {
    // accept any TOML literal; fall back to a plain string
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut segments = key.split('.').collect::<Vec<_>>();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let last = segments.pop().expect("nonempty key");
    let mut table = root;
    for seg in segments {
        table = table
            .entry(seg)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {seg} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Read a run config and apply `key=value` overrides on top.
pub fn load_run_config(path: &Path, sets: &[String]) -> Result<RunConfig> {
    if !path.is_file() {
        return Err(Error::Config(format!("config file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = text
        .parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("config parse: {e}")))?;
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {set:?} is not KEY=VALUE")))?;
        apply_override(&mut table, key.trim(), parse_literal(value.trim()))?;
    }
    RunConfig::from_toml(&toml::to_string(&table).expect("table serialises"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_parse_with_types() {
        assert_eq!(parse_literal("42"), toml::Value::Integer(42));
        assert_eq!(parse_literal("0.5"), toml::Value::Float(0.5));
        assert_eq!(parse_literal("true"), toml::Value::Boolean(true));
        assert_eq!(parse_literal("\"basic\""), toml::Value::String("basic".into()));
        assert_eq!(parse_literal("basic"), toml::Value::String("basic".into()));
    }

    #[test]
    fn overrides_create_intermediate_tables() {
        let mut table = toml::Table::new();
        apply_override(&mut table, "train.seed", toml::Value::Integer(9)).unwrap();
        assert_eq!(table["train"]["seed"], toml::Value::Integer(9));
    }
}
