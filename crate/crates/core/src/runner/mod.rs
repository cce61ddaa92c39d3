//! Config-driven scenario runner: schema, built-in scenarios, execution,
//! sweeps and on-disk artifacts.

pub mod config;
pub mod exec;
pub mod output;
pub mod registry;
pub mod sweep;

pub use config::{Diagnostic, ScenarioConfig, StateSpec};
pub use exec::{run, RunOptions, RunRecord, Series, Stat, StateRecord};
pub use output::Table;
pub use registry::{find, ScenarioInfo, SCENARIOS};
pub use sweep::{sweep, SweepRecord};

use crate::error::Result;

/// Loads a built-in id or TOML path and applies `key=value` overrides.
pub fn load_table(source: &str, sets: &[String]) -> Result<toml::Table> {
    let mut table = registry::load_table(source)?;
    for s in sets {
        let (key, raw) =
            s.split_once('=').ok_or_else(|| crate::QmeError::config(s.as_str(), "overrides look like `key=value`"))?;
        config::set_path(&mut table, key.trim(), config::parse_value(raw.trim()))?;
    }
    Ok(table)
}

/// [`load_table`] followed by schema and semantic validation.
pub fn load_config(source: &str, sets: &[String]) -> Result<ScenarioConfig> {
    let cfg = config::from_table(load_table(source, sets)?)?;
    cfg.validate()?;
    Ok(cfg)
}
