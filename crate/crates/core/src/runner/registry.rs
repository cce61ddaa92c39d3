//! Built-in scenarios, each a TOML config shipped with the crate.

use std::path::Path;

use crate::error::{QmeError, Result};

use super::config::{self, ScenarioConfig};

pub struct ScenarioInfo {
    pub id: &'static str,
    pub source: &'static str,
}

impl ScenarioInfo {
    pub fn config(&self) -> ScenarioConfig {
        config::from_str(self.source).expect("built-in scenarios are valid")
    }

    pub fn description(&self) -> String {
        self.config().description
    }
}

macro_rules! scenarios {
    ($($id:literal),* $(,)?) => {
        &[$(ScenarioInfo { id: $id, source: include_str!(concat!("../../scenarios/", $id, ".toml")) }),*]
    };
}

pub static SCENARIOS: &[ScenarioInfo] = scenarios![
    "fig1_type1",
    "fig1_type2",
    "fig2_grid",
    "fig3_random",
    "fig4_floquet_ed",
    "fig5_pxp",
    "fig5b_prethermal_inset",
    "sm_xxz_asymmetry",
    "sm_frobenius",
    "sm_variance",
    "sm_other_states",
    "sm_weak_entanglement",
    "sm_fixed_state",
    "sm_strong_weak",
];

pub fn find(id: &str) -> Option<&'static ScenarioInfo> {
    SCENARIOS.iter().find(|s| s.id == id)
}

/// Raw config table for a built-in id or a path to a TOML file.
pub fn load_table(source: &str) -> Result<toml::Table> {
    if let Some(info) = find(source) {
        return config::parse_toml(info.source);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(QmeError::config(
            "<config>",
            format!("`{source}` is neither a file nor a built-in scenario (see `qme list`)"),
        ));
    }
    config::parse_toml(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_parses_and_names_itself() {
        assert!(SCENARIOS.len() >= 13);
        for s in SCENARIOS {
            let c = s.config();
            assert_eq!(c.scenario, s.id);
            assert!(!c.description.is_empty());
        }
    }

    #[test]
    fn pxp_default_fits_the_memory_budget() {
        let c = find("fig5_pxp").unwrap().config();
        assert!(c.model.n_sites <= 18);
    }
}
