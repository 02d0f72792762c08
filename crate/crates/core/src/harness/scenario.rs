//! Scenario directories: `orders.json`, `constraints.json`, optional
//! `colors.json` and `config.json`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::buffer::BufferGeometry;
use crate::constraints::Constraint;
use crate::controller::{CompiledCatalog, ControllerConfig, SubstitutionStrategy};
use crate::domain::{BodyType, ColorInfo, Order, ScenarioCatalog};
use crate::paintshop::PaintShopConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub buffer: BufferGeometry,
    pub strategy: String,
    pub k: usize,
    pub paintshop: PaintShopConfig,
    /// Seconds after midnight at which a production day starts.
    pub day_boundary_seconds: i64,
    /// Body types beyond those used by the orders.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub body_types: Vec<BodyType>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario_id: "scenario".into(),
            buffer: BufferGeometry::BODY_BUFFER,
            strategy: "last_k_equal".into(),
            k: 3,
            paintshop: PaintShopConfig::default(),
            day_boundary_seconds: 0,
            body_types: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn strategy(&self) -> Result<SubstitutionStrategy, HarnessError> {
        SubstitutionStrategy::from_name(&self.strategy, self.k).map_err(HarnessError::Config)
    }

    /// Controller settings; a `last_k_*` strategy with `k = 0` turns substitution off.
    pub fn controller(&self) -> Result<ControllerConfig, HarnessError> {
        let strategy = self.strategy()?;
        if self.strategy.starts_with("last_k") && self.k == 0 {
            return Ok(ControllerConfig::last_k(0));
        }
        Ok(ControllerConfig {
            strategy,
            ..ControllerConfig::default()
        })
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        self.strategy()?;
        self.buffer
            .build::<()>()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.paintshop
            .check()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub catalog: ScenarioCatalog,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn compile(&self) -> Result<Arc<CompiledCatalog>, HarnessError> {
        CompiledCatalog::new(self.catalog.clone())
            .map(Arc::new)
            .map_err(HarnessError::Validation)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Loads and validates a scenario directory.
pub fn load_scenario(dir: &Path) -> Result<Scenario, HarnessError> {
    let scenario = load_unvalidated(dir)?;
    let report = crate::domain::validate_catalog(&scenario.catalog);
    if !report.is_ok() {
        return Err(HarnessError::Validation(report));
    }
    Ok(scenario)
}

pub(crate) fn load_unvalidated(dir: &Path) -> Result<Scenario, HarnessError> {
    let orders: Vec<Order> = read_json(&dir.join("orders.json"))?;
    let constraints: Vec<Constraint> = read_json(&dir.join("constraints.json"))?;
    let config_path = dir.join("config.json");
    let config: ScenarioConfig = if config_path.exists() {
        read_json(&config_path)?
    } else {
        ScenarioConfig::default()
    };
    config.check()?;
    let mut catalog = ScenarioCatalog::from_orders(orders, constraints);
    let colors_path = dir.join("colors.json");
    if colors_path.exists() {
        catalog.colors = read_json::<Vec<ColorInfo>>(&colors_path)?;
    }
    for b in &config.body_types {
        if !catalog.body_types.contains(b) {
            catalog.body_types.push(b.clone());
        }
    }
    catalog.body_types.sort();
    Ok(Scenario { catalog, config })
}

/// Writes a scenario directory that [`load_scenario`] reads back unchanged.
pub fn save_scenario(dir: &Path, scenario: &Scenario) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cat = &scenario.catalog;
    write_json(&dir.join("orders.json"), &cat.orders)?;
    write_json(&dir.join("constraints.json"), &cat.constraints)?;
    write_json(&dir.join("colors.json"), &cat.colors)?;
    let mut config = scenario.config.clone();
    let derived = ScenarioCatalog::from_orders(cat.orders.clone(), Vec::new()).body_types;
    config.body_types = cat
        .body_types
        .iter()
        .filter(|b| !derived.contains(b))
        .cloned()
        .collect();
    write_json(&dir.join("config.json"), &config)
}
