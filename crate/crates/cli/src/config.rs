//! Configuration layering: built-in defaults, then the `--config` file
//! section, then command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Contents of a `--config` JSON file. Each section holds any subset of the
/// fields of the matching configuration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub dataset: Option<Map<String, Value>>,
    #[serde(default)]
    pub vae: Option<Map<String, Value>>,
    #[serde(default)]
    pub gan: Option<Map<String, Value>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

/// Flag values that were actually given, keyed by config field name.
#[derive(Debug, Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0
                .insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }
}

/// `T::default()` overlaid with `section` and then `flags`.
pub fn resolve<T>(section: Option<&Map<String, Value>>, flags: &Overrides, what: &str) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default()).expect("config serializes") else {
        unreachable!("configs are structs");
    };
    for layer in section.into_iter().chain([&flags.0]) {
        for (k, v) in layer {
            merged.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::input(format!("{what} config: {e}")))
}
