//! Name-keyed registries of interchangeable strategies.
//!
//! Each algorithm family (pump gain maps, noise-reduction estimators,
//! cosmic-ray filters) is a trait; concrete variants are registered under a
//! stable name together with a factory that reads its parameters from the
//! run configuration.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Builds a boxed strategy from its JSON parameters.
pub type Factory<T> = fn(&Map<String, Value>) -> Result<Box<T>>;

/// A strategy selection as it appears in a config file: `{"name": "...", ...params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRef {
    pub name: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl StrategyRef {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: Map::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            factories: BTreeMap::new(),
        }
    }

    /// Registers (or replaces) a factory under `name`.
    pub fn register(&mut self, name: &str, factory: Factory<T>) -> &mut Self {
        self.factories.insert(name.to_string(), factory);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, selection: &StrategyRef) -> Result<Box<T>> {
        let factory = self
            .factories
            .get(&selection.name)
            .ok_or_else(|| Error::UnknownStrategy {
                family: self.family,
                name: selection.name.clone(),
            })?;
        factory(&selection.params)
    }

    pub fn build_named(&self, name: &str) -> Result<Box<T>> {
        self.build(&StrategyRef::named(name))
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Reads an optional `f64` parameter.
pub(crate) fn param_f64(params: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Config(format!("parameter `{key}` must be a number"))),
    }
}
