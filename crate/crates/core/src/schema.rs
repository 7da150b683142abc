//! Column contract for mixture-design tables.
//!
//! The canonical UHPC schema ships as a versioned JSON document with 17 mixture
//! inputs followed by 5 measured properties. Custom schemas are allowed for
//! synthetic or reduced problems; only [`FeatureSchema::uhpc`] enforces the
//! 17/5 shape.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UHPC_SCHEMA_JSON: &str = include_str!("../data/uhpc_schema.json");

pub const UHPC_INPUT_COUNT: usize = 17;
pub const UHPC_TARGET_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Input,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
    pub observed_min: f64,
    pub observed_max: f64,
    /// Reported sample mean, used as the default value for interactive entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn input(name: &str, unit: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            observed_min: min,
            observed_max: max,
            mean: None,
            sd: None,
            kind: ColumnKind::Input,
        }
    }

    pub fn target(name: &str, unit: &str, min: f64, max: f64) -> Self {
        Self {
            kind: ColumnKind::Target,
            ..Self::input(name, unit, min, max)
        }
    }

    pub fn in_range(&self, value: f64) -> bool {
        value >= self.observed_min && value <= self.observed_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(name: &str, columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Self {
            version: 1,
            name: name.to_string(),
            columns,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The 22-column UHPC mixture schema.
    pub fn uhpc() -> Self {
        let schema = Self::from_json(UHPC_SCHEMA_JSON).expect("bundled schema is valid");
        debug_assert_eq!(schema.inputs().count(), UHPC_INPUT_COUNT);
        schema
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        schema.validate()?;
        if schema.name == "uhpc-mixture" {
            let n_in = schema.inputs().count();
            let n_out = schema.targets().count();
            if n_in != UHPC_INPUT_COUNT || n_out != UHPC_TARGET_COUNT {
                return Err(Error::Schema(format!(
                    "uhpc-mixture schema needs {UHPC_INPUT_COUNT} inputs and \
                     {UHPC_TARGET_COUNT} targets, found {n_in} and {n_out}"
                )));
            }
        }
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column \"{}\"", c.name)));
            }
            if !(c.observed_min <= c.observed_max) {
                return Err(Error::Schema(format!(
                    "column \"{}\" has observed_min {} > observed_max {}",
                    c.name, c.observed_min, c.observed_max
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind == ColumnKind::Input)
    }

    pub fn targets(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind == ColumnKind::Target)
    }

    pub fn input_names(&self) -> Vec<String> {
        self.inputs().map(|c| c.name.clone()).collect()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets().map(|c| c.name.clone()).collect()
    }

    /// Resolves a target by column name or by its short alias
    /// (`compressive`, `flexural`, `tensile`, `flowability`, `porosity`).
    pub fn resolve_target(&self, key: &str) -> Result<String> {
        if let Some(c) = self.column(key) {
            if c.kind == ColumnKind::Target {
                return Ok(c.name.clone());
            }
            return Err(Error::InvalidArgument(format!(
                "\"{key}\" is an input column, not a target"
            )));
        }
        let lowered = key.trim().to_ascii_lowercase();
        let alias = match lowered.as_str() {
            "compressive" | "cs" => "Compressive strength",
            "flexural" | "fs" => "Flexural strength",
            "tensile" | "ts" => "Tensile strength",
            "flowability" | "sflow" | "slump" => "Slump flow",
            "porosity" | "p" => "Porosity",
            _ => return Err(Error::UnknownTarget(key.to_string())),
        };
        match self.column(alias) {
            Some(c) if c.kind == ColumnKind::Target => Ok(c.name.clone()),
            _ => Err(Error::UnknownTarget(key.to_string())),
        }
    }
}
