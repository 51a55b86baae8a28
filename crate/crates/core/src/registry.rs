//! The TDM tool registry: tool metadata plus detection patterns.
//!
//! Patterns are regex cores without boundary anchors; token boundaries are
//! enforced by the detector so every pattern gets identical treatment.

use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Registry document shipped with the crate.
pub const SHIPPED_REGISTRY: &str = include_str!("../data/registry.json");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("cannot read registry: {0}")]
    Io(String),
    #[error("registry is not valid JSON: {0}")]
    Json(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate tool id `{0}`")]
    DuplicateToolId(String),
    #[error("tool `{tool_id}`: invalid pattern `{pattern}`: {message}")]
    InvalidPattern {
        tool_id: String,
        pattern: String,
        message: String,
    },
    #[error("{path}: unknown value `{value}`")]
    UnknownEnumValue { path: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolType {
    Linter,
    StaticAnalyzer,
    Formatter,
    LinterAnalyzer,
    ArchitectureAnalyzer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdmActivity {
    Identification,
    Measurement,
    Prevention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebtType {
    Code,
    Build,
    Security,
    Architecture,
}

/// Parses a snake_case enum value through serde so names stay in one place.
fn parse_enum<T: for<'de> Deserialize<'de>>(value: &str) -> Option<T> {
    serde_json::from_value(Value::String(value.to_string())).ok()
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolSpec {
    pub id: String,
    pub display_name: String,
    pub patterns: Vec<String>,
    pub tool_type: ToolType,
    pub tdm_activity: BTreeSet<TdmActivity>,
    pub debt_type: DebtType,
    #[serde(skip)]
    compiled: Vec<Regex>,
}

impl ToolSpec {
    pub fn compiled(&self) -> &[Regex] {
        &self.compiled
    }
}

impl PartialEq for ToolSpec {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.display_name == other.display_name
            && self.patterns == other.patterns
            && self.tool_type == other.tool_type
            && self.tdm_activity == other.tdm_activity
            && self.debt_type == other.debt_type
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Registry {
    pub version: String,
    /// Sorted by id.
    pub tools: Vec<ToolSpec>,
}

struct Fields<'a> {
    obj: &'a serde_json::Map<String, Value>,
    path: String,
}

impl<'a> Fields<'a> {
    fn schema(&self, field: &str, message: &str) -> RegistryError {
        RegistryError::Schema {
            path: format!("{}.{field}", self.path),
            message: message.to_string(),
        }
    }

    fn string(&self, field: &str) -> Result<&'a str, RegistryError> {
        match self.obj.get(field) {
            None => Err(self.schema(field, "missing required field")),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
            Some(Value::String(_)) => Err(self.schema(field, "must not be empty")),
            Some(_) => Err(self.schema(field, "expected a string")),
        }
    }

    fn strings(&self, field: &str) -> Result<Vec<&'a str>, RegistryError> {
        let items = match self.obj.get(field) {
            None => return Err(self.schema(field, "missing required field")),
            Some(Value::Array(items)) if !items.is_empty() => items,
            Some(Value::Array(_)) => return Err(self.schema(field, "must not be empty")),
            Some(_) => return Err(self.schema(field, "expected a list of strings")),
        };
        items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str().ok_or_else(|| RegistryError::Schema {
                    path: format!("{}.{field}[{i}]", self.path),
                    message: "expected a string".into(),
                })
            })
            .collect()
    }

    fn enum_value<T: for<'de> Deserialize<'de>>(
        &self,
        path: String,
        value: &str,
    ) -> Result<T, RegistryError> {
        parse_enum(value).ok_or_else(|| RegistryError::UnknownEnumValue {
            path,
            value: value.to_string(),
        })
    }
}

fn parse_tool(value: &Value, index: usize) -> Result<ToolSpec, RegistryError> {
    let path = format!("tools[{index}]");
    let obj = value.as_object().ok_or_else(|| RegistryError::Schema {
        path: path.clone(),
        message: "expected an object".into(),
    })?;
    let f = Fields { obj, path };

    let id = f.string("id")?;
    if !id
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return Err(f.schema("id", "must be lowercase letters, digits or `_`"));
    }
    let display_name = f.string("display_name")?;
    let patterns = f.strings("patterns")?;
    let tool_type = f.string("tool_type")?;
    let tool_type = f.enum_value(format!("{}.tool_type", f.path), tool_type)?;
    let activities = f
        .strings("tdm_activity")?
        .into_iter()
        .enumerate()
        .map(|(i, a)| f.enum_value(format!("{}.tdm_activity[{i}]", f.path), a))
        .collect::<Result<BTreeSet<TdmActivity>, _>>()?;
    let debt_type = f.string("debt_type")?;
    let debt_type = f.enum_value(format!("{}.debt_type", f.path), debt_type)?;

    let compiled = patterns
        .iter()
        .map(|p| {
            Regex::new(p).map_err(|e| RegistryError::InvalidPattern {
                tool_id: id.to_string(),
                pattern: p.to_string(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = patterns.iter().zip(&compiled).find(|(_, re)| re.is_match("")) {
        return Err(RegistryError::InvalidPattern {
            tool_id: id.to_string(),
            pattern: p.0.to_string(),
            message: "pattern matches the empty string".into(),
        });
    }

    Ok(ToolSpec {
        id: id.to_string(),
        display_name: display_name.to_string(),
        patterns: patterns.into_iter().map(str::to_string).collect(),
        tool_type,
        tdm_activity: activities,
        debt_type,
        compiled,
    })
}

impl Registry {
    /// Loads a registry document: either `{"version": .., "tools": [..]}` or
    /// a bare list of tool records.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| RegistryError::Json(e.to_string()))?;
        let (version, tools) = match &doc {
            Value::Array(items) => ("unversioned".to_string(), items),
            Value::Object(obj) => {
                let version = match obj.get("version") {
                    None => "unversioned".to_string(),
                    Some(Value::String(s)) => s.clone(),
                    Some(_) => {
                        return Err(RegistryError::Schema {
                            path: "version".into(),
                            message: "expected a string".into(),
                        })
                    }
                };
                match obj.get("tools") {
                    Some(Value::Array(items)) => (version, items),
                    Some(_) => {
                        return Err(RegistryError::Schema {
                            path: "tools".into(),
                            message: "expected a list".into(),
                        })
                    }
                    None => {
                        return Err(RegistryError::Schema {
                            path: "tools".into(),
                            message: "missing required field".into(),
                        })
                    }
                }
            }
            _ => {
                return Err(RegistryError::Schema {
                    path: "$".into(),
                    message: "expected an object or a list".into(),
                })
            }
        };

        let mut specs = Vec::with_capacity(tools.len());
        let mut seen = BTreeSet::new();
        for (i, value) in tools.iter().enumerate() {
            let spec = parse_tool(value, i)?;
            if !seen.insert(spec.id.clone()) {
                return Err(RegistryError::DuplicateToolId(spec.id));
            }
            specs.push(spec);
        }
        specs.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            version,
            tools: specs,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_REGISTRY).expect("shipped registry is valid")
    }

    pub fn get(&self, id: &str) -> Option<&ToolSpec> {
        self.tools
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.tools[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(|t| t.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

pub fn load_registry(data: &str) -> Result<Registry, RegistryError> {
    Registry::from_json(data)
}
