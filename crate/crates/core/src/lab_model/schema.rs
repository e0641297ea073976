//! Parameter schemas for workflows and tool inputs.
//!
//! A [`ParameterSchema`] is a flat map of named properties. It converts to and
//! from the JSON Schema subset that travels in MCP `tools/list` responses.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    String,
    Number,
    Integer,
    Boolean,
    Enum,
    /// Free-form JSON object. Only used by tool inputs that carry nested
    /// workflow parameters (`create_job.parameters`).
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    #[serde(rename = "type")]
    pub kind: ValueType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default)]
    pub description: String,
}

impl PropertySpec {
    pub fn new(kind: ValueType, required: bool, description: &str) -> Self {
        Self {
            kind,
            required,
            allowed_values: None,
            min: None,
            max: None,
            description: description.to_string(),
        }
    }

    pub fn one_of(required: bool, values: &[&str], description: &str) -> Self {
        Self {
            allowed_values: Some(values.iter().map(|v| v.to_string()).collect()),
            ..Self::new(ValueType::Enum, required, description)
        }
    }

    pub fn range(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }
}

/// One offending argument, reported by schema validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Renders a list of field errors as `a: msg; b: msg`.
pub fn describe_field_errors(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchema {
    pub properties: BTreeMap<String, PropertySpec>,
}

impl ParameterSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, spec: PropertySpec) -> Self {
        self.properties.insert(name.to_string(), spec);
        self
    }

    pub fn required_names(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|(_, p)| p.required)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Checks the schema itself: `allowed_values` only on enums (and non-empty
    /// there), `min <= max`.
    pub fn check_well_formed(&self) -> Result<(), FieldError> {
        for (name, prop) in &self.properties {
            match (&prop.allowed_values, prop.kind) {
                (Some(_), kind) if kind != ValueType::Enum => {
                    return Err(FieldError::new(name, "allowed_values only valid for enum"));
                }
                (None, ValueType::Enum) => {
                    return Err(FieldError::new(
                        name,
                        "enum property without allowed_values",
                    ));
                }
                (Some(values), ValueType::Enum) if values.is_empty() => {
                    return Err(FieldError::new(
                        name,
                        "enum property with no allowed values",
                    ));
                }
                _ => {}
            }
            if let (Some(min), Some(max)) = (prop.min, prop.max) {
                if min > max {
                    return Err(FieldError::new(name, "min greater than max"));
                }
            }
        }
        Ok(())
    }

    /// Validates a set of arguments. All problems are collected, sorted by
    /// field name.
    pub fn validate(&self, args: &Map<String, Value>) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        for (name, prop) in &self.properties {
            match args.get(name) {
                None | Some(Value::Null) => {
                    if prop.required {
                        errors.push(FieldError::new(name, "required parameter missing"));
                    }
                }
                Some(value) => {
                    if let Err(msg) = check_value(prop, value) {
                        errors.push(FieldError::new(name, msg));
                    }
                }
            }
        }
        for name in args.keys() {
            if !self.properties.contains_key(name) {
                errors.push(FieldError::new(name, "unknown parameter"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            errors.sort_by(|a, b| a.field.cmp(&b.field));
            Err(errors)
        }
    }

    /// JSON Schema form used for MCP `inputSchema`.
    pub fn to_json_schema(&self) -> Value {
        let mut props = Map::new();
        for (name, prop) in &self.properties {
            let mut p = Map::new();
            let ty = match prop.kind {
                ValueType::String | ValueType::Enum => "string",
                ValueType::Number => "number",
                ValueType::Integer => "integer",
                ValueType::Boolean => "boolean",
                ValueType::Object => "object",
            };
            p.insert("type".into(), json!(ty));
            if let Some(values) = &prop.allowed_values {
                p.insert("enum".into(), json!(values));
            }
            if let Some(min) = prop.min {
                p.insert("minimum".into(), json!(min));
            }
            if let Some(max) = prop.max {
                p.insert("maximum".into(), json!(max));
            }
            if !prop.description.is_empty() {
                p.insert("description".into(), json!(prop.description));
            }
            props.insert(name.clone(), Value::Object(p));
        }
        json!({
            "type": "object",
            "properties": props,
            "required": self.required_names(),
        })
    }

    pub fn from_json_schema(schema: &Value) -> Result<Self, FieldError> {
        let required: Vec<&str> = schema
            .get("required")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        let mut out = ParameterSchema::new();
        let Some(props) = schema.get("properties").and_then(Value::as_object) else {
            return Ok(out);
        };
        for (name, p) in props {
            let ty = p.get("type").and_then(Value::as_str).unwrap_or("string");
            let allowed: Option<Vec<String>> = p.get("enum").and_then(Value::as_array).map(|a| {
                a.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_string)
                    .collect()
            });
            let kind = match (ty, &allowed) {
                ("string", Some(_)) => ValueType::Enum,
                ("string", None) => ValueType::String,
                ("number", _) => ValueType::Number,
                ("integer", _) => ValueType::Integer,
                ("boolean", _) => ValueType::Boolean,
                ("object", _) => ValueType::Object,
                (other, _) => {
                    return Err(FieldError::new(name, format!("unsupported type {other}")))
                }
            };
            out.properties.insert(
                name.clone(),
                PropertySpec {
                    kind,
                    required: required.contains(&name.as_str()),
                    allowed_values: allowed,
                    min: p.get("minimum").and_then(Value::as_f64),
                    max: p.get("maximum").and_then(Value::as_f64),
                    description: p
                        .get("description")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                },
            );
        }
        out.check_well_formed()?;
        Ok(out)
    }
}

fn check_value(prop: &PropertySpec, value: &Value) -> Result<(), String> {
    let numeric = match prop.kind {
        ValueType::String => {
            return value
                .is_string()
                .then_some(())
                .ok_or_else(|| format!("expected string, got {}", type_name(value)))
        }
        ValueType::Boolean => {
            return value
                .is_boolean()
                .then_some(())
                .ok_or_else(|| format!("expected boolean, got {}", type_name(value)))
        }
        ValueType::Object => {
            return value
                .is_object()
                .then_some(())
                .ok_or_else(|| format!("expected object, got {}", type_name(value)))
        }
        ValueType::Enum => {
            let Some(s) = value.as_str() else {
                return Err(format!("expected string, got {}", type_name(value)));
            };
            let allowed = prop.allowed_values.as_deref().unwrap_or_default();
            return if allowed.iter().any(|a| a == s) {
                Ok(())
            } else {
                Err(format!("'{s}' not one of [{}]", allowed.join(", ")))
            };
        }
        ValueType::Number => value
            .as_f64()
            .ok_or_else(|| format!("expected number, got {}", type_name(value)))?,
        ValueType::Integer => match value.as_f64() {
            Some(x) if x.fract() == 0.0 => x,
            Some(_) => return Err("expected integer, got fractional number".into()),
            None => return Err(format!("expected integer, got {}", type_name(value))),
        },
    };
    if let Some(min) = prop.min {
        if numeric < min {
            return Err(format!("{numeric} below minimum {min}"));
        }
    }
    if let Some(max) = prop.max {
        if numeric > max {
            return Err(format!("{numeric} above maximum {max}"));
        }
    }
    Ok(())
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_schema() -> ParameterSchema {
        ParameterSchema::new()
            .with(
                "sample",
                PropertySpec::new(ValueType::String, true, "sample"),
            )
            .with(
                "temp",
                PropertySpec::new(ValueType::Number, false, "").range(Some(20.0), Some(80.0)),
            )
            .with("mode", PropertySpec::one_of(false, &["fast", "slow"], ""))
            .with(
                "replicates",
                PropertySpec::new(ValueType::Integer, false, ""),
            )
    }

    #[test]
    fn rejects_wrong_type_by_field() {
        let args = json!({"sample": 42}).as_object().unwrap().clone();
        let errs = sample_schema().validate(&args).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "sample");
    }

    #[test]
    fn collects_all_problems() {
        let args = json!({"temp": 100, "mode": "medium", "replicates": 1.5, "extra": true});
        let errs = sample_schema()
            .validate(args.as_object().unwrap())
            .unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["extra", "mode", "replicates", "sample", "temp"]);
    }

    #[test]
    fn integral_float_counts_as_integer() {
        let args = json!({"sample": "x", "replicates": 3.0});
        assert!(sample_schema().validate(args.as_object().unwrap()).is_ok());
    }

    #[test]
    fn well_formedness() {
        let bad = ParameterSchema::new().with(
            "x",
            PropertySpec::new(ValueType::Number, true, "").range(Some(2.0), Some(1.0)),
        );
        assert!(bad.check_well_formed().is_err());
        let mut spec = PropertySpec::new(ValueType::String, true, "");
        spec.allowed_values = Some(vec!["a".into()]);
        assert!(ParameterSchema::new()
            .with("y", spec)
            .check_well_formed()
            .is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let schema = sample_schema();
        let back = ParameterSchema::from_json_schema(&schema.to_json_schema()).unwrap();
        assert_eq!(back, schema);
    }
}
