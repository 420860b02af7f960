//! Record lines: one JSON object per line, `record` and `schema` first,
//! then the fields of the record type. See `docs/records.md`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub fields: Map<String, Value>,
}

impl Record {
    /// Record of type `kind` holding the fields of `body`, which must
    /// serialize to an object.
    pub fn new(kind: &str, body: &impl Serialize) -> Self {
        let fields = match serde_json::to_value(body).expect("record bodies serialize") {
            Value::Object(m) => m,
            other => panic!("record body must be an object, got {other}"),
        };
        Record { kind: kind.to_string(), fields }
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("record".into(), Value::String(self.kind.clone()));
        m.insert("schema".into(), Value::from(SCHEMA_VERSION));
        for (k, v) in &self.fields {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }

    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }
}

/// Check a parsed line against the common envelope.
pub fn check_line(line: &str) -> Result<Value, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("record is not an object")?;
    let mut keys = obj.keys();
    if keys.next().map(String::as_str) != Some("record") || keys.next().map(String::as_str) != Some("schema") {
        return Err("record must start with `record` and `schema`".into());
    }
    if !obj["record"].is_string() {
        return Err("`record` must be a string".into());
    }
    if obj["schema"].as_u64() != Some(SCHEMA_VERSION as u64) {
        return Err(format!("unsupported schema {}", obj["schema"]));
    }
    Ok(v)
}

pub fn append(path: &Path, records: &[Record]) -> Result<(), CliError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for r in records {
        writeln!(f, "{}", r.to_line()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
