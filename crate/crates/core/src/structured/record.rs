use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::document::Skip;

/// One row of a testing database: ordered, uniquely named fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredRecord {
    pub record_id: String,
    pub fields: IndexMap<String, String>,
}

impl StructuredRecord {
    pub fn new<K: Into<String>, V: Into<String>>(
        record_id: impl Into<String>,
        fields: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        StructuredRecord {
            record_id: record_id.into(),
            fields: fields.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("reading {path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}: unsupported record file extension (expected .csv or .jsonl)")]
    Extension(String),
}

#[derive(Debug, Clone, Default)]
pub struct RecordLoad {
    pub records: Vec<StructuredRecord>,
    pub skipped: Vec<Skip>,
}

/// Load records from a CSV file with a header row or a JSONL file of flat
/// objects. Record ids are `<file stem>-<row number>`, assigned before any
/// redaction so they never carry field content.
pub fn load_records(path: &Path) -> Result<RecordLoad, RecordError> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let display = path.display().to_string();
    let read_err = |message: String| RecordError::Read {
        path: display.clone(),
        message,
    };
    let mut out = RecordLoad::default();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| read_err(e.to_string()))?;
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| read_err(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect();
            if let Some(dup) = first_duplicate(&header) {
                return Err(read_err(format!("duplicate column {dup:?}")));
            }
            if header.iter().any(|h| h.is_empty()) {
                return Err(read_err("empty column name".into()));
            }
            for (i, row) in reader.records().enumerate() {
                let row_id = format!("{stem}-{:06}", i + 1);
                match row {
                    Ok(row) if row.len() == header.len() => out.records.push(StructuredRecord::new(
                        row_id,
                        header.iter().cloned().zip(row.iter().map(str::to_string)),
                    )),
                    Ok(row) => out.skipped.push(Skip::new(
                        row_id,
                        format!("{} cells for {} columns", row.len(), header.len()),
                    )),
                    Err(e) => out.skipped.push(Skip::new(row_id, e.to_string())),
                }
            }
        }
        Some("jsonl") => {
            let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row_id = format!("{stem}-{:06}", i + 1);
                match parse_json_record(line) {
                    Ok(fields) => out.records.push(StructuredRecord {
                        record_id: row_id,
                        fields,
                    }),
                    Err(reason) => out.skipped.push(Skip::new(row_id, reason)),
                }
            }
        }
        _ => return Err(RecordError::Extension(display)),
    }
    Ok(out)
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = std::collections::HashSet::new();
    names.iter().find(|n| !seen.insert(n.as_str())).map(String::as_str)
}

fn parse_json_record(line: &str) -> Result<IndexMap<String, String>, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let Value::Object(object) = value else {
        return Err("record line is not a JSON object".into());
    };
    let mut fields = IndexMap::new();
    for (name, value) in object {
        if name.is_empty() {
            return Err("empty field name".into());
        }
        let value = match value {
            Value::String(s) => s,
            Value::Null => String::new(),
            Value::Bool(_) | Value::Number(_) => value.to_string(),
            _ => return Err(format!("field {name:?} is not a scalar")),
        };
        fields.insert(name, value);
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lab.csv");
        std::fs::write(&path, "食品,检测项目,备注\n牛奶,铅,\"含,逗号\"\n面包,砷\n").unwrap();
        let load = load_records(&path).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.records[0].record_id, "lab-000001");
        assert_eq!(load.records[0].get("备注"), Some("含,逗号"));
        assert_eq!(load.skipped.len(), 1);
    }

    #[test]
    fn jsonl_records_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lab.jsonl");
        std::fs::write(&path, "{\"z\":\"1\",\"a\":2,\"m\":null}\n\n[1]\n").unwrap();
        let load = load_records(&path).unwrap();
        let names: Vec<&str> = load.records[0].fields.keys().map(String::as_str).collect();
        assert_eq!(names, ["z", "a", "m"]);
        assert_eq!(load.records[0].get("a"), Some("2"));
        assert_eq!(load.records[0].get("m"), Some(""));
        assert_eq!(load.skipped.len(), 1);
        assert_eq!(load.skipped[0].item, "lab-000003");
    }

    #[test]
    fn bad_extension() {
        assert!(matches!(load_records(Path::new("x.xlsx")), Err(RecordError::Extension(_))));
    }
}
