use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_markdown_table, render_markdown_table, StructuredRecord, TableError};
use crate::document::Skip;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Datav1Config {
    /// Fields that identify one food item; records sharing them form a group.
    pub group_fields: Vec<String>,
    /// Key under which the group's tests are stored as a markdown table.
    pub testing_item_key: String,
    /// Table columns. Empty means every non-grouping field, in order of
    /// first appearance within the group.
    pub item_fields: Vec<String>,
}

impl Default for Datav1Config {
    fn default() -> Self {
        Datav1Config {
            group_fields: vec!["食品名称".to_string()],
            testing_item_key: "检测项目".to_string(),
            item_fields: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Datav1Error {
    #[error("empty record group")]
    EmptyGroup,
    #[error("record {record_id} disagrees with its group on field {field:?}")]
    Disagree { record_id: String, field: String },
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datav1Example {
    /// Grouping fields as scalars, then the testing-item key holding the
    /// table.
    pub entries: IndexMap<String, String>,
    pub record_ids: Vec<String>,
    pub testing_item_key: String,
}

impl Datav1Example {
    /// Single-line dict rendering with escaped newlines, keys in entry order.
    pub fn render(&self) -> String {
        serde_json::to_string(&self.entries).expect("string map serializes")
    }

    pub fn table(&self) -> Result<(Vec<String>, Vec<Vec<String>>), TableError> {
        parse_markdown_table(self.entries.get(&self.testing_item_key).map_or("", String::as_str))
    }
}

/// Split records into food-item groups in order of first appearance.
/// Records missing a grouping field are skipped.
pub fn group_records(
    records: &[StructuredRecord],
    config: &Datav1Config,
) -> (Vec<Vec<StructuredRecord>>, Vec<Skip>) {
    let mut groups: IndexMap<Vec<String>, Vec<StructuredRecord>> = IndexMap::new();
    let mut skipped = Vec::new();
    for record in records {
        let key: Option<Vec<String>> = config
            .group_fields
            .iter()
            .map(|f| record.get(f).map(str::to_string))
            .collect();
        match key {
            Some(key) => groups.entry(key).or_default().push(record.clone()),
            None => skipped.push(Skip::new(&record.record_id, "missing grouping field")),
        }
    }
    (groups.into_values().collect(), skipped)
}

pub fn build_datav1(group: &[StructuredRecord], config: &Datav1Config) -> Result<Datav1Example, Datav1Error> {
    let first = group.first().ok_or(Datav1Error::EmptyGroup)?;
    let mut entries = IndexMap::new();
    for field in &config.group_fields {
        let value = first.get(field);
        for record in group {
            if record.get(field) != value {
                return Err(Datav1Error::Disagree {
                    record_id: record.record_id.clone(),
                    field: field.clone(),
                });
            }
        }
        entries.insert(field.clone(), value.unwrap_or_default().to_string());
    }
    let columns: Vec<String> = if config.item_fields.is_empty() {
        let mut seen = IndexSet::new();
        for record in group {
            for name in record.fields.keys() {
                if !config.group_fields.contains(name) {
                    seen.insert(name.clone());
                }
            }
        }
        seen.into_iter().collect()
    } else {
        config.item_fields.clone()
    };
    let rows: Vec<Vec<String>> = group
        .iter()
        .map(|r| columns.iter().map(|c| r.get(c).unwrap_or_default().to_string()).collect())
        .collect();
    entries.insert(config.testing_item_key.clone(), render_markdown_table(&columns, &rows)?);
    Ok(Datav1Example {
        entries,
        record_ids: group.iter().map(|r| r.record_id.clone()).collect(),
        testing_item_key: config.testing_item_key.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Datav1Config {
        Datav1Config {
            group_fields: vec!["食品".into()],
            testing_item_key: "检测项目".into(),
            item_fields: vec!["项目".into(), "限量".into()],
        }
    }

    fn rec(id: &str, food: &str, item: &str, limit: &str) -> StructuredRecord {
        StructuredRecord::new(id, [("食品", food), ("项目", item), ("限量", limit)])
    }

    #[test]
    fn milk_group() {
        let group = [rec("1", "牛奶", "铅", "0.05 mg/kg"), rec("2", "牛奶", "砷", "0.1 mg/kg")];
        let ex = build_datav1(&group, &cfg()).unwrap();
        assert_eq!(ex.entries.keys().collect::<Vec<_>>(), ["食品", "检测项目"]);
        assert_eq!(ex.entries["食品"], "牛奶");
        let (header, rows) = ex.table().unwrap();
        assert_eq!(header, ["项目", "限量"]);
        assert_eq!(rows, [["铅", "0.05 mg/kg"], ["砷", "0.1 mg/kg"]]);
        let line = ex.render();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("{\"食品\":\"牛奶\",\"检测项目\":\"| 项目 | 限量 |\\n"));
    }

    #[test]
    fn single_record() {
        let ex = build_datav1(&[rec("1", "面包", "铅", "0.2")], &cfg()).unwrap();
        assert_eq!(ex.table().unwrap().1.len(), 1);
    }

    #[test]
    fn disagreeing_group() {
        let group = [rec("1", "牛奶", "铅", "1"), rec("2", "面包", "铅", "1")];
        assert_eq!(
            build_datav1(&group, &cfg()),
            Err(Datav1Error::Disagree {
                record_id: "2".into(),
                field: "食品".into()
            })
        );
        assert_eq!(build_datav1(&[], &cfg()), Err(Datav1Error::EmptyGroup));
    }

    #[test]
    fn default_columns_and_grouping() {
        let mut config = cfg();
        config.item_fields.clear();
        let records = [
            rec("1", "牛奶", "铅", "1"),
            rec("2", "面包", "铅", "2"),
            rec("3", "牛奶", "砷", "3"),
            StructuredRecord::new("4", [("项目", "x")]),
        ];
        let (groups, skipped) = group_records(&records, &config);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].iter().map(|r| r.record_id.as_str()).collect::<Vec<_>>(), ["1", "3"]);
        assert_eq!(skipped.len(), 1);
        let ex = build_datav1(&groups[0], &config).unwrap();
        assert_eq!(ex.table().unwrap().0, ["项目", "限量"]);
    }
}
