use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::StructuredRecord;

pub const REDACTION_MASK: &str = "[已脱敏]";

/// Fields to drop (exact, case-sensitive names) and value patterns to mask
/// wherever they occur.
#[derive(Debug, Clone, Default)]
pub struct RedactionSpec {
    pub denylist: BTreeSet<String>,
    pub value_patterns: Vec<Regex>,
}

impl RedactionSpec {
    pub fn new<S: AsRef<str>>(
        denylist: impl IntoIterator<Item = S>,
        value_patterns: &[S],
    ) -> Result<Self, regex::Error> {
        Ok(RedactionSpec {
            denylist: denylist.into_iter().map(|s| s.as_ref().to_string()).collect(),
            value_patterns: value_patterns
                .iter()
                .map(|p| Regex::new(p.as_ref()))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Mask every value-pattern match in `text`.
    pub fn scrub(&self, text: &str) -> String {
        let mut out = text.to_string();
        for pattern in &self.value_patterns {
            if pattern.is_match(&out) {
                out = pattern.replace_all(&out, REDACTION_MASK).into_owned();
            }
        }
        out
    }
}

/// Copy of `record` without denylisted fields and with value patterns masked.
pub fn redact(record: &StructuredRecord, spec: &RedactionSpec) -> StructuredRecord {
    StructuredRecord {
        record_id: record.record_id.clone(),
        fields: record
            .fields
            .iter()
            .filter(|(name, _)| !spec.denylist.contains(*name))
            .map(|(name, value)| (name.clone(), spec.scrub(value)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Merge {
    pub sources: Vec<String>,
    pub target: String,
    #[serde(default = "default_joiner")]
    pub joiner: String,
}

fn default_joiner() -> String {
    " ".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("field {0:?} is a source of more than one merge")]
    SharedSource(String),
    #[error("merge target {0:?} is used twice")]
    DuplicateTarget(String),
    #[error("merge into {0:?} has no sources")]
    NoSources(String),
    #[error("record {record_id}: merge target {target:?} collides with an existing field")]
    Collision { record_id: String, target: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeSpec {
    merges: Vec<Merge>,
}

impl MergeSpec {
    pub fn new(merges: Vec<Merge>) -> Result<Self, MergeError> {
        let mut sources = BTreeSet::new();
        let mut targets = BTreeSet::new();
        for merge in &merges {
            if merge.sources.is_empty() {
                return Err(MergeError::NoSources(merge.target.clone()));
            }
            for source in &merge.sources {
                if !sources.insert(source.as_str()) {
                    return Err(MergeError::SharedSource(source.clone()));
                }
            }
            if !targets.insert(merge.target.as_str()) {
                return Err(MergeError::DuplicateTarget(merge.target.clone()));
            }
        }
        Ok(MergeSpec { merges })
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }
}

/// Apply every merge: its sources are replaced, at the position of the first
/// present source, by the target holding the non-empty source values joined.
/// Missing sources produce warnings; a merge with no present source is
/// skipped.
pub fn merge_fields(
    record: &StructuredRecord,
    spec: &MergeSpec,
) -> Result<(StructuredRecord, Vec<String>), MergeError> {
    let mut warnings = Vec::new();
    let mut consumed: HashMap<&str, Option<(String, String)>> = HashMap::new();
    for merge in &spec.merges {
        let present: Vec<&String> = merge
            .sources
            .iter()
            .filter(|s| record.fields.contains_key(*s))
            .collect();
        for missing in merge.sources.iter().filter(|s| !record.fields.contains_key(*s)) {
            warnings.push(format!(
                "record {}: merge into {:?} is missing source {missing:?}",
                record.record_id, merge.target
            ));
        }
        let Some(anchor) = present.first() else { continue };
        if record.fields.contains_key(&merge.target) && !merge.sources.contains(&merge.target) {
            return Err(MergeError::Collision {
                record_id: record.record_id.clone(),
                target: merge.target.clone(),
            });
        }
        let joined = present
            .iter()
            .map(|s| record.fields[*s].as_str())
            .filter(|v| !v.is_empty())
            .collect::<Vec<_>>()
            .join(&merge.joiner);
        for source in &present {
            let slot = (source == anchor).then(|| (merge.target.clone(), joined.clone()));
            consumed.insert(source.as_str(), slot);
        }
    }
    let mut fields = IndexMap::with_capacity(record.fields.len());
    for (name, value) in &record.fields {
        match consumed.get(name.as_str()) {
            Some(Some((target, joined))) => {
                fields.insert(target.clone(), joined.clone());
            }
            Some(None) => {}
            None => {
                fields.insert(name.clone(), value.clone());
            }
        }
    }
    Ok((
        StructuredRecord {
            record_id: record.record_id.clone(),
            fields,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(fields: &[(&str, &str)]) -> StructuredRecord {
        StructuredRecord::new("r1", fields.iter().copied())
    }

    fn merge(sources: &[&str], target: &str, joiner: &str) -> Merge {
        Merge {
            sources: sources.iter().map(|s| s.to_string()).collect(),
            target: target.into(),
            joiner: joiner.into(),
        }
    }

    #[test]
    fn redact_drops_fields() {
        let r = rec(&[("企业名称", "X公司"), ("检测项目", "铅")]);
        let spec = RedactionSpec::new(["企业名称"], &[]).unwrap();
        assert_eq!(redact(&r, &spec), rec(&[("检测项目", "铅")]));
        assert_eq!(redact(&r, &RedactionSpec::default()), r);
        let spec = RedactionSpec::new(["电话", "地址"], &[]).unwrap();
        assert_eq!(redact(&r, &spec), r);
    }

    #[test]
    fn redact_is_case_sensitive_and_masks_patterns() {
        let r = rec(&[("Name", "a"), ("备注", "联系13800138000")]);
        let spec = RedactionSpec::new(vec!["name"], &[r"1[3-9]\d{9}"]).unwrap();
        let out = redact(&r, &spec);
        assert_eq!(out.get("Name"), Some("a"));
        assert_eq!(out.get("备注"), Some("联系[已脱敏]"));
    }

    #[test]
    fn merge_joins_values() {
        let r = rec(&[("限量值", "0.05"), ("限量单位", "mg/kg")]);
        let spec = MergeSpec::new(vec![merge(&["限量值", "限量单位"], "限量", " ")]).unwrap();
        let (out, warnings) = merge_fields(&r, &spec).unwrap();
        assert_eq!(out, rec(&[("限量", "0.05 mg/kg")]));
        assert!(warnings.is_empty());
    }

    #[test]
    fn merge_identity_and_empty_skip() {
        let r = rec(&[("a", "1"), ("b", "")]);
        assert_eq!(merge_fields(&r, &MergeSpec::default()).unwrap().0, r);
        let spec = MergeSpec::new(vec![merge(&["a", "b"], "c", " ")]).unwrap();
        assert_eq!(merge_fields(&r, &spec).unwrap().0, rec(&[("c", "1")]));
    }

    #[test]
    fn merge_position_and_missing() {
        let r = rec(&[("x", "0"), ("a", "1"), ("y", "2"), ("b", "3")]);
        let spec = MergeSpec::new(vec![merge(&["a", "b", "gone"], "ab", "-")]).unwrap();
        let (out, warnings) = merge_fields(&r, &spec).unwrap();
        assert_eq!(out, rec(&[("x", "0"), ("ab", "1-3"), ("y", "2")]));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn merge_spec_validation() {
        assert_eq!(
            MergeSpec::new(vec![merge(&["a"], "t1", ""), merge(&["a", "b"], "t2", "")]),
            Err(MergeError::SharedSource("a".into()))
        );
        let spec = MergeSpec::new(vec![merge(&["a"], "x", "")]).unwrap();
        assert!(merge_fields(&rec(&[("a", "1"), ("x", "2")]), &spec).is_err());
    }
}
