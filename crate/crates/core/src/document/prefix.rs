use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Chapter, DocumentName};
use crate::template::{fill, placeholders};

pub const PREFIX_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrefixError {
    #[error("no prefix templates configured")]
    NoTemplates,
    #[error("prefix template {0:?} has no {{name}} placeholder")]
    MissingName(String),
    #[error("fallback template {0:?} has no {{doc_id}} placeholder")]
    MissingDocId(String),
    #[error("empty prefix for chapter {chapter_index} of {doc_id}")]
    EmptyPrefix { doc_id: String, chapter_index: usize },
}

/// Validated prefix templates. Each template uses `{name}` (the standard
/// code) and may use `{title}`; the fallback uses `{doc_id}` and applies when
/// no name was extracted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTemplates {
    templates: Vec<String>,
    fallback: String,
}

impl PrefixTemplates {
    pub fn new(templates: Vec<String>, fallback: String) -> Result<Self, PrefixError> {
        if templates.is_empty() {
            return Err(PrefixError::NoTemplates);
        }
        if let Some(bad) = templates.iter().find(|t| !placeholders(t).contains("name")) {
            return Err(PrefixError::MissingName(bad.clone()));
        }
        if !placeholders(&fallback).contains("doc_id") {
            return Err(PrefixError::MissingDocId(fallback));
        }
        Ok(PrefixTemplates { templates, fallback })
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn fallback(&self, doc_id: &str) -> String {
        fill(&self.fallback, &[("doc_id", doc_id)])
    }
}

impl Default for PrefixTemplates {
    fn default() -> Self {
        PrefixTemplates::new(
            vec![
                "【标准：{name}】".to_string(),
                "以下内容摘自{name}{title}：".to_string(),
                "《{name} {title}》".to_string(),
            ],
            "【文档：{doc_id}】".to_string(),
        )
        .expect("default templates are valid")
    }
}

/// Pick one template uniformly and substitute the name into it.
pub fn generate_prefix<R: Rng + ?Sized>(name: &DocumentName, templates: &PrefixTemplates, rng: &mut R) -> String {
    let template = &templates.templates[rng.gen_range(0..templates.templates.len())];
    let title = name.title.as_deref().unwrap_or("");
    fill(template, &[("name", &name.raw), ("title", title)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixedChapter {
    pub chapter: Chapter,
    pub prefix: String,
    pub document_name: Option<DocumentName>,
}

impl PrefixedChapter {
    /// `prefix + "\n" + heading + body`.
    pub fn emitted_text(&self) -> String {
        format!("{}{PREFIX_SEPARATOR}{}", self.prefix, self.chapter.full_text())
    }
}

pub fn attach_prefix(
    chapter: Chapter,
    prefix: String,
    document_name: Option<DocumentName>,
) -> Result<PrefixedChapter, PrefixError> {
    if prefix.is_empty() {
        return Err(PrefixError::EmptyPrefix {
            doc_id: chapter.doc_id,
            chapter_index: chapter.chapter_index,
        });
    }
    Ok(PrefixedChapter {
        chapter,
        prefix,
        document_name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    fn name(raw: &str) -> DocumentName {
        DocumentName {
            raw: raw.into(),
            title: None,
            confidence: 1.0,
            position: 0,
        }
    }

    fn chapter(text: &str) -> Chapter {
        Chapter {
            doc_id: "d".into(),
            chapter_index: 0,
            heading: String::new(),
            text: text.into(),
        }
    }

    #[test]
    fn single_template() {
        let t = PrefixTemplates::new(vec!["【标准：{name}】".into()], "{doc_id}".into()).unwrap();
        let p = generate_prefix(&name("GB 2762-2017"), &t, &mut stream(1, &[]));
        assert_eq!(p, "【标准：GB 2762-2017】");
    }

    #[test]
    fn seeded_choice_is_repeatable() {
        let t = PrefixTemplates::new(
            vec!["A{name}".into(), "B{name}".into(), "C{name}".into()],
            "{doc_id}".into(),
        )
        .unwrap();
        let n = name("GB 1-2000");
        let a = generate_prefix(&n, &t, &mut stream(42, &[]));
        let b = generate_prefix(&n, &t, &mut stream(42, &[]));
        assert_eq!(a, b);
        let expected = &t.templates()[stream(42, &[]).gen_range(0..3)];
        assert_eq!(a, fill(expected, &[("name", "GB 1-2000")]));
    }

    #[test]
    fn template_validation() {
        assert_eq!(
            PrefixTemplates::new(vec!["no placeholder".into()], "{doc_id}".into()),
            Err(PrefixError::MissingName("no placeholder".into()))
        );
        assert_eq!(PrefixTemplates::new(vec![], "{doc_id}".into()), Err(PrefixError::NoTemplates));
        assert!(PrefixTemplates::new(vec!["{name}".into()], "x".into()).is_err());
    }

    #[test]
    fn title_placeholder() {
        let t = PrefixTemplates::new(vec!["{name}《{title}》".into()], "{doc_id}".into()).unwrap();
        let mut n = name("GB 5009.12-2017");
        n.title = Some("食品中铅的测定".into());
        assert_eq!(generate_prefix(&n, &t, &mut stream(0, &[])), "GB 5009.12-2017《食品中铅的测定》");
    }

    #[test]
    fn attach() {
        let p = attach_prefix(chapter("A"), "【P】".into(), None).unwrap();
        assert_eq!(p.emitted_text(), "【P】\nA");
        assert!(attach_prefix(chapter("A"), String::new(), None).is_err());
        let p = attach_prefix(chapter("A"), "x\ny".into(), None).unwrap();
        assert!(p.emitted_text().starts_with("x\ny"));
    }
}
