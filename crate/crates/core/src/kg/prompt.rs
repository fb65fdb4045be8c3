use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RetrievedTriple;
use crate::template::{fill, placeholders};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "已知信息：\n{facts}\n\n请根据已知信息回答问题：{query}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("prompt template is missing the {{{0}}} placeholder")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, TemplateError> {
        let template = template.into();
        let names = placeholders(&template);
        for required in ["facts", "query"] {
            if !names.contains(required) {
                return Err(TemplateError::Missing(required));
            }
        }
        Ok(PromptTemplate(template))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate(DEFAULT_PROMPT_TEMPLATE.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub facts: String,
    pub query: String,
    pub prompt: String,
    pub triple_ids: Vec<usize>,
}

fn one_line(s: &str) -> String {
    s.replace(['\r', '\n'], " ")
}

/// Render one `subject | predicate | object` line per triple, in order, and
/// substitute facts and query into the template.
pub fn assemble_prompt(query: &str, triples: &[RetrievedTriple], template: &PromptTemplate) -> PromptBundle {
    let facts = triples
        .iter()
        .map(|r| {
            format!(
                "{} | {} | {}",
                one_line(&r.triple.subject),
                one_line(&r.triple.predicate),
                one_line(&r.triple.object)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = fill(&template.0, &[("facts", &facts), ("query", query)]);
    PromptBundle {
        facts,
        query: query.to_string(),
        prompt,
        triple_ids: triples.iter().map(|r| r.id).collect(),
    }
}
