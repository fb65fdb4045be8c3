use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::generator::{GeneratorClient, GeneratorError};

/// A document identifier found in text, e.g. `GB 5009.12-2017`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentName {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub confidence: f64,
    /// Character offset of `raw` in the scanned text.
    #[serde(default)]
    pub position: usize,
}

/// Produces document-name candidates, best first. Ties on confidence are
/// broken by earliest position.
pub trait NameExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<Vec<DocumentName>, GeneratorError>;
}

pub(crate) fn sort_candidates(candidates: &mut [DocumentName]) {
    candidates.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.position.cmp(&b.position))
    });
}

/// Top candidate, if any.
pub fn extract_document_name(
    text: &str,
    extractor: &dyn NameExtractor,
) -> Result<Option<DocumentName>, GeneratorError> {
    Ok(extractor.extract(text)?.into_iter().next())
}

pub const DEFAULT_CODE_PATTERN: &str = r"[A-Z]{1,4}(?:/[A-Z]{1,2})?[ \u{3000}]?\d+(?:\.\d+)?-\d{4}";

const TITLE_SUFFIXES: [&str; 16] = [
    "测定", "标准", "规范", "限量", "要求", "方法", "规程", "通则", "规定", "指南", "规则", "检验",
    "术语", "分析", "用量", "导则",
];

/// Regex-based extractor for standard codes with an optional trailing title.
#[derive(Debug, Clone)]
pub struct PatternExtractor {
    code: Regex,
}

impl Default for PatternExtractor {
    fn default() -> Self {
        PatternExtractor::new(DEFAULT_CODE_PATTERN).expect("default code pattern compiles")
    }
}

impl PatternExtractor {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(PatternExtractor {
            code: Regex::new(pattern)?,
        })
    }

    pub fn pattern(&self) -> &Regex {
        &self.code
    }

    /// Every accepted match in text order, before ranking.
    pub fn scan(&self, text: &str) -> Vec<DocumentName> {
        let mut out = Vec::new();
        for m in self.code.find_iter(text) {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            if before.is_some_and(|c| c.is_ascii_alphanumeric()) || after.is_some_and(|c| c.is_ascii_digit()) {
                continue;
            }
            let title = trailing_title(&text[m.end()..]);
            let line_start = before.is_none_or(|c| c == '\n');
            let mut confidence = 0.6;
            if title.is_some() {
                confidence += 0.3;
            }
            if line_start {
                confidence += 0.1;
            }
            out.push(DocumentName {
                raw: m.as_str().to_string(),
                title,
                confidence,
                position: text[..m.start()].chars().count(),
            });
        }
        out
    }
}

impl NameExtractor for PatternExtractor {
    fn extract(&self, text: &str) -> Result<Vec<DocumentName>, GeneratorError> {
        let mut candidates = self.scan(text);
        sort_candidates(&mut candidates);
        Ok(candidates)
    }
}

/// Han run directly after the code (leading spaces skipped, single spaces
/// between Han runs kept), cut after the last title-like suffix when one
/// occurs.
fn trailing_title(rest: &str) -> Option<String> {
    let rest = rest.trim_start_matches([' ', '\t', '\u{3000}']);
    let chars: Vec<char> = rest.chars().collect();
    let mut run = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins_han = matches!(c, ' ' | '\u{3000}') && !run.is_empty() && chars.get(i + 1).is_some_and(|&n| is_han(n));
        if is_han(c) || c == '·' || joins_han {
            run.push(c);
        } else {
            break;
        }
    }
    let cut = TITLE_SUFFIXES
        .iter()
        .filter_map(|s| run.rfind(s).map(|i| i + s.len()))
        .max()
        .unwrap_or(run.len());
    let title = run[..cut].trim_end();
    (title.chars().count() >= 2).then(|| title.to_string())
}

fn is_han(c: char) -> bool {
    matches!(c, '\u{4e00}'..='\u{9fff}' | '\u{3400}'..='\u{4dbf}' | '\u{f900}'..='\u{faff}')
}

/// Delegates extraction to a generator endpoint (`"task":"extract_name"`).
/// Candidates whose raw string does not occur in the text are dropped.
pub struct WireExtractor<C> {
    client: C,
}

impl<C: GeneratorClient> WireExtractor<C> {
    pub fn new(client: C) -> Self {
        WireExtractor { client }
    }
}

impl<C: GeneratorClient> NameExtractor for WireExtractor<C> {
    fn extract(&self, text: &str) -> Result<Vec<DocumentName>, GeneratorError> {
        let mut names: Vec<DocumentName> = self
            .client
            .extract_names(text)?
            .into_iter()
            .filter_map(|mut n| {
                let at = text.find(&n.raw).filter(|_| !n.raw.is_empty())?;
                n.position = text[..at].chars().count();
                n.confidence = n.confidence.clamp(0.0, 1.0);
                Some(n)
            })
            .collect();
        sort_candidates(&mut names);
        Ok(names)
    }
}
