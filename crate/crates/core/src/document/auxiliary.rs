use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::{RawDocument, Skip, SourceKind};
use crate::example::{Meta, Source, TrainingExample};

static PROVISION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t\u{3000}]*第[一二三四五六七八九十百千零〇两0-9]+条").unwrap());
static QUESTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^[ \t\u{3000}]*(?:\d+[、.．)）]|[（(]\d+[)）]|第[一二三四五六七八九十百0-9]+题)").unwrap()
});
static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t\u{3000}\r]*\n").unwrap());

const DICTIONARY_SEPARATORS: [char; 3] = ['：', ':', '\t'];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuxiliaryOutput {
    pub examples: Vec<TrainingExample>,
    pub skipped: Vec<Skip>,
}

/// Split an auxiliary document into corpus entries according to its kind.
///
/// Returns `None` for standard documents, which go through chapter
/// splitting instead.
pub fn ingest_auxiliary(doc: &RawDocument) -> Option<AuxiliaryOutput> {
    let mut out = AuxiliaryOutput::default();
    let entries: Vec<String> = match doc.source_kind {
        SourceKind::StandardDocument => return None,
        SourceKind::Dictionary => {
            let mut entries = Vec::new();
            for (i, line) in doc.text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                match line.split_once(DICTIONARY_SEPARATORS) {
                    Some((term, definition)) if !term.trim().is_empty() && !definition.trim().is_empty() => {
                        entries.push(line.to_string())
                    }
                    _ => out.skipped.push(Skip::new(
                        format!("{}:{}", doc.doc_id, i + 1),
                        "dictionary line without term/definition separator",
                    )),
                }
            }
            entries
        }
        SourceKind::Tutorial => PARAGRAPH_BREAK.split(&doc.text).map(str::to_string).collect(),
        SourceKind::SentimentNews => vec![doc.text.clone()],
        SourceKind::Law => split_at_markers(&doc.text, &PROVISION),
        SourceKind::ExamQuestion => split_at_markers(&doc.text, &QUESTION),
    };
    let source = Source::from(doc.source_kind);
    out.examples = entries
        .iter()
        .map(|e| e.trim())
        .filter(|e| !e.is_empty())
        .enumerate()
        .map(|(entry_index, text)| {
            let mut meta = Meta::new();
            meta.insert("doc_id".into(), json!(doc.doc_id));
            meta.insert("entry_index".into(), json!(entry_index));
            TrainingExample::new(source, text, meta)
        })
        .collect();
    Some(out)
}

/// Entries start at each marker match. Text before the first marker is
/// dropped unless no marker occurs at all.
fn split_at_markers(text: &str, marker: &Regex) -> Vec<String> {
    let starts: Vec<usize> = marker.find_iter(text).map(|m| m.start()).collect();
    if starts.is_empty() {
        return vec![text.to_string()];
    }
    starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = starts.get(i + 1).copied().unwrap_or(text.len());
            text[start..end].to_string()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(kind: SourceKind, text: &str) -> RawDocument {
        RawDocument {
            doc_id: "aux".into(),
            text: text.into(),
            source_path: "aux.txt".into(),
            source_kind: kind,
        }
    }

    fn texts(out: &AuxiliaryOutput) -> Vec<&str> {
        out.examples.iter().map(|e| e.text.as_str()).collect()
    }

    #[test]
    fn law_provisions() {
        let out = ingest_auxiliary(&doc(SourceKind::Law, "第一条 A\n第二条 B")).unwrap();
        assert_eq!(texts(&out), ["第一条 A", "第二条 B"]);
        assert!(out.examples.iter().all(|e| e.source == Source::Law));
    }

    #[test]
    fn law_preamble_dropped() {
        let out = ingest_auxiliary(&doc(SourceKind::Law, "中华人民共和国食品安全法\n第一条 A\n  第十二条 B")).unwrap();
        assert_eq!(texts(&out), ["第一条 A", "第十二条 B"]);
    }

    #[test]
    fn tutorial_paragraphs() {
        let out = ingest_auxiliary(&doc(SourceKind::Tutorial, "p1\n\np2\n \np3")).unwrap();
        assert_eq!(texts(&out), ["p1", "p2", "p3"]);
    }

    #[test]
    fn dictionary_lines() {
        let out = ingest_auxiliary(&doc(SourceKind::Dictionary, "农残：农药残留的简称\nbad line")).unwrap();
        assert_eq!(texts(&out), ["农残：农药残留的简称"]);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].item, "aux:2");
    }

    #[test]
    fn exam_questions_keep_explanations() {
        let text = "1. 下列哪项属于重金属？\nA. 铅 B. 钙\n答案：A\n解析：铅是重金属。\n2、菌落总数的单位是？\n解析：CFU/g。";
        let out = ingest_auxiliary(&doc(SourceKind::ExamQuestion, text)).unwrap();
        assert_eq!(out.examples.len(), 2);
        assert!(out.examples[0].text.ends_with("解析：铅是重金属。"));
        assert!(out.examples[1].text.starts_with("2、"));
    }

    #[test]
    fn news_is_whole_document() {
        let out = ingest_auxiliary(&doc(SourceKind::SentimentNews, "标题\n\n正文一\n\n正文二")).unwrap();
        assert_eq!(out.examples.len(), 1);
    }

    #[test]
    fn standard_documents_rejected() {
        assert!(ingest_auxiliary(&doc(SourceKind::StandardDocument, "x")).is_none());
    }
}
