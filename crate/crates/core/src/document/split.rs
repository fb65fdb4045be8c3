use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RawDocument;
use crate::quality::{segment_sentences, SegmentConfig};

/// Heading patterns shipped by default: `第三章`/`第二节`, bare numeric heads
/// (`3 术语和定义`), dotted heads (`4.2 检验方法`) and appendix heads.
pub const DEFAULT_HEADING_PATTERNS: [&str; 3] = [
    r"^\s*第[一二三四五六七八九十百零〇两0-9]+[章节]",
    r"^\s*\d{1,2}(?:\.\d{1,2})*[ \t\u{3000}]+\p{Han}[^。；！？!?;]{0,40}$",
    r"^\s*附\s*录\s*[A-Z]",
];

#[derive(Debug, Clone)]
pub struct SplitConfig {
    patterns: Vec<Regex>,
}

impl SplitConfig {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, regex::Error> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SplitConfig { patterns })
    }

    pub fn is_heading(&self, line: &str) -> bool {
        let line = line.trim_end_matches(['\n', '\r']);
        !line.trim().is_empty() && self.patterns.iter().any(|p| p.is_match(line))
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::new(&DEFAULT_HEADING_PATTERNS).expect("default heading patterns compile")
    }
}

/// A section of a document.
///
/// `heading` is the full heading line including its line terminator (empty
/// for the preamble), and `text` is everything up to the next heading, so
/// `heading + text` over all chapters reproduces the document byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub doc_id: String,
    pub chapter_index: usize,
    pub heading: String,
    pub text: String,
}

impl Chapter {
    pub fn full_text(&self) -> String {
        format!("{}{}", self.heading, self.text)
    }
}

/// Split a document at every heading line. Text before the first heading
/// becomes chapter 0 with an empty heading; it is omitted when empty.
pub fn split_chapters(doc: &RawDocument, rules: &SplitConfig) -> Vec<Chapter> {
    let mut sections: Vec<(String, String)> = Vec::new();
    let mut heading = String::new();
    let mut body = String::new();
    for line in doc.text.split_inclusive('\n') {
        if rules.is_heading(line) {
            if !heading.is_empty() || !body.is_empty() {
                sections.push((std::mem::take(&mut heading), std::mem::take(&mut body)));
            }
            heading = line.to_string();
        } else {
            body.push_str(line);
        }
    }
    if !heading.is_empty() || !body.is_empty() || sections.is_empty() {
        sections.push((heading, body));
    }
    sections
        .into_iter()
        .enumerate()
        .map(|(chapter_index, (heading, text))| Chapter {
            doc_id: doc.doc_id.clone(),
            chapter_index,
            heading,
            text,
        })
        .collect()
}

/// Break `text` into pieces of at most `max_chars` characters, cutting at
/// sentence boundaries where possible. Concatenating the pieces gives back
/// `text`.
pub fn wrap_at_sentences(text: &str, max_chars: usize, seg: &SegmentConfig) -> Vec<String> {
    let max_chars = max_chars.max(1);
    if text.chars().count() <= max_chars {
        return if text.is_empty() { vec![] } else { vec![text.to_string()] };
    }
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut current_len = 0;
    for sentence in segment_sentences(text, seg) {
        let len = sentence.text.chars().count();
        if current_len + len > max_chars && !current.is_empty() {
            pieces.push(std::mem::take(&mut current));
            current_len = 0;
        }
        if len > max_chars {
            let chars: Vec<char> = sentence.text.chars().collect();
            for chunk in chars.chunks(max_chars) {
                if chunk.len() == max_chars {
                    pieces.push(chunk.iter().collect());
                } else {
                    current = chunk.iter().collect();
                    current_len = chunk.len();
                }
            }
        } else {
            current.push_str(&sentence.text);
            current_len += len;
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::SourceKind;

    fn doc(text: &str) -> RawDocument {
        RawDocument {
            doc_id: "d".into(),
            text: text.into(),
            source_path: "d.txt".into(),
            source_kind: SourceKind::StandardDocument,
        }
    }

    fn reassemble(chapters: &[Chapter]) -> String {
        chapters.iter().map(Chapter::full_text).collect()
    }

    #[test]
    fn numbered_sections() {
        let d = doc("前言\n1 范围\nA\n2 引用文件\nB");
        let ch = split_chapters(&d, &SplitConfig::default());
        let pairs: Vec<(&str, &str)> = ch
            .iter()
            .map(|c| (c.heading.trim_end(), c.text.trim_end()))
            .collect();
        assert_eq!(pairs, [("", "前言"), ("1 范围", "A"), ("2 引用文件", "B")]);
        assert_eq!(reassemble(&ch), d.text);
        assert_eq!(ch.iter().map(|c| c.chapter_index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn no_headings() {
        let ch = split_chapters(&doc("no headings at all"), &SplitConfig::default());
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].heading, "");
        assert_eq!(ch[0].text, "no headings at all");
    }

    #[test]
    fn chinese_and_dotted_heads() {
        let text = "第一章 总则\n内容。\n4.2 检验方法\n称取 2 g 试样。\n10 min 后读数\n附录 A\n表";
        let ch = split_chapters(&doc(text), &SplitConfig::default());
        let heads: Vec<&str> = ch.iter().map(|c| c.heading.trim_end()).collect();
        assert_eq!(heads, ["第一章 总则", "4.2 检验方法", "附录 A"]);
        assert_eq!(reassemble(&ch), text);
    }

    #[test]
    fn data_lines_are_not_headings() {
        let rules = SplitConfig::default();
        assert!(!rules.is_heading("0.05 mg/kg\n"));
        assert!(!rules.is_heading("2 g 样品加入 10 mL 硝酸。\n"));
        assert!(rules.is_heading("3 术语和定义\r\n"));
    }

    #[test]
    fn custom_patterns() {
        let rules = SplitConfig::new(&["^##"]).unwrap();
        let ch = split_chapters(&doc("## a\nx\n## b\ny"), &rules);
        assert_eq!(ch.len(), 2);
        assert!(SplitConfig::new(&["("]).is_err());
    }

    #[test]
    fn wrap_is_lossless_and_bounded() {
        let seg = SegmentConfig::default();
        let text = "第一句很长很长。第二句。第三句也不短！".repeat(5);
        let pieces = wrap_at_sentences(&text, 12, &seg);
        assert_eq!(pieces.concat(), text);
        assert!(pieces.iter().all(|p| p.chars().count() <= 12));
        let long = "没有标点的超长句子".repeat(4);
        let pieces = wrap_at_sentences(&long, 10, &seg);
        assert_eq!(pieces.concat(), long);
        assert!(pieces.iter().all(|p| p.chars().count() <= 10));
    }
}
