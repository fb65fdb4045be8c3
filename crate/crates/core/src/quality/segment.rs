use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
}

impl Sentence {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Sentence {
            text: text.into(),
            index,
            ppl: None,
        }
    }
}

/// Sentence boundary rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    /// Characters that end a sentence.
    pub terminals: String,
    /// Closing quotes and brackets that stay with the sentence they close.
    pub closers: String,
    /// A line break ends a sentence. OCR tables are line-oriented, so each
    /// row is scored on its own.
    pub newline_terminal: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            terminals: "。！？；!?.;".to_string(),
            closers: "”’\"'）)」』】》]〕".to_string(),
            newline_terminal: true,
        }
    }
}

impl SegmentConfig {
    fn is_terminal(&self, c: char, next: Option<char>) -> bool {
        if c == '\n' {
            return self.newline_terminal;
        }
        if !self.terminals.contains(c) {
            return false;
        }
        // "0.05", "4.2", "e.g" style dots are not boundaries
        !(c == '.' && next.is_some_and(|n| n.is_ascii_alphanumeric()))
    }
}

/// Split text into sentences. Each sentence carries its terminal cluster
/// (terminals, closing quotes/brackets, trailing whitespace), so joining the
/// sentences gives back the input. Whitespace-only input yields nothing.
pub fn segment_sentences(text: &str, rules: &SegmentConfig) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut fragments: Vec<&str> = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, n)| n);
        if rules.is_terminal(c, next) {
            let mut j = i + 1;
            while j < chars.len() {
                let (_, d) = chars[j];
                let after = chars.get(j + 1).map(|&(_, n)| n);
                if rules.is_terminal(d, after) || rules.closers.contains(d) || d.is_whitespace() {
                    j += 1;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            fragments.push(&text[start..end]);
            start = end;
            i = j;
        } else {
            i += 1;
        }
    }
    if start < text.len() {
        fragments.push(&text[start..]);
    }

    let mut out: Vec<String> = Vec::new();
    let mut pending = String::new();
    for fragment in fragments {
        if fragment.trim().is_empty() {
            match out.last_mut() {
                Some(prev) => prev.push_str(fragment),
                None => pending.push_str(fragment),
            }
        } else {
            out.push(format!("{}{fragment}", std::mem::take(&mut pending)));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(index, text)| Sentence::new(index, text))
        .collect()
}
