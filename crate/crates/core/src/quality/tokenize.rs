use serde::{Deserialize, Serialize};

/// How sentences are cut into model tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    /// Every character from the CJK blocks (and general punctuation) is a
    /// token; other non-whitespace runs are whitespace-delimited tokens.
    #[default]
    Mixed,
    /// Every non-whitespace character is a token.
    Chars,
    /// Whitespace-delimited tokens only.
    Whitespace,
}

fn is_wide(c: char) -> bool {
    let u = c as u32;
    u >= 0x2E80 || (0x2000..=0x206F).contains(&u)
}

impl Tokenizer {
    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().collect(),
            Tokenizer::Chars => text
                .char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
            Tokenizer::Mixed => {
                let mut out = Vec::new();
                let mut run_start: Option<usize> = None;
                for (i, c) in text.char_indices() {
                    if c.is_whitespace() || is_wide(c) {
                        if let Some(s) = run_start.take() {
                            out.push(&text[s..i]);
                        }
                        if !c.is_whitespace() {
                            out.push(&text[i..i + c.len_utf8()]);
                        }
                    } else if run_start.is_none() {
                        run_start = Some(i);
                    }
                }
                if let Some(s) = run_start {
                    out.push(&text[s..]);
                }
                out
            }
        }
    }
}
