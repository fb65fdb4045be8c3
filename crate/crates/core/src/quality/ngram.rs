use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const BOS: &str = "<s>";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
const BOS_ID: u32 = 2;

const FORMAT_TAG: &str = "ngram-counts";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
}

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Additive-k smoothed n-gram model.
///
/// The predictive vocabulary is every observed token plus `<unk>` and
/// `</s>`; `<s>` only ever appears in contexts. For a context `c` and token
/// `w`, `p(w | c) = (count(c, w) + k) / (count(c) + k * |V|)`, which is
/// uniform for unseen contexts.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    k: f64,
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

/// Count n-grams over `corpus`. Every sequence is padded with `order - 1`
/// start tokens and closed with one end token.
pub fn train_ngram<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, k: f64) -> Result<NgramModel, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut model = NgramModel::empty(order, k)?;
    for sequence in corpus {
        let ids: Vec<u32> = sequence.iter().map(|t| model.intern(t.as_ref())).collect();
        let padded = model.pad(&ids);
        for window in padded.windows(order) {
            let (context, token) = window.split_at(order - 1);
            model.add_count(context.to_vec(), token[0], 1);
        }
    }
    Ok(model)
}

impl NgramModel {
    fn empty(order: usize, k: f64) -> Result<Self, TrainError> {
        if order == 0 {
            return Err(TrainError::InvalidOrder);
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(TrainError::InvalidSmoothing(k));
        }
        let tokens: Vec<String> = [UNK, EOS, BOS].iter().map(|s| s.to_string()).collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(NgramModel {
            order,
            k,
            tokens,
            ids,
            counts: HashMap::new(),
        })
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    fn add_count(&mut self, context: Vec<u32>, token: u32, count: u64) {
        let entry = self.counts.entry(context).or_default();
        entry.total += count;
        *entry.next.entry(token).or_default() += count;
    }

    fn pad(&self, ids: &[u32]) -> Vec<u32> {
        let mut padded = vec![BOS_ID; self.order - 1];
        padded.extend_from_slice(ids);
        padded.push(EOS_ID);
        padded
    }

    fn lookup(&self, token: &str) -> u32 {
        match self.ids.get(token) {
            Some(&BOS_ID) | None => UNK_ID,
            Some(&id) => id,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Size of the predictive vocabulary (observed tokens, `<unk>`, `</s>`).
    pub fn vocab_size(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Predictable tokens in id order.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BOS_ID)
            .map(|(_, t)| t.as_str())
    }

    /// Contexts seen in training, as token strings.
    pub fn contexts(&self) -> Vec<Vec<&str>> {
        let mut out: Vec<Vec<&str>> = self
            .counts
            .keys()
            .map(|c| c.iter().map(|&id| self.tokens[id as usize].as_str()).collect())
            .collect();
        out.sort();
        out
    }

    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        context
            .iter()
            .map(|t| match self.ids.get(*t) {
                Some(&id) => id,
                None => UNK_ID,
            })
            .collect()
    }

    fn prob_ids(&self, context: &[u32], token: u32) -> f64 {
        let v = self.vocab_size() as f64;
        let (count, total) = match self.counts.get(context) {
            Some(c) => (c.next.get(&token).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (count as f64 + self.k) / (total as f64 + self.k * v)
    }

    /// `p(token | context)`; `context` must hold `order - 1` tokens. Unknown
    /// tokens are scored as `<unk>`.
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        assert_eq!(context.len(), self.order - 1, "context length must be order - 1");
        self.prob_ids(&self.context_ids(context), self.lookup(token))
    }

    /// Conditional distribution over [`Self::vocabulary`] for `context`.
    pub fn distribution(&self, context: &[&str]) -> Vec<f64> {
        let ctx = self.context_ids(context);
        (0..self.tokens.len() as u32)
            .filter(|&id| id != BOS_ID)
            .map(|id| self.prob_ids(&ctx, id))
            .collect()
    }

    /// Raw count of `token` after `context`.
    pub fn count(&self, context: &[&str], token: &str) -> u64 {
        let ctx = self.context_ids(context);
        let Some(&id) = self.ids.get(token) else { return 0 };
        self.counts
            .get(&ctx)
            .and_then(|c| c.next.get(&id))
            .copied()
            .unwrap_or(0)
    }

    /// Sum of `ln p` over the tokens plus the end token. Returns the sum and
    /// the number of predicted positions.
    pub fn log_prob(&self, tokens: &[&str]) -> (f64, usize) {
        let ids: Vec<u32> = tokens.iter().map(|t| self.lookup(t)).collect();
        let padded = self.pad(&ids);
        let sum = padded
            .windows(self.order)
            .map(|w| {
                let (context, token) = w.split_at(self.order - 1);
                self.prob_ids(context, token[0]).ln()
            })
            .sum();
        (sum, ids.len() + 1)
    }

    /// `exp(-(1/N) sum ln p)` with `N` counting the end token. `None` for an
    /// empty token list.
    pub fn perplexity(&self, tokens: &[&str]) -> Option<f64> {
        if tokens.is_empty() {
            return None;
        }
        let (sum, n) = self.log_prob(tokens);
        Some((-sum / n as f64).exp())
    }

    /// Write the count table:
    ///
    /// ```text
    /// ngram-counts<TAB>1<TAB>n=3<TAB>k=0.5<TAB>vocab=57
    /// <context tokens, space separated><TAB><token><TAB><count>
    /// ```
    ///
    /// Entries are sorted; tokens escape `\`, tab, newline and space.
    pub fn save<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{FORMAT_TAG}\t{FORMAT_VERSION}\tn={}\tk={}\tvocab={}",
            self.order,
            self.k,
            self.vocab_size()
        )?;
        let mut lines: Vec<String> = Vec::new();
        for (context, counts) in &self.counts {
            let ctx = context
                .iter()
                .map(|&id| escape(&self.tokens[id as usize]))
                .collect::<Vec<_>>()
                .join(" ");
            for (&token, &count) in &counts.next {
                let mut line = String::new();
                let _ = write!(line, "{ctx}\t{}\t{count}", escape(&self.tokens[token as usize]));
                lines.push(line);
            }
        }
        lines.sort();
        for line in lines {
            writeln!(out, "{line}")?;
        }
        out.flush()
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self, ModelFormatError> {
        let parse_err = |line: usize, message: String| ModelFormatError::Parse { line, message };
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 5 || fields[0] != FORMAT_TAG {
            return Err(parse_err(1, format!("bad header {header:?}")));
        }
        if fields[1] != FORMAT_VERSION.to_string() {
            return Err(parse_err(1, format!("unsupported version {}", fields[1])));
        }
        let value = |field: &str, key: &str| -> Result<String, ModelFormatError> {
            field
                .strip_prefix(key)
                .map(str::to_string)
                .ok_or_else(|| parse_err(1, format!("expected {key}")))
        };
        let order: usize = value(fields[2], "n=")?
            .parse()
            .map_err(|e| parse_err(1, format!("n: {e}")))?;
        let k: f64 = value(fields[3], "k=")?
            .parse()
            .map_err(|e| parse_err(1, format!("k: {e}")))?;
        let vocab: usize = value(fields[4], "vocab=")?
            .parse()
            .map_err(|e| parse_err(1, format!("vocab: {e}")))?;
        let mut model = NgramModel::empty(order, k).map_err(|e| parse_err(1, e.to_string()))?;
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(parse_err(lineno, "expected context<TAB>token<TAB>count".into()));
            }
            let context: Vec<u32> = if parts[0].is_empty() {
                Vec::new()
            } else {
                parts[0]
                    .split(' ')
                    .map(|t| unescape(t).map(|t| model.intern(&t)))
                    .collect::<Option<_>>()
                    .ok_or_else(|| parse_err(lineno, "bad escape in context".into()))?
            };
            if context.len() != order - 1 {
                return Err(parse_err(lineno, format!("context has {} tokens, expected {}", context.len(), order - 1)));
            }
            let token = unescape(parts[1]).ok_or_else(|| parse_err(lineno, "bad escape in token".into()))?;
            let token = model.intern(&token);
            let count: u64 = parts[2]
                .parse()
                .map_err(|e| parse_err(lineno, format!("count: {e}")))?;
            model.add_count(context, token, count);
        }
        if model.vocab_size() != vocab {
            return Err(parse_err(
                1,
                format!("header declares vocab={vocab} but table has {}", model.vocab_size()),
            ));
        }
        Ok(model)
    }
}

fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(token: &str) -> Option<String> {
    let mut out = String::with_capacity(token.len());
    let mut chars = token.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(match chars.next()? {
                '\\' => '\\',
                't' => '\t',
                'n' => '\n',
                's' => ' ',
                _ => return None,
            });
        } else {
            out.push(c);
        }
    }
    Some(out)
}
