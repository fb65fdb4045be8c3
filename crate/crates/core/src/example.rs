//! Corpus rows and their JSONL emission.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::document::SourceKind;
use crate::seed::content_id;

/// Where a corpus row came from. Declaration order is the corpus-wide dedup
/// priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    StandardChapter,
    Datav1,
    Datav2,
    Dictionary,
    Tutorial,
    SentimentNews,
    Law,
    ExamQuestion,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::StandardChapter => "standard_chapter",
            Source::Datav1 => "datav1",
            Source::Datav2 => "datav2",
            Source::Dictionary => "dictionary",
            Source::Tutorial => "tutorial",
            Source::SentimentNews => "sentiment_news",
            Source::Law => "law",
            Source::ExamQuestion => "exam_question",
        }
    }
}

impl From<SourceKind> for Source {
    fn from(kind: SourceKind) -> Self {
        match kind {
            SourceKind::StandardDocument => Source::StandardChapter,
            SourceKind::Dictionary => Source::Dictionary,
            SourceKind::Tutorial => Source::Tutorial,
            SourceKind::SentimentNews => Source::SentimentNews,
            SourceKind::Law => Source::Law,
            SourceKind::ExamQuestion => Source::ExamQuestion,
        }
    }
}

pub type Meta = BTreeMap<String, Value>;

/// One line of the pre-training corpus. Field order is the emitted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub meta: Meta,
}

impl TrainingExample {
    /// Build an example whose id is derived from `(source, text)`.
    pub fn new(source: Source, text: impl Into<String>, meta: Meta) -> Self {
        let text = text.into();
        TrainingExample {
            id: content_id(&[source.as_str(), &text]),
            text,
            source,
            meta,
        }
    }
}

/// Write one JSON object per line. Returns the number of lines written.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> std::io::Result<usize> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(rows.len())
}

/// Drop rows whose text already appeared, keeping the first by
/// `(source, id)`. Surviving rows keep their input order.
pub fn dedup_by_text(examples: Vec<TrainingExample>) -> (Vec<TrainingExample>, usize) {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| {
        (examples[a].source, &examples[a].id, a).cmp(&(examples[b].source, &examples[b].id, b))
    });
    let mut seen = std::collections::HashSet::new();
    let mut keep = vec![false; examples.len()];
    for i in order {
        if seen.insert(examples[i].text.as_str()) {
            keep[i] = true;
        }
    }
    let removed = keep.iter().filter(|k| !**k).count();
    let kept = examples
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect();
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_order_and_escaping() {
        let ex = TrainingExample::new(Source::Law, "第一条 A\n续", Meta::new());
        let mut buf = Vec::new();
        assert_eq!(write_jsonl(&mut buf, &[ex.clone(), ex.clone()]).unwrap(), 2);
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with("{\"id\":"));
        let first = s.lines().next().unwrap();
        let id_at = first.find("\"id\"").unwrap();
        let text_at = first.find("\"text\"").unwrap();
        let source_at = first.find("\"source\"").unwrap();
        let meta_at = first.find("\"meta\"").unwrap();
        assert!(id_at < text_at && text_at < source_at && source_at < meta_at);
        let back: TrainingExample = serde_json::from_str(first).unwrap();
        assert_eq!(back, ex);
    }

    #[test]
    fn empty_write() {
        let mut buf = Vec::new();
        assert_eq!(write_jsonl::<_, TrainingExample>(&mut buf, &[]).unwrap(), 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn dedup_keeps_first_by_source() {
        let a = TrainingExample::new(Source::Tutorial, "same", Meta::new());
        let b = TrainingExample::new(Source::StandardChapter, "same", Meta::new());
        let c = TrainingExample::new(Source::Law, "other", Meta::new());
        let (kept, removed) = dedup_by_text(vec![a, b.clone(), c.clone()]);
        assert_eq!(removed, 1);
        assert_eq!(kept, vec![b, c]);
    }
}
