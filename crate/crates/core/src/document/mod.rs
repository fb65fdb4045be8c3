//! Standard-document and auxiliary-source ingestion.
//!
//! OCR text dumps are read one document per file, split into chapters at
//! section headings, attributed to their owning document through an
//! extracted name, and given a prefix line that names that document.

mod auxiliary;
mod names;
mod prefix;
mod split;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use auxiliary::{ingest_auxiliary, AuxiliaryOutput};
pub use names::{extract_document_name, DocumentName, NameExtractor, PatternExtractor, WireExtractor, DEFAULT_CODE_PATTERN};
pub use prefix::{attach_prefix, generate_prefix, PrefixError, PrefixTemplates, PrefixedChapter, PREFIX_SEPARATOR};
pub use split::{split_chapters, wrap_at_sentences, Chapter, SplitConfig, DEFAULT_HEADING_PATTERNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    StandardDocument,
    Dictionary,
    Tutorial,
    SentimentNews,
    Law,
    ExamQuestion,
}

impl SourceKind {
    pub const ALL: [SourceKind; 6] = [
        SourceKind::StandardDocument,
        SourceKind::Dictionary,
        SourceKind::Tutorial,
        SourceKind::SentimentNews,
        SourceKind::Law,
        SourceKind::ExamQuestion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::StandardDocument => "standard_document",
            SourceKind::Dictionary => "dictionary",
            SourceKind::Tutorial => "tutorial",
            SourceKind::SentimentNews => "sentiment_news",
            SourceKind::Law => "law",
            SourceKind::ExamQuestion => "exam_question",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
    pub source_path: String,
    pub source_kind: SourceKind,
}

/// A file that could not be turned into a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub item: String,
    pub reason: String,
}

impl Skip {
    pub fn new(item: impl Into<String>, reason: impl Into<String>) -> Self {
        Skip {
            item: item.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOutput {
    pub documents: Vec<RawDocument>,
    pub skipped: Vec<Skip>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Read every `.txt` file in `input_dir` (non-recursive) as one document.
///
/// Files are visited in lexicographic name order; the file stem is the
/// document id. Invalid UTF-8 and whitespace-only files are skipped and
/// reported, not fatal.
pub fn ingest_documents(input_dir: &Path, kind: SourceKind) -> Result<IngestOutput, IngestError> {
    if !input_dir.is_dir() {
        return Err(IngestError::MissingDir(input_dir.to_path_buf()));
    }
    let io_err = |source| IngestError::Io {
        path: input_dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(input_dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut out = IngestOutput::default();
    for path in files {
        let display = path.display().to_string();
        let bytes = std::fs::read(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let text = match String::from_utf8(bytes) {
            Ok(text) => text,
            Err(e) => {
                out.skipped.push(Skip::new(display, format!("invalid UTF-8: {e}")));
                continue;
            }
        };
        if text.trim().is_empty() {
            out.skipped.push(Skip::new(display, "empty document"));
            continue;
        }
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.documents.push(RawDocument {
            doc_id,
            text,
            source_path: display,
            source_kind: kind,
        });
    }
    Ok(out)
}
