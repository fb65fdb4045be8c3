//! Corpus construction for a food-testing domain language model.
//!
//! The crate turns three kinds of raw material into training data:
//!
//! * OCR text of standard documents, split into chapters, attributed to
//!   their document with a generated prefix, and cleaned of disfluent
//!   sentences by n-gram perplexity ([`document`], [`quality`]);
//! * private structured testing records, redacted and serialized either as a
//!   dict holding a markdown table or as constrained random verbalizations
//!   ([`structured`]);
//! * auxiliary sources: dictionaries, tutorials, news, laws, exam questions.
//!
//! It also builds an instruction-tuning dataset from forum answers and
//! evolved seed instructions ([`instruct`]), and a triple store with
//! entity-linked retrieval and prompt assembly ([`kg`]). [`pipeline`] wires
//! the stages together from one config file.

pub mod document;
pub mod example;
pub mod fixture;
pub mod generator;
pub mod instruct;
pub mod kg;
pub mod pipeline;
pub mod quality;
pub mod seed;
pub mod structured;
pub mod template;

pub use example::{Source, TrainingExample};
