//! Triple store with entity-linked retrieval and prompt assembly.
//!
//! A query is linked against the graph vocabulary by greedy longest match;
//! triples touching the matched entities are ranked by how many of them
//! they touch and rendered into a prompt alongside the query.

mod graph;
mod prompt;
mod query;
mod service;

pub use graph::{build_graph, load_triples, save_triples, KgSchema, KnowledgeGraph, Triple};
pub use prompt::{assemble_prompt, PromptBundle, PromptTemplate, TemplateError, DEFAULT_PROMPT_TEMPLATE};
pub use query::{parse_query, retrieve, EntityMatch, ParsedQuery, RetrievedTriple};
pub use service::{answer_query, QueryRequest, QueryServer, QuerySettings};

pub const DEFAULT_LIMIT: usize = 8;
