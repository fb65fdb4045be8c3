//! Structured testing records to pre-training text.
//!
//! Records are redacted and field-merged, then serialized two ways: a
//! single-line dict whose testing-item entry holds a markdown table of the
//! food's tests (Datav1), and K constrained random verbalizations through a
//! generator (Datav2), where every field is used at least once and at most
//! twice across the K texts and each text draws a temperature in [0.5, 1.0].

mod datav1;
mod datav2;
mod markdown;
mod record;
mod redact;

pub use datav1::{build_datav1, group_records, Datav1Config, Datav1Error, Datav1Example};
pub use datav2::{
    build_datav2, sample_field_assignment, sample_temperature, temperature_from_unit, AssignmentError,
    Datav2Error, FieldAssignment, GenerationParams, TEMPERATURE_MAX, TEMPERATURE_MIN,
};
pub use markdown::{parse_markdown_table, render_markdown_table, TableError};
pub use record::{load_records, RecordError, RecordLoad, StructuredRecord};
pub use redact::{merge_fields, redact, Merge, MergeError, MergeSpec, RedactionSpec};
