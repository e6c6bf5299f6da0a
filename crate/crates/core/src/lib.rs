//! Layout-aware PDF-to-Markdown transformation.
//!
//! Pages arrive as spans with geometry and reading order. A classifier labels
//! each span KEEP, DELETE or INSERT_LEFT; the labels become an edit queue of
//! copy actions and generation triggers; the executor runs the queue against a
//! backbone that only has to produce what cannot be copied from the PDF.

pub mod document;
pub mod editability;
pub mod error;
pub mod executor;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod queue;
pub mod synth;

pub use document::{ingest_spans, serialize_pages, BBox, EditLabel, Page, Span};
pub use editability::{Classifier, ClassifierKind, HeuristicRules};
pub use error::{BackboneError, Error, Result};
pub use executor::{batch_execute, execute, Backbone, ExecConfig, RemoteBackbone, ScriptedBackbone, Transcript};
pub use par::Parallelism;
pub use pipeline::{run_corpus, run_corpus_strict, PageOutcome, PipelineConfig};
pub use queue::{build_edit_queue, build_page_queue, degenerate_queue, EditAction, EditQueue, QueueConfig};
