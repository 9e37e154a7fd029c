//! Topic discovery and few-shot stance classification for archives of short
//! social-media posts.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! * [`filterlang`] replays a boolean search query against a local archive.
//! * [`corpus`] loads, subsets and exports post archives and gold annotations.
//! * [`textprep`] and [`topics`] turn posts into n-gram counts, cluster their
//!   embeddings and rank topic keywords with class-based TF-IDF.
//! * [`stance`] renders the staged few-shot prompt (translation, step-by-step
//!   reasoning, decision) and drives a generation backend.
//! * [`evalmetrics`] scores predictions against gold labels.
//! * [`timeline`] aggregates everything into per-day series, CSV and SVG.
//! * [`pipeline`] wires the stages together behind a config file.

pub mod corpus;
pub mod evalmetrics;
pub mod filterlang;
pub mod pipeline;
pub mod stance;
pub mod text;
pub mod textprep;
pub mod timeline;
pub mod topics;

pub use corpus::{Corpus, Post, StanceLabel, TopicLabelManual};
pub use filterlang::{parse_query, print_query, QueryAst};
