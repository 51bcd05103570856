//! Specialist VQA curriculum construction and clinical evaluation.
//!
//! The crate is organised along the pipeline:
//!
//! * [`corpus`]: image metadata, tabular and specialist reports, the
//!   negative-biomarker sampler and patient-disjoint splits.
//! * [`guidelines`]: guideline documents and placeholder substitution.
//! * [`promptgen`]: the QA-generation prompt templates and job planning.
//! * [`llm_gateway`]: text-generation backends with caching, retries and
//!   bounded parallelism.
//! * [`qa_engine`]: numbered QA parsing, validation and dataset assembly.
//! * [`eval_harness`]: staging, referral and biomarker evaluation against a
//!   model endpoint using the two-phase generate-then-continue protocol.
//! * [`stats`]: confusion matrices, micro-F1, bootstrap intervals, McNemar,
//!   false discovery rate, per-grade sensitivity and Likert summaries.
//! * [`reader_study`]: blinded report-grading sessions and rating capture.
//! * [`manifest`]: run manifests and content digests.

pub mod corpus;
pub mod eval_harness;
pub mod guidelines;
pub mod llm_gateway;
pub mod manifest;
pub mod promptgen;
pub mod qa_engine;
pub mod reader_study;
pub mod rng;
pub mod stats;

mod jsonl;

pub use jsonl::{read_jsonl, write_jsonl, JsonlError, LineError};
