//! Toolkit for reverse-engineering the stage structure of machine-learning
//! pipelines from notebook source code.
//!
//! The crate is organized around the workflow it supports:
//!
//! - [`taxonomy`] — stage vocabularies, the unification algebra that merges
//!   two of them into one, headword mutation, and back-projection of unified
//!   labels onto the source vocabularies.
//! - [`ingest`] — notebook and ground-truth loading, cell sanitization, and
//!   statement-level instruction extraction with full provenance.
//! - [`classify`] — the rule-based and language-model classifier backends,
//!   prompt rendering, label normalization, and per-cell aggregation.
//! - [`inference`] — a chat-completions client with log-probability capture,
//!   timing, and a record/replay cassette for deterministic runs.
//! - [`stats`] — the metrics and hypothesis tests of the analysis plan:
//!   multiclass MCC, per-class F1, McNemar (exact and asymptotic),
//!   Cochran's Q, Holm-corrected post-hoc tests, Pearson chi-square
//!   goodness-of-fit, and Fleiss' kappa.
//! - [`insights`] — stage frequencies, transition matrices, frequent-pattern
//!   mining, and goodness-of-fit comparisons against reference distributions.

pub mod classify;
pub mod inference;
pub mod ingest;
pub mod insights;
pub mod stats;
pub mod taxonomy;
