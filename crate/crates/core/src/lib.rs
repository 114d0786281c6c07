//! Streaming log anomaly detection.
//!
//! Lines are masked and tokenized ([`preprocess`]), grouped into templates by
//! a trie parser ([`trie`]), scored for rarity with a generalized extreme
//! value fit over template counts ([`evt`]), and optionally confirmed by
//! experts whose answers are cached in a shared knowledge base ([`expert`]).
//! [`windows`] groups the stream into time windows and [`engine`] ties the
//! pieces together. [`eval`] holds dataset loaders, evaluation protocols and
//! benchmarks.

pub mod preprocess;
pub mod trie;
pub mod evt;
pub mod expert;
pub mod windows;
pub mod config;
pub mod engine;
pub mod eval;
