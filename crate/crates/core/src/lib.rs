//! Core algorithms for two-stage knowledge-graph question answering:
//! masking noisy entity/relation links, translating masked questions into
//! SPARQL silhouettes with a convolutional seq2seq model, correcting
//! silhouette relations with a KG-restricted graph-search classifier, and
//! scoring answers.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threads and
//! the command line live in the `silhouette` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod dataset;
pub mod graph_search;
pub mod kg;
pub mod metrics;
pub mod noise;
pub mod parallel;
pub mod pipeline;
pub mod seq2seq;
pub mod sparql;
pub mod text;
pub mod toybench;
