//! Token-budgeted evidence control for multi-hop retrieval-augmented generation.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`] loads HotpotQA-style records and chunks them into titled passages.
//! - [`index`] embeds chunks and serves cosine top-k retrieval per namespace.
//! - [`oracle`] hides the model-dependent primitives (ledger extraction, gap
//!   assessment, generation, judging) behind one trait, with a deterministic
//!   rule-based backend and an HTTP backend.
//! - [`scoring`] computes the five utility terms for a candidate passage.
//! - [`selection`] estimates effective capacity and assembles evidence under a
//!   hard token budget.
//! - [`controller`] runs the gap-aware repair loop and the baseline controllers.
//! - [`perturb`] builds noise and redundancy stress corpora.
//! - [`evaluate`] computes evidence P/R/F1, token statistics and reports.
//! - [`cli`] wires everything into the `evctl` binary.
//!
//! [`synth`] generates seeded synthetic multi-hop worlds that follow the
//! rule-based oracle's markup convention.

pub mod cli;
pub mod config;
pub mod controller;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod http;
pub mod index;
pub mod oracle;
pub mod perturb;
pub mod scoring;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
