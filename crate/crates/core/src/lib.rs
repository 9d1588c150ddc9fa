//! Speaker diarization of TV series guided by visual dialogue patterns.
//!
//! The crate is organised as a chain of stages:
//!
//! * [`shot_analysis`] splits a frame stream into shots and labels recurring shots.
//! * [`pattern_miner`] finds alternating shot-label runs (dialogue patterns) and
//!   maps speech segments onto them.
//! * [`embedding_space`] holds segment embeddings, the within-class covariance
//!   and the Mahalanobis / whitening geometry built from it.
//! * [`constrained_hac`] is the Ward agglomerative engine with cannot-link
//!   constraints, dendrogram forests and silhouette cuts.
//! * [`pipeline`] wires the two clustering steps together (local per dialogue,
//!   then global over local speakers).
//! * [`eval`] scores every stage (cut/similarity F1, DER, single-show DER).
//!
//! [`synth`] generates synthetic episodes with planted ground truth and [`io`]
//! reads and writes the on-disk formats used by the CLI.

pub mod constrained_hac;
pub mod embedding_space;
pub mod error;
pub mod eval;
pub mod io;
pub mod pattern_miner;
pub mod pipeline;
pub mod shot_analysis;
pub mod synth;
pub mod union_find;

pub use error::{Error, Result};
