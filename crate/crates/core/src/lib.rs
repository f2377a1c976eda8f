//! Adaptive constraint-driven traffic classification.
//!
//! The pipeline has three stages:
//!
//! 1. [`explore`] ranks packet-header fields by importance per bit and trains a
//!    pool of tree ensembles, one per selected field subset.
//! 2. [`profile`] measures (or models) each member's time-to-decision and unit
//!    memory at a grid of batch sizes.
//! 3. [`schedule`] picks the member and batch size with the best F1-to-TTD ratio
//!    that fits the live traffic rate and memory budget; [`simulate`] replays
//!    traffic through that scheduler tick by tick.
//!
//! Supporting modules: [`traffic`] (pcap ingestion, synthetic traces, splits),
//! [`encode`] (header field registry and ternary bit encoding) and [`models`]
//! (ensembles, the flow-statistics baseline, F1 and permutation importance).

pub mod encode;
pub mod error;
pub mod explore;
pub mod models;
pub mod profile;
pub mod schedule;
pub mod simulate;
pub mod traffic;

pub use error::{AcdcError, Result};
