//! Commuting and accessibility analytics from mobile-network events.
//!
//! The pipeline runs ingest → anchors → geo → router → access → spatial →
//! stats, each stage usable on its own.

pub mod access;
pub mod anchors;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod router;
pub mod spatial;
pub mod stats;
pub mod synth;
