//! Independent reference implementations and random fixtures for tests.

pub mod access;
pub mod anchors;
pub mod geo;
pub mod ingest;
pub mod router;
pub mod spatial;
pub mod stats;
