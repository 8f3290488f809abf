//! Automatic labeling of cycling trajectories against a classified road
//! network, plus a temporal sequence classifier for per-frame infrastructure
//! prediction.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`ingest`] parses a road-network extract into classified 2D segments
//!    behind a spatial index.
//! 2. [`matcher`] assigns every GPS coordinate of a trajectory an
//!    infrastructure class and a confidence by geometric matching against
//!    that index.
//! 3. [`frames`] interpolates the labeled coordinates onto video-frame
//!    timestamps and applies manual override files.
//! 4. [`model`] trains a hierarchical sequence classifier (encoder,
//!    positional encoding, self-attention blocks, two-level decoder) on
//!    labeled feature sequences with a confidence-weighted loss.
//! 5. [`bench`] generates synthetic sparse-signal datasets and measures
//!    accuracy, ablations and blackout robustness.
//!
//! [`taxonomy`] holds the five main / thirteen sub infrastructure classes
//! shared by every stage; [`geometry`] is the pure 2D kernel used by the
//! matcher.

pub mod bench;
pub mod frames;
pub mod geometry;
pub mod ingest;
pub mod matcher;
pub mod model;
pub mod taxonomy;

pub use taxonomy::{ClassConfidence, MainClass, SubClass};
