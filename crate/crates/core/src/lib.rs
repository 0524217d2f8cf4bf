//! Offline analytics for multi-user VR session recordings.
//!
//! The pipeline runs in stages: load or synthesize session recordings
//! ([`recording`], [`synth`]), label speech activity and turn transitions
//! from the per-user volume channel ([`speech`]), extract fixed-schema
//! behavioral features ([`geometry`], [`features`]), materialize balanced
//! task datasets ([`dataset`]), train classifiers ([`models`]), and evaluate
//! and interpret them ([`eval`]).

pub mod dataset;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod models;
pub mod recording;
pub mod seeds;
pub mod speech;
pub mod synth;
