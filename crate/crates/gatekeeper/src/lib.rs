//! Confidence tuning and deferral evaluation for two-model cascades.
//!
//! A small model answers what it can and defers the rest to a large model.
//! This crate trains small classifiers and a tiny token model with a hybrid
//! correctness-aware loss that sharpens confident-correct predictions and
//! flattens incorrect ones, gates predictions on confidence or entropy
//! signals, and evaluates the resulting cascade: distributional overlap,
//! AUROC, deferral curves, and deferral performance.

pub mod cascade;
pub mod data;
pub mod error;
pub mod gating;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod seeding;
pub mod training;

pub use error::{Error, Result};
