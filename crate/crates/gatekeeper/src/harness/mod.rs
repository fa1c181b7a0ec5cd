//! CLI orchestration: configuration, the pretrain/finetune/evaluate
//! pipeline, report rendering, and the self-check suite.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod selfcheck;
mod svg;

pub use config::ExperimentConfig;
pub use manifest::RunManifest;
