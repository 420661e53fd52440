//! Trajectory-annotation pipeline, toy three-stage alignment trainer, and
//! temporal-grounding / dense-captioning metrics.

pub mod ablation;
pub mod metrics;
pub mod parse_tree;
pub mod pipeline;
pub mod trainer;
pub mod trajectory;
