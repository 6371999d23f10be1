//! Student training material derived from a trained teacher: soft-target
//! variants, ProfWeight sample weights and teacher-labeled augmentation.

mod augment;
mod config;
mod profweight;
mod soft;
mod targets;
mod tune;

pub use augment::{augment, augmentation_rows, select_fraction, teacher_labels, FractionSweep};
pub use config::{default_alpha_grid, default_fraction_grid, AlphaSetting, DistillConfig, FractionSetting, Method};
pub use profweight::{probe_confidences, profweight, weights_from_confidences};
pub use soft::{matching_logits, mixed_labels, probability_shift, soft_targets};
pub use targets::{Provenance, SampleWeights, TargetKind, TargetSet};
pub use tune::{tune_alpha, tune_alpha_per_depth, SelectionMetric, StudentConfig};
