//! Evaluation: hierarchical Dice via bit codes, normalized surface Dice and
//! bootstrap confidence intervals.

mod bootstrap;
mod codec;
mod report;
mod surface;

pub use bootstrap::{bootstrap_ci, percentile_sorted, DEFAULT_ITERATIONS};
pub use codec::{build_bit_codec, dice, hierarchical_confusion, BitCodec, BitField, ConfusionCounts};
pub use report::{evaluate_pair, evaluate_pair_with_tolerance, ClassSummary, ScoreSet, Summary};
pub use surface::{nsd, offset_distance_sq, surface_voxels, NSD_TOLERANCE_MM};
