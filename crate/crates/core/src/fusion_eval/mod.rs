//! Linear subsystem fusion, open-set decisions, the challenge cost and DET curves.

mod cost;
mod decision;
mod det;
mod fusion;

pub use cost::{compute_cost, CostParams, CostReport};
pub use decision::{decide, mask_languages, pseudo_out_of_set, threshold_grid, tune_threshold, DecisionPolicy};
pub use det::{det_from_matrix, det_points, read_det, write_det, DetCurve, DetPoint};
pub use fusion::{apply_fusion, train_fusion, FusionConfig, FusionModel};
