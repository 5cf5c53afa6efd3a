//! Pixel- and tile-level segmentation scores.

mod curve;
mod pixel;
mod report;
mod tile;

pub use curve::{auprc, DEFAULT_AUPRC_THRESHOLDS};
pub use pixel::{confusion, prf_iou, support_weighted, Counts, Scores};
pub use report::{ClassReport, EvalReport, EvalSettings, Task, TileOutcome, DEFAULT_BINARIZE};
pub use tile::{fpr_by_tile, strata_f1, StrataF1, STRONG_PLUME_PIXELS};
