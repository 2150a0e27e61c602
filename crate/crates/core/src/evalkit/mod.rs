//! Pressure-map scoring: MAE, binarized R², contact-mask RMSD and corrected
//! R², each computed per frame and averaged over frames.

mod metrics;
mod report;

pub use metrics::{
    binarize, binarized_r2, contact_mask, corrected_r2, mae, mask_rmsd, r_squared, ContactMask,
    FrameAverage,
};
pub use report::{report, MetricReport, MetricRow, CSV_HEADER};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{pred} predicted frames for {gt} ground-truth frames")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("frame {frame}: {pred} predicted cells for {gt} ground-truth cells")]
    ShapeMismatch {
        frame: usize,
        pred: usize,
        gt: usize,
    },
    #[error("every frame has an empty contact mask")]
    AllFramesEmpty,
    #[error("model {model}: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<EvalError>,
    },
}
