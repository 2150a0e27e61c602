//! Sequence files, stream alignment, sliding windows, normalization and
//! dataset splits.

mod align;
mod dataset;
mod format;
mod normalize;
mod split;
mod window;

pub use align::{align_streams, align_timestamps, AlignedDataset, AlignedEntry, DEFAULT_TOLERANCE};
pub use dataset::{InputSelection, TargetKind, WindowView, WindowedDataset};
pub use format::{
    read_sequence, sequence_from_bytes, sequence_to_bytes, write_sequence, Payload, SequenceFile,
    SequenceKind, SEQUENCE_VERSION,
};
pub use normalize::{row_profile, Normalization, Window};
pub use split::{split, DatasetSplit};
pub use window::{make_windows, window_count, WindowIndex};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad sequence data: {0}")]
    FormatError(String),
    #[error("{0} stream is empty")]
    EmptyStream(&'static str),
    #[error("no pressure frame lies within tolerance of both other streams")]
    NoOverlap,
    #[error("need at least {needed} aligned frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("stream mismatch: {0}")]
    Mismatch(String),
}
