//! Labelled grid records on disk, dataset splitting and classification
//! metrics.

mod metrics;
mod record;
mod split;

pub use metrics::{confusion, metrics, ConfusionMatrix, Metrics};
pub use record::{
    decode_record, encode_record, load_dataset, read_record, write_record, GridRecord,
    HEADER_LEN, RECORD_MAGIC,
};
pub use split::{split_dataset, split_indices, SplitDataset, SplitIndices, DEFAULT_RATIOS};

use thiserror::Error;

use crate::ds_fusion::FusionError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("file truncated: need {needed} bytes, have {available}")]
    TruncatedFile { needed: usize, available: usize },
    #[error("invalid label {0}")]
    InvalidLabel(u8),
    #[error("mass invariant violated at cell {0}")]
    MassInvariantViolation(usize),
    #[error("bad record header: {0}")]
    BadHeader(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid split ratios {0:?}")]
    BadRatios([f64; 3]),
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("manifest lists label {expected} for {file} but the record says {found}")]
    ManifestMismatch {
        file: String,
        expected: u8,
        found: u8,
    },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
