//! On-disk formats and the immutable structures they load into.

mod dataset;
mod emb1;
mod labels;
mod qrels;
mod text;

pub use dataset::{shard_dataset, split_dataset, LabeledDataset, LabeledRows, Split, SplitSpec};
pub use emb1::{load_embeddings, write_embeddings, EmbeddingMatrix, FORMAT_VERSION, MAGIC};
pub use labels::{load_labels, parse_labels, LabelTable};
pub use qrels::{load_qrels, parse_qrels, Qrels};
pub use text::{load_jsonl, parse_jsonl, TextRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic bytes (expected \"EMB1\")")]
    BadMagic,
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("header mismatch: expected {expected} entries, found {actual}")]
    HeaderMismatch { expected: u64, actual: u64 },
    #[error("truncated file while reading {0}")]
    Truncated(&'static str),
    #[error("non-finite value in row {row}")]
    NonFiniteValue { row: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("id is not valid UTF-8")]
    InvalidId,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("conflicting grades for ({query_id}, {doc_id}): {first} vs {second}")]
    ConflictingGrade {
        query_id: String,
        doc_id: String,
        first: u32,
        second: u32,
    },
    #[error("row {0:?} has no label")]
    MissingLabel(String),
    #[error("label for unknown id {0:?}")]
    UnknownId(String),
    #[error("label index {label} out of range for k={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("need at least 2 label classes, found {0}")]
    TooFewClasses(usize),
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("need at least {required} rows, found {found}")]
    TooFewRows { required: usize, found: usize },
    #[error("class {0:?} never appears in the train split")]
    MissingClassInTrain(String),
    #[error("shard size must be at least 1")]
    ZeroShardSize,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
