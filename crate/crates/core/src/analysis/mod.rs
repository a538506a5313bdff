//! Statistics across runs: correlations, seed rankings, score distributions
//! and embedding-space anisotropy.

mod anisotropy;
mod correlation;
mod seeds;

pub use anisotropy::{anisotropy_report, AnisotropyReport};
pub use correlation::{correlate, pearson, spearman, CorrelationResult};
pub use seeds::{
    distribution_report, rank_seeds, DatasetRanking, DistributionReport, Flip, MissingCell,
    RankEntry, SeedRanking, SeedRunTable, SeedSummary,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} points, got {found}")]
    TooFewPoints { required: usize, found: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("non-finite value")]
    NonFinite,
    #[error("need at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("need at least 2 datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("duplicate cell ({seed}, {dataset})")]
    DuplicateCell { seed: String, dataset: String },
    #[error("dataset {0:?} not in table")]
    MissingDataset(String),
    #[error("need at least {required} rows, got {found}")]
    TooFewRows { required: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
