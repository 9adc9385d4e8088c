//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate ad_id `{0}`")]
    DuplicateAdId(String),

    #[error(
        "ad `{ad_id}` is linked to sponsor `{expected}`, but sponsor record `{got}` was supplied"
    )]
    SponsorMismatch {
        ad_id: String,
        expected: String,
        got: String,
    },

    #[error("unknown sponsor_id `{0}`")]
    UnknownSponsor(String),

    #[error("split fractions must sum to 1 (got {0})")]
    BadFractions(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("class {0} has zero count; balanced weights are undefined")]
    ZeroClassCount(usize),

    #[error("non-finite loss at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },

    #[error("token id {id} is out of range for vocabulary of size {vocab_size}")]
    UnknownTokenId { id: usize, vocab_size: usize },

    #[error("token `{0}` has no id; run unknown-token replacement first")]
    UnmappedToken(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("cannot decode image for ad `{ad_id}`: {detail}")]
    BadImage { ad_id: String, detail: String },

    #[error("unknown parameter group `{0}` in schedule")]
    UnknownParamGroup(String),

    #[error("unknown model selector `{got}`; valid: {valid}")]
    UnknownModel { got: String, valid: String },

    #[error("labels contain a single class; correlation is undefined")]
    SingleClassLabels,

    #[error("stage `{needed}` must run before `{stage}`: {detail}")]
    MissingUpstream {
        stage: String,
        needed: String,
        detail: String,
    },

    #[error("stale cache for stage `{stage}`: {detail}")]
    StaleCache { stage: String, detail: String },

    #[error("output directory `{0}` is locked by another run (remove the .lock file if stale)")]
    Locked(PathBuf),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("{failed} of {total} seed runs failed: {detail}")]
    PartialSeedRuns {
        failed: usize,
        total: usize,
        detail: String,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
