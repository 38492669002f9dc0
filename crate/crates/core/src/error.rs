use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("split conflict: subject `{0}` is listed in more than one split")]
    SplitConflict(String),
    #[error("keyframes not sorted in video `{0}`")]
    KeyframesNotSorted(String),
    #[error("duplicate video id `{0}`")]
    DuplicateVideo(String),
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("frame {frame} outside span [{first}, {last}]")]
    OutsideSpan { frame: u64, first: u64, last: u64 },
    #[error("box does not overlap the frame")]
    NoOverlap,
    #[error("empty mask")]
    EmptyMask,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sequence too short: {0}")]
    SequenceTooShort(String),
    #[error("not enough subjects: need {needed}, have {available}")]
    NotEnoughSubjects { needed: usize, available: usize },
    #[error("probe subject `{0}` has no gallery entry")]
    ProbeNotEnrolled(String),
    #[error("no imposter probes available for FAR below 100%")]
    NoImposters,
    #[error("missing embedding for video `{0}`")]
    MissingEmbedding(String),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(u64),
    #[error("invalid state: {0}")]
    State(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
