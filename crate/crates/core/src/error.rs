use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate report id `{0}`")]
    DuplicateId(String),
    #[error("record `{id}`: {field} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label vector has {0} entries, expected 5")]
    UnknownLabelArity(usize),
    #[error("label value {0} is not 0 or 1")]
    InvalidLabelValue(i64),
    #[error("unknown entity label `{0}`")]
    UnknownEntityLabel(String),
    #[error("unknown relation type `{0}`")]
    UnknownRelationType(String),
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("entity {index} has empty text after normalization")]
    EmptyEntity { index: usize },
    #[error("relation {index} references an entity outside 0..{entities}")]
    RelationOutOfRange { index: usize, entities: usize },
    #[error("unknown report id `{0}`")]
    UnknownId(String),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("embedding of {0} has (near) zero norm")]
    DegenerateEmbedding(&'static str),
    #[error("document `{0}` has no text features")]
    MissingTextFeatures(String),
    #[error("contrastive loss is not finite")]
    NonFiniteLoss,
    #[error("contrastive loss needs at least one positive")]
    NoPositives,
    #[error("contrastive loss needs at least one negative")]
    NoNegatives,
    #[error("training loss diverged in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("corpus has fewer than two train records")]
    EmptyTrainSplit,
    #[error("no eligible candidate documents for query `{0}`")]
    EmptyCandidateSet(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("run has no result for query `{0}`")]
    MissingResult(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateId(_) => "DuplicateId",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::UnknownLabelArity(_) => "UnknownLabelArity",
            Error::InvalidLabelValue(_) => "InvalidLabelValue",
            Error::UnknownEntityLabel(_) => "UnknownEntityLabel",
            Error::UnknownRelationType(_) => "UnknownRelationType",
            Error::UnknownSplit(_) => "UnknownSplit",
            Error::EmptyEntity { .. } => "EmptyEntity",
            Error::RelationOutOfRange { .. } => "RelationOutOfRange",
            Error::UnknownId(_) => "UnknownId",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DegenerateEmbedding(_) => "DegenerateEmbedding",
            Error::MissingTextFeatures(_) => "MissingTextFeatures",
            Error::NonFiniteLoss => "NonFiniteLoss",
            Error::NoPositives => "NoPositives",
            Error::NoNegatives => "NoNegatives",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::EmptyTrainSplit => "EmptyTrainSplit",
            Error::EmptyCandidateSet(_) => "EmptyCandidateSet",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::MissingResult(_) => "MissingResult",
        }
    }
}
