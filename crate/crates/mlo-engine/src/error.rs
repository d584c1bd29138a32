use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("group `{group}` is both active and supporting in stage {stage}")]
    ActiveSupportingOverlap { group: String, stage: usize },

    #[error("group `{group}` was active in an earlier stage and reappears in stage {stage}")]
    ReuseAfterLearned { group: String, stage: usize },

    #[error("group `{group}` is referenced by no stage and not a remaining parameter")]
    OrphanGroup { group: String },

    #[error("remaining-parameter set mismatch for group `{group}`: {detail}")]
    RemainingMismatch { group: String, detail: String },

    #[error("stage indices must be strictly increasing from 1; got {0}")]
    BadStageOrder(usize),

    #[error("duplicate group name `{0}`")]
    DuplicateGroup(String),

    #[error("duplicate leaf name `{0}`")]
    DuplicateLeaf(String),

    #[error("leaf `{leaf}` in {context} resolves to nothing")]
    UnresolvedLeaf { leaf: String, context: String },

    #[error("stage {stage} references approximation of `{group}` produced at stage {producer}")]
    StageOrderViolation { stage: usize, group: String, producer: usize },

    #[error("no approximation available for group `{group}` (stage {stage} not yet solved)")]
    MissingApproximation { group: String, stage: usize },

    #[error("negative learn rate on group `{0}`")]
    NegativeLearnRate(String),

    #[error("tradeoff must be finite and non-negative in {0}")]
    BadTradeoff(String),

    #[error("ratio term `{term}` denominator {value:e} below the 1e-8 floor")]
    DivisionDegenerate { term: String, value: f64 },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("numeric failure at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<EngineError>,
    },

    #[error(transparent)]
    Ad(#[from] tensor_ad::AdError),
}

pub type Result<T> = std::result::Result<T, EngineError>;
