use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("point {0} exceeds the weight available in the base distribution")]
    NotSubdistribution(String),
    #[error("distributions are not nested")]
    NotNested,
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("weight must be strictly positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("duplicate point id {0}")]
    DuplicateId(String),
    #[error("transform table has no entry for p = {0}")]
    MissingTableEntry(f64),
    #[error("table knots must be increasing in q and non-decreasing in value")]
    NonMonotoneTable,
    #[error("invalid participation model: {0}")]
    InvalidModel(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("volume did not change, slope undefined")]
    ZeroVolumeChange,
    #[error("candidate pool is exhausted")]
    ExhaustedPool,
    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(&'static str),
    #[error("closed form requires the power participation model")]
    NonPowerModel,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no point satisfies the carveout conditions")]
    InfeasibleCarveout,
    #[error("instance has {got} points, limit is {max}")]
    SizeCap { max: usize, got: usize },
    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },
    #[error("unknown point id {0}")]
    UnknownPoint(String),
}
