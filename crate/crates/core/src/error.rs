use thiserror::Error;

/// Errors raised by the simulation, estimation, and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_users}x{expected_items}, got {users}x{items}")]
    DimensionMismatch {
        expected_users: usize,
        expected_items: usize,
        users: usize,
        items: usize,
    },

    #[error("timestep gap: expected step {expected}, got {got}")]
    TimestepGap { expected: usize, got: usize },

    #[error("rating without recommendation at step {step}, user {user}, item {item}")]
    RatingWithoutRecommendation { step: usize, user: usize, item: usize },

    #[error("recommended pair (user {user}, item {item}) at step {step} has no rating")]
    MissingRating { step: usize, user: usize, item: usize },

    #[error("repeat recommendation of (user {user}, item {item}) at step {step}, first seen at step {first}")]
    RepeatRecommendation {
        step: usize,
        user: usize,
        item: usize,
        first: usize,
    },

    #[error("step {step} recommends {got} items where {expected} were configured ({scope})")]
    QuotaViolation {
        step: usize,
        expected: usize,
        got: usize,
        scope: &'static str,
    },

    #[error("propensity log mismatch at step {step}: {reason}")]
    PropensityLog { step: usize, reason: String },

    #[error("index out of range: user {user}, item {item}")]
    IndexOutOfRange { user: usize, item: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("variance {sigma2} too large for mean {mu}: shape parameters would be ({a}, {b})")]
    VarianceTooLarge { mu: f64, sigma2: f64, a: f64, b: f64 },

    #[error("user {0} exhausted: no feasible item left")]
    UserExhausted(usize),

    #[error("positivity violated, use CAFL: propensity {propensity} at step {step}, user {user}, item {item}")]
    PositivityViolated {
        step: usize,
        user: usize,
        item: usize,
        propensity: f64,
    },

    #[error("assumption 3 violated: pair (user {user}, item {item}) has zero propensity at every step")]
    NeverRecommendable { user: usize, item: usize },

    #[error("horizon {horizon} exhausts catalogue of size {catalogue}")]
    HorizonExhaustsCatalogue { horizon: usize, catalogue: usize },

    #[error("step {0} has no full propensity table; the general estimator needs one for every step")]
    MissingPropensityTable(usize),

    #[error("estimator requires a no-repeat history")]
    RequiresNoRepeat,

    #[error("oracle limit exceeded: {0}")]
    OracleLimitExceeded(String),

    #[error("singular system while solving for {0}; increase regularization")]
    IncreaseRegularization(String),

    #[error("step size too large: objective {objective} exceeded 10x initial {initial}")]
    Diverged { objective: f64, initial: f64 },

    #[error("weights do not cover the observed pairs: {0}")]
    WeightCoverage(String),

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),

    #[error("undefined similarity: both item sets are empty")]
    UndefinedSimilarity,

    #[error("snapshot parse error on line {line}: {reason}")]
    Snapshot { line: usize, reason: String },

    #[error("propensity computation intractable: {0}")]
    Intractable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
