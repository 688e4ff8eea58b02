use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {row}, column `{column}`: {message}")]
    MalformedRow {
        /// 1-based data row index (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: summary row `{name}` is not an exchange record")]
    SummaryRow { row: usize, name: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },

    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("{0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Trading(#[from] TradingError),
}

/// Rejections raised by the obligation ledger and simulator.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TradingError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("unknown commitment `{0}`")]
    UnknownCommitment(String),
    #[error("unknown milestone `{0}`")]
    UnknownMilestone(String),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("{commitments} commitments requested but only {milestones} milestones issued")]
    TooManyCommitments { commitments: usize, milestones: usize },
    #[error("operator `{operator}` does not own commitment `{commitment}`")]
    NotOwner { operator: String, commitment: String },
    #[error("commitment `{0}` is closed")]
    ClosedCommitment(String),
    #[error("operator `{0}` cannot trade with itself")]
    SelfTrade(String),
    #[error("operator `{0}` is barred from buying: too many trades per completed milestone")]
    BarredTrader(String),
    #[error("milestone `{0}` is already completed")]
    MilestoneCompleted(String),
    #[error("commitment `{commitment}` is bound to milestone `{bound}`, not `{reported}`")]
    WrongMilestone {
        commitment: String,
        bound: String,
        reported: String,
    },
    #[error("operator `{operator}` cannot complete milestone `{milestone}`")]
    Incapable { operator: String, milestone: String },
    #[error("period {requested} cannot be settled; ledger is at period {current}")]
    PeriodMismatch { requested: u32, current: u32 },
    #[error("due period {due} is already past (ledger at period {current})")]
    PastDue { due: u32, current: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}
