use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing mandatory column '{0}'")]
    MissingColumn(String),

    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },

    #[error("automatic-operation policy 'flag' requires an is_auto column")]
    MissingAutoFlag,

    #[error("quote series for {0} is empty")]
    EmptyQuotes(String),

    #[error("trade on {date} is not on the {ticker} trading calendar")]
    OffCalendar { ticker: String, date: String },

    #[error("trade ticker {found} does not match calendar ticker {expected}")]
    TickerMismatch { expected: String, found: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("no valid edge swap found after {attempts} attempts")]
    NoSwapPossible { attempts: usize },

    #[error("target assortativity {target} not reached (best {best}) after {steps} steps")]
    TargetUnreachable { target: f64, best: f64, steps: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
