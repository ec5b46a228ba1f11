use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("missing cell at age {age}, year {year}")]
    MissingCell { age: u32, year: i32 },

    #[error("non-positive exposure {value} at age {age}, year {year}")]
    NonPositiveExposure { age: u32, year: i32, value: f64 },

    #[error("negative deaths {value} at age {age}, year {year}")]
    NegativeDeaths { age: u32, year: i32, value: f64 },

    #[error("zero deaths at age {age}, year {year}; the Lee-Carter fitter requires positive counts")]
    ZeroDeaths { age: u32, year: i32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot bracket pseudo-deaths for residual {residual} at age {age}, year {year}")]
    Bracket { age: u32, year: i32, residual: f64 },

    #[error("degenerate Lee-Carter fit: {0}")]
    DegenerateFit(String),

    #[error("non-finite value in LSTM {0}; try a smaller learning rate")]
    Diverged(String),

    #[error("every grid configuration diverged")]
    AllConfigsDiverged,

    #[error("bootstrap member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: need at least {required}, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("sample has zero variance")]
    ZeroVariance,

    #[error("singular regression: {0}")]
    Singular(String),

    #[error("prediction interval bounds inverted at index {0}")]
    InvertedBounds(usize),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
