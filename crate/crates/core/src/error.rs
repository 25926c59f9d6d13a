use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("step {step} out of range (valid 1..={max})")]
    StepOutOfRange { step: usize, max: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("unsupported eta {0} (only 0 and 1 are defined)")]
    UnsupportedEta(f64),
    #[error("invalid step list: {0}")]
    InvalidStepList(String),
    #[error("oracle denoiser has no recorded noise for step {0}")]
    MissingOracleEntry(usize),
    #[error("denoiser: {0}")]
    Denoiser(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("symbol {0} outside the coder alphabet")]
    SymbolOutOfAlphabet(i64),
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error("truncated stream")]
    Truncated,
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("captioner: {0}")]
    Captioner(String),
    #[error("rd evaluation: {0}")]
    Rd(String),
    #[error("at cell (quant_step={quant_step}, N_r={n_r}): {source}")]
    Cell {
        quant_step: f64,
        n_r: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier, used for CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidRange(_) => "invalid-range",
            Error::StepOutOfRange { .. } => "step-out-of-range",
            Error::ShapeMismatch(..) => "shape-mismatch",
            Error::UnsupportedEta(_) => "unsupported-eta",
            Error::InvalidStepList(_) => "invalid-step-list",
            Error::MissingOracleEntry(_) => "missing-oracle-entry",
            Error::Denoiser(_) => "denoiser",
            Error::Config(_) => "config",
            Error::NonFinite(_) => "non-finite",
            Error::SymbolOutOfAlphabet(_) => "symbol-out-of-alphabet",
            Error::Corrupt(_) => "corrupt",
            Error::Truncated => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::BadMagic => "bad-magic",
            Error::BadVersion(_) => "bad-version",
            Error::Captioner(_) => "captioner",
            Error::Rd(_) => "rd",
            Error::Cell { source, .. } => source.code(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
