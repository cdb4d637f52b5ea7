use thiserror::Error;

/// Errors raised across the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed strace line {line_no}: {text}")]
    MalformedLine { line_no: usize, text: String },

    #[error("duplicate syscall name in alphabet: {0}")]
    DuplicateName(String),

    #[error("max_len must be >= 1")]
    ZeroMaxLen,

    #[error("sequences were encoded over different alphabets")]
    AlphabetMismatch,

    #[error("alignment needs {required} matrix cells but the budget is {available}")]
    MemoryBudget { required: u64, available: u64 },

    #[error("invalid scoring scheme: {0}")]
    InvalidScheme(String),

    #[error("aligned sequences have different lengths ({0} vs {1})")]
    AlignedLengthMismatch(usize, usize),

    #[error("alignment column {0} holds a gap in both sequences")]
    DoubleGap(usize),

    #[error("unknown app id: {0}")]
    UnknownApp(String),

    #[error("exhaustive bagging needs {combinations} combinations, cap is {cap}; use bootstrap mode")]
    ExhaustiveCapExceeded { combinations: u64, cap: u64 },

    #[error("invalid bagging plan: {0}")]
    InvalidPlan(String),

    #[error("score vectors have different lengths ({0} vs {1})")]
    VectorLengthMismatch(usize, usize),

    #[error("reference bag needs at least 2 members, got {0}")]
    BagTooSmall(usize),

    #[error("only verified legitimate sequences may enter the reference store (got label {0})")]
    StoreAdmission(String),

    #[error("confidence interval must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("payload must be non-empty")]
    EmptyPayload,

    #[error("invalid noise rate: {0}")]
    InvalidNoiseRate(f64),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{context}: need at least {required} samples, got {available}")]
    TooFewSamples {
        context: String,
        required: usize,
        available: usize,
    },

    #[error("malformed sequence file {path}: {reason}")]
    MalformedSequenceFile { path: String, reason: String },

    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: String, reason: String },

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it surfaced from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
