use crate::types::CollectiveKind;
use crate::volume::Volume;

/// Crate-wide error type. Every validation failure names the offending
/// field or input line so the CLI can surface it directly.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field `{field}` must be at least 1")]
    ZeroField { field: &'static str },

    #[error("elem_bytes must be one of 1, 2, 4, 8 (got {value})")]
    BadElemBytes { value: u32 },

    #[error("hidden ({hidden}) must be divisible by attn_heads ({heads})")]
    HiddenNotDivisible { hidden: u64, heads: u64 },

    #[error("devices ({devices}) must be divisible by tensor*pipeline ({tensor}*{pipeline})")]
    NonDivisibleLayout {
        devices: u64,
        tensor: u64,
        pipeline: u64,
    },

    #[error("ZeRO-3 combined with pipeline parallelism (pipeline={pipeline}) is not supported")]
    Zero3WithPipeline { pipeline: u64 },

    #[error("layers ({layers}) must be divisible by pipeline ({pipeline})")]
    LayersNotDivisible { layers: u64, pipeline: u64 },

    #[error("attn_heads ({heads}) must be divisible by tensor ({tensor})")]
    HeadsNotDivisible { heads: u64, tensor: u64 },

    #[error("bucket_elems must be at least 1")]
    BucketTooSmall,

    #[error("event invariant violated: {reason}")]
    BadEvent { reason: String },

    // Flat key/value config files.
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("config line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("config line {line}: expected `key = value`")]
    BadConfigLine { line: usize },

    #[error("config is missing required key `{key}`")]
    MissingKey { key: &'static str },

    // Trace log parsing. Line numbers are 1-based.
    #[error("trace line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("trace line {line}: unknown collective kind `{token}`")]
    UnknownKind { line: usize, token: String },

    #[error("trace line {line}: non-numeric `{field}` field: `{token}`")]
    NonNumericField {
        line: usize,
        field: &'static str,
        token: String,
    },

    #[error(
        "oracle mismatch for {kind} (payload {payload_elems} elems, group {group_size}): \
         simulated {simulated} vs formula {formula}"
    )]
    OracleMismatch {
        kind: CollectiveKind,
        payload_elems: u64,
        group_size: u64,
        simulated: Volume,
        formula: Volume,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
