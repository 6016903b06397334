use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not parse schema: {0}")]
    SchemaParse(String),

    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),

    #[error("duplicate attribute `{attribute}` in relation `{relation}`")]
    DuplicateAttribute { relation: String, attribute: String },

    #[error("relation `{relation}` has a foreign key `{attribute}` to unknown relation `{references}`")]
    UnknownReference {
        relation: String,
        attribute: String,
        references: String,
    },

    #[error("relation `{relation}` is referenced by a foreign key but declares no primary key")]
    MissingPrimaryKey { relation: String },

    #[error("foreign-key cycle through relations {0:?}")]
    ForeignKeyCycle(Vec<String>),

    #[error("csv error in {relation}: {message}")]
    Csv { relation: String, message: String },

    #[error("relation `{relation}` is missing column `{column}`")]
    MissingColumn { relation: String, column: String },

    #[error("duplicate primary key `{key}` in relation `{relation}`")]
    DuplicatePrimaryKey { relation: String, key: String },

    #[error("null primary key at row {row} of relation `{relation}`")]
    NullPrimaryKey { relation: String, row: usize },

    #[error("value `{value}` of numeric attribute `{relation}.{attribute}` is not a number")]
    NotNumeric {
        relation: String,
        attribute: String,
        value: String,
    },

    #[error("relation `{0}` has no rows")]
    EmptyRelation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("k = {k} is out of range for a network with {nodes} nodes")]
    KOutOfRange { k: usize, nodes: usize },

    #[error("linked networks do not stitch into a tree: {0}")]
    NotATree(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown attribute `{relation}.{attribute}`")]
    UnknownAttribute { relation: String, attribute: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("query join graph is disconnected")]
    Disconnected,

    #[error("operand type mismatch on `{relation}.{attribute}`: {message}")]
    TypeMismatch {
        relation: String,
        attribute: String,
        message: String,
    },

    #[error("model was built for schema {model} but the schema fingerprint is {schema}")]
    FingerprintMismatch { model: String, schema: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("sampling rate {0} is outside (0, 1]")]
    RateOutOfRange(f64),

    #[error("samples do not cover relation `{0}`")]
    MissingSample(String),

    #[error("oracle budget exceeded: {needed} rows needed, cap is {cap}")]
    ResourceExceeded { needed: usize, cap: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
