use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("user `{user}` has a transaction on item `{item}` without the shared attribute `{attr}`")]
    MissingSharedAttr { user: String, item: String, attr: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("attribute `{0}` is already declared")]
    DuplicateAttribute(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset has no user histories")]
    EmptyDataset,

    #[error("value {value} is not a grid value of ({item}, {attr})")]
    NotOnGrid { item: String, attr: String, value: f64 },

    #[error("confidence is undefined: the antecedent matches no history")]
    UndefinedConfidence,

    #[error("lift is undefined: the consequent matches no history")]
    UndefinedLift,

    #[error("rules compared under different consequent modes")]
    ModeMismatch,

    #[error("malformed rule: {0}")]
    MalformedRule(String),

    #[error("no label for history `{0}`")]
    MissingLabel(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
