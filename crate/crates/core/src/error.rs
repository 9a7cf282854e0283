use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("sanitization did not converge: a second pass still changed {text:?}")]
    NonConvergent { text: String },

    #[error("answer {answer:?} not found in context")]
    AnswerNotFound { answer: String },

    #[error("datasets are not aligned: {} id(s) only in English input {:?}, {} id(s) only in Hindi input {:?}",
        .only_en.len(), .only_en, .only_hi.len(), .only_hi)]
    Alignment { only_en: Vec<String>, only_hi: Vec<String> },

    #[error("passage has no tokens")]
    EmptyPassage,

    #[error("answer ends at character {answer_end} but the passage is truncated at character {kept_until}")]
    AnswerTruncated { answer_end: usize, kept_until: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid rule {name:?}: {source}")]
    Rule {
        name: String,
        #[source]
        source: regex::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag, used for one-line CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::NonConvergent { .. } => "non_convergent",
            Error::AnswerNotFound { .. } => "answer_not_found",
            Error::Alignment { .. } => "alignment",
            Error::EmptyPassage => "empty_passage",
            Error::AnswerTruncated { .. } => "answer_truncated",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Rule { .. } => "rule",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
