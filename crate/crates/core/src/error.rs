use std::path::PathBuf;

use crate::world::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scene: {}", join(.0))]
    InvalidScene(Vec<Violation>),

    #[error("script edit rejected: {0}")]
    Script(String),

    #[error("{scenario} has no {setting} setting")]
    InvalidCombination { scenario: String, setting: String },

    #[error("could not sample a valid {group} scene for index {index} after {retries} attempts")]
    SamplingExhausted { group: String, index: usize, retries: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    Metric(String),

    #[error("videos without a pair partner: {}", .0.join(", "))]
    Orphans(Vec<String>),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    ScoreLine { line: usize, message: String },

    #[error("unknown video id {0}")]
    UnknownVideo(String),

    #[error("scores missing for {} video(s): {}", .0.len(), .0.join(", "))]
    MissingScores(Vec<String>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
