use std::path::PathBuf;

use muskat_core::MuskatError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// `line` is `None` for errors that are not tied to one input line.
    #[error("{}{message}", location(.line))]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Core(#[from] MuskatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

impl LabError {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Self::Config {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
