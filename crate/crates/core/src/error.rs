use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: cannot decode image: {reason}", path.display())]
    Image { path: PathBuf, reason: String },

    #[error("malformed MIDI at byte offset {offset}: {reason}")]
    MidiParse { offset: usize, reason: String },

    #[error("unsupported MIDI file format {0} (only formats 0 and 1 are accepted)")]
    UnsupportedMidiFormat(u16),

    #[error("performance contains no note onsets")]
    EmptyPerformance,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("staff detection failed on strip {strip_index}: {reason}")]
    StaffDetection { strip_index: usize, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{0}")]
    Validation(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("{0}")]
    Domain(String),

    #[error("alignment infeasible: end cell unreachable in a {rows}x{cols} cost matrix")]
    Infeasible { rows: usize, cols: usize },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Infeasible,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Image { .. } => ErrorKind::Io,
            Error::Infeasible { .. } => ErrorKind::Infeasible,
            _ => ErrorKind::Validation,
        }
    }
}
