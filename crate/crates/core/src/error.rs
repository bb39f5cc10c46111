use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("architecture error: {0}")]
    Architecture(String),
    #[error("state error: {0}")]
    State(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while reading an `LPNW` checkpoint.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:02x?}, expected \"LPNW\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("checkpoint does not match any known architecture")]
    UnknownArchitecture,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset layout error: {0}")]
    Layout(String),
    #[error("no images found under {}", .0.display())]
    Empty(PathBuf),
}

#[derive(Debug, Error)]
#[error("{}: cannot decode {format}: {reason}", path.display())]
pub struct DecodeError {
    pub path: PathBuf,
    pub format: String,
    pub reason: String,
}
