use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid-argument: {0}")]
    InvalidArgument(String),

    #[error("invalid-index: {0}")]
    InvalidIndex(String),

    #[error("not-a-container: {0}")]
    NotAContainer(String),

    #[error("corrupt-index: stored crc32 {stored:#010x}, computed {computed:#010x}")]
    CorruptIndex { stored: u32, computed: u32 },

    #[error("unsupported-version: {0}")]
    UnsupportedVersion(u16),

    #[error("duplicate-variable: tile/{row}/{col} already written")]
    DuplicateVariable { row: u32, col: u32 },

    #[error("shape-mismatch: expected {expected} bytes, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("incomplete-container: missing {}", format_cells(.missing))]
    IncompleteContainer { missing: Vec<(u32, u32)> },

    #[error("invalid-state: {0}")]
    InvalidState(String),

    #[error("window-out-of-bounds: ({x}, {y}, {w}x{h}) outside {width}x{height} image")]
    WindowOutOfBounds {
        x: u64,
        y: u64,
        w: u64,
        h: u64,
        width: u64,
        height: u64,
    },

    #[error("corrupt-chunk: {name} (stored crc32 {stored:#010x}, computed {computed:#010x})")]
    CorruptChunk {
        name: String,
        stored: u32,
        computed: u32,
    },

    #[error("partial-failure: {} window(s) unserved: {source}", .unserved.len())]
    PartialFailure {
        unserved: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt-blob: {0}")]
    CorruptBlob(String),

    #[error("corrupt-patch-file: {path}: {reason}")]
    CorruptPatchFile { path: PathBuf, reason: String },

    #[error("memory-budget-exceeded: blob needs {needed} bytes, budget is {budget}")]
    MemoryBudgetExceeded { needed: u64, budget: u64 },

    #[error("processor-error: {processor} failed on patch {patch}: {message}")]
    Processor {
        processor: String,
        patch: usize,
        message: String,
    },

    #[error("equivalence-failure: {0}")]
    Equivalence(String),

    #[error("io-error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures that indicate wrong content rather than an
    /// environmental problem.
    pub fn is_correctness_failure(&self) -> bool {
        match self {
            Error::CorruptChunk { .. }
            | Error::CorruptBlob(_)
            | Error::CorruptPatchFile { .. }
            | Error::Equivalence(_) => true,
            Error::PartialFailure { source, .. } => source.is_correctness_failure(),
            _ => false,
        }
    }
}

fn format_cells(cells: &[(u32, u32)]) -> String {
    cells
        .iter()
        .map(|(r, c)| format!("tile/{r}/{c}"))
        .collect::<Vec<_>>()
        .join(", ")
}
