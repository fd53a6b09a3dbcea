use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    /// Two competing router logits sit on the top-K cut.
    #[error("top-K selection boundary: logits {upper} and {lower} differ by {gap:e}")]
    SelectionBoundary { upper: usize, lower: usize, gap: f64 },

    #[error("V-Sync requires at least one frequency")]
    EmptyFrequencies,

    #[error("mask selects no positions")]
    EmptyMask,

    #[error("gradient reached unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("unknown cell {0}")]
    UnknownCell(u32),

    #[error("cell {0} already exists")]
    DuplicateCell(u32),

    #[error("cell {child} already has parent {parent}")]
    AlreadyParented { child: u32, parent: u32 },

    #[error("edge would create a cycle: {}", format_path(.path))]
    Cycle { path: Vec<u32> },

    #[error("invalid splat: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSplat(Vec<crate::splat::FieldViolation>),

    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),

    #[error("malformed parameter image: {0}")]
    MalformedImage(String),

    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Divergence { epoch: usize, what: &'static str },

    #[error("synthetic generator drifted by {drift:e} (tolerance {tolerance:e})")]
    GeneratorDrift { drift: f64, tolerance: f64 },

    #[error("io: {0}")]
    Io(String),
}

fn format_path(path: &[u32]) -> String {
    path.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join("->")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
