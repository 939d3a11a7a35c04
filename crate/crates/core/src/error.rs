use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("silhouette area fraction {fraction:.6} is at or below the 0.1% floor")]
    FractionTooSmall { fraction: f64 },

    #[error("silhouette area fraction {fraction:.6} exceeds the 30% ceiling")]
    FractionTooLarge { fraction: f64 },

    #[error("silhouette of size {sil_w}x{sil_h} cannot be placed in a {frame_w}x{frame_h} frame")]
    NoPlacement {
        sil_w: usize,
        sil_h: usize,
        frame_w: usize,
        frame_h: usize,
    },

    #[error("no entries for hole-size interval {interval}")]
    EmptyInterval { interval: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("ground truth is empty; average precision is undefined")]
    EmptyGt,

    #[error("value {value} outside the open interval (0, 1)")]
    Domain { value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("every pixel is masked; reconstruction loss is undefined")]
    AllMasked,

    #[error("input too close to a non-differentiable point: {0}")]
    KinkDetected(String),

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: coordinate ({x}, {y}) outside the {width}x{height} frame")]
    Bounds {
        path: PathBuf,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unmatched file stems: {}", .0.join(", "))]
    MissingPair(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Invariant(_) => 4,
            _ => 3,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::FractionTooSmall { .. } => "FractionTooSmall",
            Self::FractionTooLarge { .. } => "FractionTooLarge",
            Self::NoPlacement { .. } => "NoPlacement",
            Self::EmptyInterval { .. } => "EmptyInterval",
            Self::EmptyDataset => "EmptyDataset",
            Self::DimMismatch { .. } => "DimMismatch",
            Self::EmptyGt => "EmptyGT",
            Self::Domain { .. } => "DomainError",
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::AllMasked => "AllMasked",
            Self::KinkDetected(_) => "KinkDetected",
            Self::Parse { .. } => "ParseError",
            Self::Bounds { .. } => "BoundsError",
            Self::Format(_) => "FormatError",
            Self::MissingPair(_) => "MissingPair",
            Self::Io { .. } => "IoError",
            Self::Config(_) => "ConfigError",
            Self::Invariant(_) => "InvariantViolation",
        }
    }
}
