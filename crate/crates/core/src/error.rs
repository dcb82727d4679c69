//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-range argument.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter {
        /// Name of the offending field or argument.
        field: &'static str,
        /// Why the value was rejected.
        reason: String,
    },

    /// Two buffers that must agree in shape do not.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape {
        /// Shape required by the operation.
        expected: String,
        /// Shape actually supplied.
        actual: String,
    },

    /// A denoising step was asked to move forward in time.
    #[error("step ordering: t_prev = {t_prev} exceeds t = {t}")]
    StepOrder {
        /// Source timestep.
        t: usize,
        /// Requested destination timestep.
        t_prev: usize,
    },

    /// An input contained NaN or infinity where finite values are required.
    #[error("non-finite value in {context}")]
    Numeric {
        /// Which input or intermediate was non-finite.
        context: String,
    },

    /// The cumulative signal coefficient is exactly 1 at the queried
    /// timestep, so the noise scale \u{221a}(1\u{2212}\u{3b1}\u{304}_t) vanishes and
    /// noise-normalized quantities are undefined.
    #[error("alpha-bar equals 1 at t = {t}; noise scale is zero")]
    UnitAlphaBar {
        /// Offending timestep.
        t: usize,
    },

    /// A serialized tensor file failed to parse.
    #[error("format error at byte offset {offset}: {detail}")]
    Format {
        /// Byte offset of the first invalid or missing byte.
        offset: u64,
        /// What was wrong there.
        detail: String,
    },

    /// A CSV row's cell count disagrees with the header.
    #[error("csv row {row} has {actual} cells, header has {expected}")]
    RowArity {
        /// Zero-based row index.
        row: usize,
        /// Header cell count.
        expected: usize,
        /// Row cell count.
        actual: usize,
    },

    /// A token index is outside the attention map's token axis.
    #[error("token index {index} out of range for {n_tokens} tokens")]
    TokenIndex {
        /// Requested token.
        index: usize,
        /// Number of tokens available.
        n_tokens: usize,
    },

    /// A rotation angle drives a projective denominator to zero inside the
    /// frame, so the map folds through the camera plane.
    #[error("degenerate projection at gamma = {gamma_degrees} degrees: denominator below 1e-9 inside the frame")]
    DegenerateProjection {
        /// Per-frame rotation angle in degrees.
        gamma_degrees: f64,
    },

    /// Every pixel of a frame is new-perspective, leaving no source content
    /// to sample from.
    #[error("frame {frame} is entirely new perspective; nothing to sample from")]
    UnfillableFrame {
        /// One-based frame index.
        frame: usize,
    },

    /// A pipeline configuration violates a structural invariant.
    #[error("config error: {detail}")]
    Config {
        /// Which invariant failed.
        detail: String,
    },

    /// Filesystem failure while reading or writing an artifact.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A pipeline stage failed; wraps the underlying error with the stage
    /// name so callers can report where a run died.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        /// Pipeline stage label.
        stage: &'static str,
        /// Underlying failure.
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by invalid configuration or parameters rather
    /// than by runtime data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parameter { .. } | Error::Config { .. })
    }
}
