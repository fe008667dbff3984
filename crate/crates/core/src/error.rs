use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Bessel order {order} unsupported (maximum {max})")]
    UnsupportedOrder { order: u32, max: u32 },

    #[error("Bessel root index {index} unsupported (expected 1..={max})")]
    UnsupportedRootIndex { index: u32, max: u32 },

    #[error("root {index} of J_{order} did not converge; bracket [{lo}, {hi}], |J| = {residual:e}")]
    RootNotConverged {
        order: u32,
        index: u32,
        lo: f64,
        hi: f64,
        residual: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("nesting violated: {what} (clearance {clearance:e} m)")]
    Nesting { what: String, clearance: f64 },

    #[error("point ({x}, {y}, {z}) lies outside the waveguide (r = {r} > R = {radius})")]
    OutsideGuide {
        x: f64,
        y: f64,
        z: f64,
        r: f64,
        radius: f64,
    },

    #[error("mode TM({m},{n}) is not propagating")]
    Evanescent { m: u32, n: u32 },

    #[error("mode TM({m},{n}) is degenerate: (omega/c)^2 - beta^2 = {gap:e}")]
    DegenerateMode { m: u32, n: u32, gap: f64 },

    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("surfaces `{source_id}` and `{target_id}` are too close: {distance:e} < {threshold:e}")]
    Separation {
        source_id: String,
        target_id: String,
        distance: f64,
        threshold: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
