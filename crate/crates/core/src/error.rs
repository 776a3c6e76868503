use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape coefficient count {got} does not match template shape dimension {expected}")]
    ShapeDimension { expected: usize, got: usize },

    #[error("kinematic tree: {0}")]
    Kinematics(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate normal at vertex {vertex}: incident face normals cancel")]
    DegenerateNormal { vertex: usize },

    #[error("frame construction: {0}")]
    Frame(String),

    #[error("blended skinning matrix is singular at vertex {vertex}")]
    FrameDegeneracy { vertex: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("decoder: {0}")]
    Decoder(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value in forward pass at ray {ray}")]
    Numeric { ray: usize },

    #[error("loss diverged at step {step}")]
    Divergence { step: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(String),
}

impl Error {
    /// Stable machine-readable category used by the CLI and HTTP layers.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeDimension { .. } => "shape",
            Error::Kinematics(_) => "kinematics",
            Error::InvariantViolation(_) => "invariant",
            Error::DegenerateNormal { .. } => "degenerate-normal",
            Error::Frame(_) | Error::FrameDegeneracy { .. } => "frame",
            Error::Parameter(_) => "parameter",
            Error::Decoder(_) => "decoder",
            Error::DimensionMismatch(_) => "dimension",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Format(_) | Error::Truncated { .. } => "format",
            Error::Numeric { .. } | Error::Divergence { .. } => "numeric",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "parse",
            Error::Image(_) => "image",
        }
    }
}
