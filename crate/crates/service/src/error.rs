use std::path::Path;

use thiserror::Error;

pub type AppResult<T> = std::result::Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] vrf_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// Structured-text document that failed to parse; `field` is the JSON path.
    #[error("{origin}: at `{field}`: {message}")]
    Parse {
        origin: String,
        field: String,
        message: String,
    },

    /// A core error attributable to one request or document field.
    #[error("{field}: {source}")]
    Field {
        field: &'static str,
        source: vrf_core::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    NotFound(String),
}

impl AppError {
    pub fn category(&self) -> &'static str {
        match self {
            AppError::Core(e) | AppError::Field { source: e, .. } => e.category(),
            AppError::Io { .. } => "io",
            AppError::Parse { .. } => "parse",
            AppError::Usage(_) => "usage",
            AppError::NotFound(_) => "not-found",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            AppError::Parse { field, .. } => Some(field),
            AppError::Field { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn at(field: &'static str) -> impl FnOnce(vrf_core::Error) -> AppError {
        move |source| AppError::Field { field, source }
    }

    /// One-line form printed by the CLI.
    pub fn report_line(&self) -> String {
        format!("error category={}: {}", self.category(), self.to_string().replace('\n', " "))
    }
}

pub fn read_string(path: &Path) -> AppResult<String> {
    std::fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> AppResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| AppError::Parse {
        origin: origin.to_string(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> AppResult<T> {
    parse_json(&read_string(path)?, &path.display().to_string())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(vrf_core::Error::from)?;
    std::fs::write(path, text + "\n").map_err(io_at(path))
}
