use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty mesh{0}")]
    EmptyMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("pose fit failed: best hypothesis has {best} inliers, {required} required")]
    FitFailure { best: usize, required: usize },

    #[error("canonical prediction failed: best score {score:.4} exceeds bound {bound:.4} (infinite when the segment covers too little of the template)")]
    PredictionFailure { score: f64, bound: f64 },

    #[error("scene generation failed: {0}")]
    SceneGeneration(String),

    #[error("render failed: {0}")]
    Render(String),

    #[error("unknown instance id {0:?}")]
    UnknownInstance(String),

    #[error("schema version mismatch in {what}: found {found}, expected {expected}")]
    Schema {
        what: String,
        found: u32,
        expected: u32,
    },

    #[error("no grasps kept for any instance")]
    EmptyCodebook,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
