use std::path::PathBuf;

/// Errors raised by the numerical pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("gradient below floor on {} triangle(s) under a family that is singular at zero: {triangles:?}", triangles.len())]
    DegenerateGradient { triangles: Vec<usize> },

    #[error("invalid domain specification: {0}")]
    Construction(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh validation failed: {0}")]
    Validation(String),

    #[error("boundary geometry: {0}")]
    Geometry(String),

    #[error("linear solver failed at step {iteration}: {detail}")]
    LinearSolver { iteration: usize, detail: String },

    #[error("eigensolver stagnated: best eigenvalue {lambda:e}, residual {residual:e}")]
    EigenStagnation {
        lambda: f64,
        residual: f64,
        iterate: Vec<f64>,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
