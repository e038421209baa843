use thiserror::Error;

#[derive(Debug, Error)]
pub enum MembraneError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid coefficients: {0}")]
    Coefficients(String),

    #[error("point is off the surface: distance {dist:.3e} exceeds tolerance {tol:.3e}")]
    OffSurface { dist: f64, tol: f64 },

    #[error("invalid scheme parameter: {0}")]
    Scheme(String),

    #[error("path diverged to a non-finite state at step {step}")]
    Diverged { step: usize },

    #[error("boundary process requires a start on S (distance {0:.3e})")]
    StartOffSurface(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("time step too large for explicit weight: suggested dt <= {suggested:.3e}")]
    UnstableStep { suggested: f64 },

    #[error("boundary data must vanish for large t (compact support required)")]
    NonCompactSupport,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
