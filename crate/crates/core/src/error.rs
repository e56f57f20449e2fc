use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("composition at the origin needs g[{component}](0) = 0, got |g(0)| = {value:e}")]
    NonZeroConstant { component: usize, value: f64 },

    #[error("germ is not invertible: {0}")]
    NonInvertible(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate well: {0}")]
    DegenerateWell(String),

    #[error("resonance at degree {degree}: divisor {divisor:e}")]
    Resonance { degree: usize, divisor: f64 },

    #[error("phase is not admissible on the working disk (largest admissible radius {radius:e})")]
    ShrinkDomain { radius: f64 },

    #[error("degree budget exhausted at order {order}: {detail}")]
    InsufficientDegree { order: usize, detail: String },

    #[error("critical point is degenerate: {0}")]
    CriticalPoint(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("eigensolver: {0}")]
    Solver(String),

    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("experiment failed: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
