use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate density at node {node}: quantity is not finite")]
    DegenerateDensity { node: usize },

    #[error("grid too coarse: {n} intervals, at least {min} required")]
    GridTooCoarse { n: usize, min: usize },

    #[error("grids do not match")]
    GridMismatch,

    #[error("operation requires a periodic grid")]
    NonPeriodicGrid,

    #[error("operation requires a reflecting grid")]
    NonReflectingGrid,

    #[error("density has a node at grid node {node}; Madelung variables are undefined")]
    NodeDetected { node: usize },

    #[error("node formation at grid node {node} during step {step}")]
    NodeFormation { step: usize, node: usize },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("path {path} became non-finite at step {step}")]
    NonFinitePath { path: usize, step: usize },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("spectrum truncated: {available} modes leave a tail bound {tail:e} relative to Z")]
    Truncation { available: usize, tail: f64 },

    #[error("Crank-Nicolson step {h:e} lost positivity; reduce below {bound:e}")]
    PositivityLoss { h: f64, bound: f64 },

    #[error("dispersion became non-monotone at t = {t}, beta = {beta}")]
    NonMonotone { t: f64, beta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
