use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    Shape(String),

    #[error("numerical conditioning failure: {message} (jitter levels tried: {jitter:?})")]
    Conditioning { message: String, jitter: Vec<f64> },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("fidelity level {level} has no observations")]
    InsufficientData { level: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("simulation diverged: {0}")]
    SimulationDiverged(String),

    #[error("tanks-in-series fit failed: {0}")]
    Fit(String),

    #[error("objective failed at level {level} for x = {x:?}: {message}")]
    Objective {
        x: Vec<f64>,
        level: usize,
        message: String,
    },

    #[error("campaign initialization failed at level {level} for x = {x:?}: {message}")]
    CampaignInit {
        x: Vec<f64>,
        level: usize,
        message: String,
    },
}
