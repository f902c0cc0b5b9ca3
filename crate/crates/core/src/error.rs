use thiserror::Error;

#[derive(Debug, Error)]
pub enum GwilError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("coupling marginals violated: {0}")]
    Marginals(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("singular linear system while solving flow equations")]
    Singular,

    #[error("invalid maze: {0}")]
    InvalidMaze(String),

    #[error("maze goal is not reachable from start")]
    Disconnected,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Aborted(String),

    #[error("not a bijection: {0}")]
    NotBijective(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GwilError> = std::result::Result<T, E>;
