use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate screen: {0}")]
    DegenerateScreen(String),

    #[error("calibration did not converge after {iterations} iterations (target {target_um} um, last {last_um} um)")]
    Calibration {
        iterations: usize,
        target_um: f64,
        last_um: f64,
    },

    #[error("width measurement saturated: {0}")]
    SaturatedWidth(String),

    #[error("gaussian fit rejected: {0}")]
    FitQuality(String),

    #[error("quadrature not converged: {0}")]
    Resolution(String),

    /// Propagation distance beyond the sampling bound `pitch * span / lambda`.
    #[error("z = {z_cm} cm exceeds aliasing bound {z_max_cm:.3} cm")]
    Aliasing { z_cm: f64, z_max_cm: f64 },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
