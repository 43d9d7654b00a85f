use crate::flow::BounceEvent;

/// Errors raised by the geometry, flow and compatibility routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("grazing phase point: |v·n| = {:.3e} at or below the grazing tolerance", vn.abs())]
    Grazing { vn: f64 },

    #[error("zero velocity: the backward exit time is infinite")]
    ZeroVelocity,

    #[error("point is not on the unit circle (radius {radius})")]
    NotOnBoundary { radius: f64 },

    #[error("position outside the closed unit disk (radius {radius})")]
    OutsideDomain { radius: f64 },

    #[error("bounce cap of {cap} exceeded ({} events recorded)", partial.len())]
    BounceCapExceeded { cap: usize, partial: Vec<BounceEvent> },

    #[error("bounce angle {theta} is within the degeneracy window of pi")]
    DegenerateAngle { theta: f64 },

    #[error("time lies within {gap:.3e} of a bounce instant; the flow is not differentiable there")]
    NotInOpenCell { gap: f64 },

    #[error("initial data provides no derivatives of order {order}")]
    MissingDerivative { order: u8 },

    #[error("unknown initial-data family `{0}`")]
    UnknownFamily(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
