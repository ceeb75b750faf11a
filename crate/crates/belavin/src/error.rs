//! Error taxonomy shared across the crate.

use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("non-convergent product/series: {0}")]
    NonConvergent(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("pole: {0}")]
    PoleError(String),
    #[error("singular intertwiner matrix: {0}")]
    SingularMatrix(String),
    #[error("face configuration not admissible: {0}")]
    NotAdmissible(String),
    #[error("degenerate low-temperature fit: {0}")]
    DegenerateFit(String),
    #[error("divergent path energy: {0}")]
    DivergentEnergy(String),
    #[error("lattice tail too large: {0}")]
    TailTooLarge(String),
    #[error("path enumeration exceeded budget: {0}")]
    Explosion(String),
    #[error("sum fails to cancel at u=v: {0}")]
    CancellationFailure(String),
    #[error("contour seam mismatch: {0}")]
    EndpointMismatch(String),
    #[error("pole too close to a quadrature contour: {0}")]
    PoleOnContour(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
