use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("diffraction order ({}, {}) is not radiative", .m.0, .m.1)]
    EvanescentOrder { m: (i32, i32) },

    #[error("angular spectra live on different grids or half-spaces")]
    GridMismatch,

    #[error("Green's tensor is singular at r = 0")]
    CoincidentPoints,

    #[error("coupled-dipole system is near singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
