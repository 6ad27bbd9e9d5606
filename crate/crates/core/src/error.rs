use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown bus `{0}`")]
    UnknownBus(String),

    #[error("grid has no buses")]
    EmptyGrid,

    #[error("admittance matrix is singular")]
    SingularNetwork,

    #[error("load flow did not converge after {iterations} iterations (max residual {residual:.3e})")]
    LoadFlow { iterations: usize, residual: f64 },

    #[error("exciter of `{rfc}` cannot hold the operating point: regulator output {v_r:.4} outside [{v_min}, {v_max}]")]
    ExciterLimit {
        rfc: String,
        v_r: f64,
        v_min: f64,
        v_max: f64,
    },

    #[error("rotor speed of `{rfc}` collapsed to {omega_pu:.6} p.u. at t = {time:.4} s")]
    SpeedCollapse {
        rfc: String,
        time: f64,
        omega_pu: f64,
    },

    #[error("non-finite state encountered at t = {time:.4} s")]
    NonFinite { time: f64 },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("only {found} peaks found, {needed} required")]
    InsufficientPeaks { found: usize, needed: usize },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
