use thiserror::Error;

/// Errors produced by the library.
///
/// `InvalidInput` covers violated preconditions and carries the offending
/// field name so drivers can report it. The remaining variants signal
/// numerical failure rather than bad input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("table parse error: {0}")]
    Parse(String),

    #[error("quadrature did not reach tolerance {tolerance:e} within {panels} panels")]
    QuadratureBudget { tolerance: f64, panels: usize },

    #[error("kernel row {row} at gap {delta} sums to {sum}; deviation exceeds 1e-8")]
    RowSumDeviation { row: usize, delta: u32, sum: f64 },

    #[error("iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rejection sampler exceeded {0} draws")]
    SamplerStalled(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureBudget { .. }
                | Error::RowSumDeviation { .. }
                | Error::NoConvergence { .. }
                | Error::SamplerStalled(_)
        )
    }
}
