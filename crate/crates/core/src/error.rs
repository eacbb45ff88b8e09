use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is indefinite (minimum eigenvalue {min_eig:e})")]
    IndefiniteInput { min_eig: f64 },

    #[error("projection inequality is infeasible: {reason}")]
    InfeasibleProblem { reason: String },

    #[error("numerical breakdown: {what} (witness {witness:e})")]
    NumericalBreakdown { what: String, witness: f64 },

    #[error("system is not marginally stable: {reason}")]
    NotMarginallyStable { reason: String },

    #[error("slack matrix is singular (sigma_min/sigma_max = {ratio:e})")]
    SingularX { ratio: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("no multiplier found (best alpha {best_alpha:e}, best margin {best_min_eig:e}, capped: {capped})")]
    Infeasible {
        best_alpha: f64,
        best_min_eig: f64,
        capped: bool,
    },

    #[error("Slater point violated: xbar' N xbar = {value:e} is not positive")]
    SlaterViolated { value: f64 },

    #[error("dilation conditions violated: ||[A B]|| = {row_norm}, ||[A; C]|| = {col_norm}")]
    ConditionsViolated { row_norm: f64, col_norm: f64 },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn breakdown(what: impl Into<String>, witness: f64) -> Self {
        Error::NumericalBreakdown {
            what: what.into(),
            witness,
        }
    }
}
