use thiserror::Error;

pub type Result<T, E = HrisError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HrisError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A least-squares system is rank deficient, so the unknowns cannot be
    /// recovered from the available observations.
    #[error("{stage} is not identifiable: {operator} has rank {rank}, needs {required}")]
    Identifiability {
        stage: &'static str,
        operator: &'static str,
        rank: usize,
        required: usize,
    },

    /// Atom `atom` couples no energy into the sensing path.
    #[error("meta-atom {atom} is not sensed (1 - rho = 0); its channel cannot be divided out")]
    UnsensedAtom { atom: usize },

    #[error("estimation infeasible: {0}")]
    EstimationInfeasible(String),
}

impl HrisError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        HrisError::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by an unidentifiable or infeasible estimation
    /// problem rather than malformed input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            HrisError::Identifiability { .. }
                | HrisError::UnsensedAtom { .. }
                | HrisError::EstimationInfeasible(_)
        )
    }
}
