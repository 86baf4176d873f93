use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A factorization did not converge.
    #[error("numeric failure in {op} on a {rows}x{cols} matrix")]
    NumericFailure {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Brute-force expansion would exceed the configured size cap.
    #[error("oracle cap exceeded: {requested} > {cap}")]
    OracleCap { requested: usize, cap: usize },

    /// A kernel projector could not be separated from the support of a reduction.
    #[error("ill-conditioned kernel at bond {bond}: eigenvalue {value:e} inside ambiguity band")]
    IllConditionedKernel { bond: usize, value: f64 },

    /// An eigenvalue of `h_j h_{j+1} h_j` sits too close to one to classify.
    #[error("ill-conditioned angle at bond {bond}: eigenvalue {value:e} inside ambiguity band")]
    IllConditionedAngle { bond: usize, value: f64 },

    /// The rank cut of an empirical parent projector falls inside a near-tie.
    #[error("ill-conditioned cut at window {window}: eigenvalues {below:e} and {above:e} tie")]
    IllConditionedCut {
        window: usize,
        below: f64,
        above: f64,
    },

    #[error("degenerate spectrum: all eigenvalues coincide")]
    DegenerateSpectrum,
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::ContractViolation(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Configuration(msg.into())
}
