use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A distribution or family parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An argument lies outside the domain of the function.
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// The thresholds violate `0 <= t_1 <= ... <= t_m <= 1`.
    #[error("invalid critical vector: {0}")]
    InvalidCriticalVector(String),

    /// No parameter value on the search range reaches the requested gamma*.
    #[error("gamma* target {target} unattainable on [{lo}, {hi}]; closest achieved {closest}")]
    Unattainable {
        target: f64,
        closest: f64,
        lo: f64,
        hi: f64,
    },

    #[error("problem too large: {0}")]
    Size(String),
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} is not in [0, 1]")))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha = {alpha} is not in (0, 1)")))
    }
}
