use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid market specification: {0}")]
    InvalidSpec(String),

    #[error("invalid claim: {0}")]
    InvalidClaim(String),

    #[error("invalid measure pair: {0}")]
    InvalidMeasurePair(String),

    #[error("market index n must be >= 1")]
    ZeroMarketIndex,

    #[error("{0} requires a divergent market price of risk series")]
    ConvergentSeries(&'static str),

    #[error("{0} requires a convergent market price of risk series")]
    DivergentSeries(&'static str),

    #[error("claim does not satisfy the continuous-distribution assumption: {0}")]
    ContinuityAssumption(String),

    #[error("Monte Carlo estimate did not settle: stderr {full:.3e} at N, {half:.3e} at N/2")]
    McDivergence { half: f64, full: f64 },

    #[error("{0} needs Monte Carlo parameters (a seed and sample count)")]
    MonteCarloRequired(String),

    #[error("empty sample")]
    EmptySample,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in the open interval (0, 1)",
        })
    }
}

pub(crate) fn check_closed_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be nonnegative and finite",
        })
    }
}
