use thiserror::Error;

use crate::cohomology::OrbitLabel;

pub type Result<T> = std::result::Result<T, MixlabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixlabError {
    #[error("the section y = 0 is not transverse to the flow (w_y = 0)")]
    DegenerateSection,

    #[error("time-change function is not positive along the orbit (sampled value {value})")]
    NonPositiveTimeChange { value: f64 },

    #[error("small divisor at frequency {frequency}: |e^(2 pi i m alpha) - 1| = {divisor:e}")]
    SmallDivisor { frequency: i64, divisor: f64 },

    #[error("invariant distribution D{label} = {re} + {im}i does not vanish")]
    ObstructionNonzero { label: OrbitLabel, re: f64, im: f64 },

    #[error("alpha has a terminating continued fraction after {terms} partial quotients")]
    RationalAlpha { terms: usize },

    #[error("function has a nonzero fiber average (max |c_0| = {magnitude:e})")]
    NonzeroFiberAverage { magnitude: f64 },

    #[error("roof function is not certified positive (lower bound {lower_bound})")]
    NonPositiveRoof { lower_bound: f64 },

    #[error("u o f - u differs from the roof minus its mean by {residual:e}")]
    NotACoboundary { residual: f64 },

    #[error("coefficient ({m}, {k}) breaks the realness symmetry c(-m,-k) = conj c(m,k)")]
    RealnessViolation { m: i64, k: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl MixlabError {
    /// Input was well-formed but the computation itself cannot proceed.
    pub fn is_numeric(&self) -> bool {
        !matches!(
            self,
            MixlabError::InvalidParameter(_)
                | MixlabError::Parse(_)
                | MixlabError::RealnessViolation { .. }
        )
    }
}
