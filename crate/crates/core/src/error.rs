use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate support: covariance eigenvalue {min_eig:.3e} vs trace {trace:.3e}")]
    DegenerateSupport { min_eig: f64, trace: f64 },
    #[error("sampler infeasible: acceptance rate {acceptance:.3e} below 1e-4")]
    SamplerInfeasible { acceptance: f64 },
    #[error("isotropy required: barycenter norm {mean_norm:.3e}, covariance deviation {cov_dev:.3e}")]
    IsotropyRequired { mean_norm: f64, cov_dev: f64 },
    #[error("tilt too extreme: effective sample size {ess:.1} below 100")]
    TiltTooExtreme { ess: f64 },
    #[error("centering required: mean {mean:.3e}")]
    CenteringRequired { mean: f64 },
    #[error("grid too coarse: {grid_size} nodes, need at least 64")]
    GridTooCoarse { grid_size: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("uniform log-concavity required (t must be > 0)")]
    UniformLogConcavityRequired,
    #[error("step too coarse: step-doubling discrepancy {discrepancy:.3e} after {steps} steps")]
    StepTooCoarse { discrepancy: f64, steps: usize },
    #[error("rescale error: covariance exceeds s*Id by {excess:.3e}")]
    Rescale { excess: f64 },
    #[error("invalid measure spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
