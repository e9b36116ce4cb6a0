//! Stochastic localization: the tilt process, the Kim–Milman coupling, the
//! soft-max potential and ensemble diagnostics.

pub mod diagnostics;
pub mod export;
pub mod kim_milman;
pub mod path;
pub mod softmax;

pub use diagnostics::{
    a_growth_diagnostic, drift_consistency, gaussian_oracle, martingale_diagnostic, opnorm_tail, opnorm_tail_report,
    Comparison, Envelope, TailEstimate,
};
pub use export::{series_tsv, write_series_tsv};
pub use kim_milman::{kim_milman_flow, FlowResult};
pub use path::{
    simulate_ensemble, simulate_path, EnsembleSummary, LocalizationPath, PathConfig, PathEnsemble, PathRecord,
    Series, TimeGrid, Truncation, DEFAULT_POINTS, DEFAULT_SUBSTEPS, DEFAULT_T_MIN,
};
pub use softmax::{default_beta, softmax_track, softmax_value, SoftmaxPotential};
