//! One-dimensional spectral models of `L = Delta + (log rho)' d/dx`, spectral
//! measures, `H^{-1}` norms and the spectral-side inequalities.

pub mod checks;
pub mod heat1d;
pub mod model;

pub use checks::{
    centered_gradient_poincare, cefm_check, f_lambda_bound_check, projection_transfer_check, qs_lower_bound_check,
    random_test_function, semigroup_variance_identities, sigma_vs_poincare_check, spectral_mass_bound_check,
    spectral_mass_sweep, transfer_instance, variance_h1_check, CefmResult, ProductSpectra, TransferInstance,
};
pub use heat1d::{q_grid, q_norm_sq_grid, MIN_KERNEL_CELLS};
pub use model::{
    build_model, h_minus1_continuum, Eigenpairs, GridOptions, SpectralMeasureRep, SpectralModel, DEFAULT_CUT,
    DEFAULT_GRID, MIN_GRID,
};
