//! Likelihood, objective and maximum-likelihood fitting.

mod fit;
mod objective;
mod optimizer;
mod params;

pub use fit::{
    fit, fit_from_starts, fit_with_center, initial_guess, local_minimize, start_points, FitConfig,
    FitResult, StartDiagnostic, SIGMA_FLOOR,
};
pub(crate) use objective::model_log_eta;
pub use objective::{gradient, log_likelihood, normal_log_density, Objective};
pub use optimizer::{
    fd_hessian, minimize, FnProblem, Minimum, Problem, Termination, TrustRegionOptions,
};
pub use params::{ModelKind, ParamVector};
