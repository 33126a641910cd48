//! Model parameters, feedback functions, initial densities and fertility
//! profile fitting.

mod density;
mod feedback;
mod fit;
mod params;

pub use density::{density_moments, InitialDensity};
pub use feedback::{
    check_assumptions, AssumptionReport, Clause, ClauseResult, Feedback, FeedbackSpec, PhiFamily, PsiFamily,
    LIMIT_PROBE, PHI_LIMIT_EPS, PSI_LIMIT_BOUND,
};
pub use fit::{fit_fertility_profile, FertilityFit};
pub use params::{fertility_age_profile, normalize_betas, ModelParams, NORMALIZATION_RTOL};

pub(crate) use params::{age_profile_unchecked, gamma_weighted_sum};
