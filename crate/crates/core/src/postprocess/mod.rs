//! Classical post-processing once the relay outputs are public.
//!
//! Covers Bob's displacement, channel estimation with confidence bounds,
//! the entanglement-based key-rate model and privacy amplification.

mod displacement;
mod estimation;
mod keyrate;
mod privacy;
mod stats;

pub use displacement::{displacement_infer, DisplacementCoeffs};
pub use estimation::{
    estimate_channel, estimate_from_stats, normal_quantile_upper, worst_case_bounds, EstimationResult, FrameData,
    FrameStats, WorstCase, TAU_HAT_MAX,
};
pub use keyrate::{
    build_eb_cm, holevo_bound, mutual_information, rate_asymptotic, rate_finite, EbModel, EbState, EfficiencyModel,
    KeyRateReport, RateSettings, Reference, MIN_BLOCK,
};
pub use privacy::privacy_amplify;
pub use stats::{correlation, CovAccumulator};
