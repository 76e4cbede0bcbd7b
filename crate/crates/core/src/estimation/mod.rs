//! Statistics computed from detected frame stacks.

pub mod area_scan;
pub mod calibrate;
pub mod cosmic;
pub mod estimators;
pub mod excess;
pub mod inversion;
pub mod repeat;
pub mod series;
pub mod spatial;
pub mod uncertainty;

pub use area_scan::{area_scan, AreaPoint, AreaScan};
pub use calibrate::{calibrate, CalibrationResult, CalibrationSettings, Diagnostics, TypeBLine};
pub use cosmic::{cosmic_ray_filter, frame_filters, FrameFilter, MedianMadFilter};
pub use estimators::{
    estimate_alpha, estimate_alpha_b, estimate_sigma_alpha, estimate_sigma_alpha_b, estimators,
    NoiseReductionEstimate, NoiseReductionEstimator, SigmaVariant,
};
pub use excess::{excess_noise, ExcessNoise};
pub use inversion::{correct_for_transmittance, eta_from_sigma, EfficiencyEstimate};
pub use repeat::{repeat_experiment, Aggregate, BatchEstimate, RepeatSummary};
pub use series::{extract_series, extract_sums, region_sum, RegionPairSeries, VarianceConvention};
pub use spatial::{sigma_spatial_map, SpatialMap};
pub use uncertainty::{propagate, propagate_type_a, Balancing, TypeA};
