//! Privacy noise primitives, AboveThreshold, and outlier removal.

mod noise;
mod outliers;
mod threshold;

pub use noise::{sample_gaussian_vector, sample_laplace, NoiseSource};
pub use outliers::{
    concentration_score, filter_outliers, inclusion_probability, neighbour_counts, select_inliers,
    ConcentrationReport, ScoreGate, Selection,
};
pub use threshold::{
    above_threshold, above_threshold_alpha, above_threshold_with_scales, NoisyThreshold, Verdict,
};
