//! Moments, cumulants and class-wise summaries.

mod accumulator;
mod class_stats;
pub mod tensor;

pub use accumulator::MomentAccumulator;
pub(crate) use class_stats::{group_indices, mean_and_covariance};
pub use class_stats::{
    contract_fourth_order, contract_within_class_fourth_cumulant, estimate_class_stats,
    ClassStats, FourthOrderTensor,
};
pub use tensor::{
    bracket_count, bracket_sum, cumulants_from_moments, moments_from_cumulants, CumulantSet,
    DenseTensor, MomentSet, DEFAULT_DENSE_CAP,
};
