//! Gaussian widths, normal-cone distances and measurement budgets.

mod bounds;
mod cones;
mod width;

pub use bounds::{
    bound_catalog, bound_volume, duality_budget, measurement_budget, self_dual_budget, terracini_lower_bound,
    BoundSet, MeasurementBudget, VolumeBound,
};
pub use cones::{dist_normal_cone_l1, dist_normal_cone_linf, dist_normal_cone_nuclear_ub, project_normal_cone_l1};
pub use width::{lambda_k, mc_width, min_gain_estimate, model_width, subspace_width, WidthEstimate, WidthKind};

/// Default Monte-Carlo sample count for width estimates.
pub const DEFAULT_WIDTH_SAMPLES: usize = 2000;
