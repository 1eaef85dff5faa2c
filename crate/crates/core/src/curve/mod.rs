//! Quadratic Bezier curves between networks: training, evaluation and
//! two-dimensional loss-plane exports.

mod bezier;
mod eval;
mod plane;
mod train;

pub use bezier::BezierCurve;
pub use eval::{evaluate_curve, evaluate_linear, uniform_grid, validate_grid, CurveMetrics};
pub use plane::{plane_grid, PlaneBasis, PlaneGrid, PlanePoint};
pub use train::{train_curve, CurveLog, CurveTrainConfig, LrSchedule};
