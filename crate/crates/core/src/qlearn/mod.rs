//! Linear Q-learning over tensor-product Gaussian RBF features.
//!
//! `Q(meal, bg, ins) = sum_{b,b'} alpha[meal][b][b'] * phi_b(bg) * psi_b'(ins)`,
//! fitted off-policy from logged pre-meal transitions with a replay memory
//! and periodically frozen target coefficients.

mod features;
mod model;
mod train;

pub use features::{Axis, FeatureGrid};
pub use model::{greedy_action, q_value, ActionGrid, QModel};
pub use train::{
    read_transitions_csv, td_update, train, write_transitions_csv, CurvePoint, LrSchedule, TdStats, TrainConfig,
    TrainOutcome, Transition, TRANSITION_HEADER,
};

/// Feature vector of `(bg, ins)` on `grid`.
pub fn features(bg: f64, ins: f64, grid: &FeatureGrid) -> Vec<f64> {
    grid.features(bg, ins)
}
