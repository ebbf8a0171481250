//! Surrogate glucose-insulin simulator.
//!
//! A Bergman minimal model for glucose and remote insulin action, fed by a
//! two-compartment gut and a two-compartment subcutaneous insulin depot.
//! Runs on a fixed 3-minute grid and emits one [`StepRecord`] per step.

mod ode;
mod patient;
mod run;
mod scenario;

pub use ode::{integrate_step, integrate_step_spread, ode_derivatives, Derivatives, SimState, BG_MAX, BG_MIN};
pub use patient::{default_presets, load_presets, parse_presets, preset, VirtualPatient, DEFAULT_PRESETS};
pub use run::{run_scenario, simulate_open_loop, Policy, SimOptions, StepRecord, Trajectory};
pub use scenario::{MealEvent, MealScenario, MINUTES_PER_DAY, STEPS_PER_DAY, STEP_MINUTES};
