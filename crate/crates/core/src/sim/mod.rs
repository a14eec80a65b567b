//! Desk-scale robots, reference programs, demonstration generators and the
//! experiment suites built on them.

mod demos;
pub mod experiments;
mod presets;
mod reference;
mod studies;

pub use demos::{
    generate_priority_demos, generate_spaces_demos, priority_program, rederive_xi, PriorityDemoConfig, Side,
    SpacesConfig, SpacesDemos,
};
pub use presets::{preset, RobotPreset, PRESET_NAMES};
pub use reference::{Phase, Reference, ReferenceProgram};
pub use studies::{bimanual_reachable, run_transition_study, TransitionConfig, TransitionResult};

/// Timestamps `0, dt, …` up to and including `horizon` (within rounding).
pub fn time_grid(dt: f64, horizon: f64) -> Vec<f64> {
    let n = (horizon / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}
