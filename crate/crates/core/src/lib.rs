//! Learning from demonstration which space (operational or configuration)
//! governs each phase of a skill, and which strict task hierarchy produced a
//! demonstrated prioritization, using task-parameterized Gaussian mixture
//! models with Jacobian-based task parameters.
//!
//! Modules, bottom-up:
//!
//! - [`kinematics`]: serial chains (planar or spatial, optionally with two
//!   branches sharing leading joints), Jacobians, pseudoinverses, null-space
//!   projectors and differential IK steps.
//! - [`quat`]: unit quaternions and their Hamilton matrix operators.
//! - [`gaussians`]: Gaussians, GMMs, EM, Gaussian products and GMR.
//! - [`tpgmm`]: task-parameterized GMMs: projection, multi-frame EM,
//!   synthesis and time-driven reproduction.
//! - [`operators`]: task parameters mapping operational-space constraints into
//!   configuration space.
//! - [`priority`]: candidate hierarchies, projection of demonstrations,
//!   precision matrices and the soft weighting of strict hierarchies.
//! - [`sim`]: desk-scale robots, reference programs, demonstration
//!   generators and the experiment suites.
//! - [`io`]: CSV and JSON persistence.

pub mod error;
pub mod gaussians;
pub mod io;
pub mod kinematics;
pub(crate) mod linalg;
pub mod operators;
pub mod par;
pub mod priority;
pub mod quat;
pub mod sim;
pub mod tpgmm;

pub use error::{Error, Result};
pub use par::Execution;
