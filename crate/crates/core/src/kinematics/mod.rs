//! Serial-chain kinematics and differential inverse kinematics.
//!
//! Chains are either planar (one scalar link length per revolute joint) or
//! spatial (unit rotation axis plus a fixed link offset per joint). A chain
//! may carry two end-effector branches that share leading joints, which is
//! how a torso shared by two arms is modeled.

mod chain;
mod diffik;

pub use chain::{
    BasePose, Branch, Branches, ChainKind, JacobianKind, PlanarJoint, Pose, SerialChain,
    SpatialJoint, TaskJacobian,
};
pub use diffik::{
    hierarchy_operator, nullspace_projector, pseudoinverse, strict_hierarchy_step,
    weighted_pseudoinverse_step,
};

/// Joint angles in radians, one per chain joint.
pub type JointConfig = nalgebra::DVector<f64>;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}
