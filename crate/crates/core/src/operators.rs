//! Task parameters that map operational-space constraints into joint space.
//!
//! Every builder returns a [`TaskFrame`] whose output is a joint
//! configuration: applying it to a frame-local mean `μ` gives the
//! configuration one differential-IK step away from `q_{t−1}`.
//!
//! Means are laid out per chain type. Planar: `[x, y, θ]`. Spatial:
//! `[x, y, z, w, qx, qy, qz]`. The orientation block of a planar chain is the
//! scalar angle difference, the analog of `H̄*(ε̄_{t−1})`. A Jacobian with
//! only position rows selects the position-only form (`μ = [x, y]` or
//! `[x, y, z]`).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kinematics::{nullspace_projector, pseudoinverse, Branch, JacobianKind, Pose, SerialChain};
use crate::linalg::block_diag;
use crate::quat::{hamilton_bar_star, hamilton_plus};
use crate::tpgmm::TaskFrame;

/// Jacobian and current pose of one end-effector task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub jacobian: DMatrix<f64>,
    pub pose: Pose,
}

impl TaskState {
    pub fn from_chain(chain: &SerialChain, q: &DVector<f64>, branch: Branch, kind: JacobianKind) -> Result<Self> {
        Ok(Self {
            jacobian: chain.geometric_jacobian(q, branch, kind)?.matrix,
            pose: chain.forward_kinematics(q, branch)?,
        })
    }
}

/// Robot state at `t − 1` plus the object pose at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotContext {
    pub q_prev: DVector<f64>,
    pub primary: TaskState,
    /// Task projected through the primary null space (`J̃`).
    pub secondary: Option<TaskState>,
    pub object: Option<Pose>,
    /// Damping of task pseudoinverses. Null-space projectors are always exact.
    pub damping: f64,
}

impl RobotContext {
    pub fn new(q_prev: DVector<f64>, primary: TaskState) -> Self {
        Self {
            q_prev,
            primary,
            secondary: None,
            object: None,
            damping: 0.0,
        }
    }

    pub fn with_secondary(mut self, s: TaskState) -> Self {
        self.secondary = Some(s);
        self
    }

    pub fn with_object(mut self, o: Pose) -> Self {
        self.object = Some(o);
        self
    }

    pub fn with_damping(mut self, d: f64) -> Self {
        self.damping = d;
        self
    }

    fn check(&self, task: &TaskState) -> Result<()> {
        let nq = self.q_prev.len();
        if task.jacobian.ncols() != nq || self.primary.jacobian.ncols() != nq {
            return invalid(format!(
                "Jacobian has {} columns for {nq} joints",
                task.jacobian.ncols()
            ));
        }
        Ok(())
    }

    fn secondary(&self) -> Result<&TaskState> {
        self.secondary
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("null-space operator needs a secondary task".into()))
    }

    fn object(&self) -> Result<&Pose> {
        self.object
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("relative operator needs an object pose".into()))
    }
}

/// `(M, c)` such that `M μ + c` is the task-space displacement requested by a
/// frame-local mean `μ`.
fn target_map(task: &TaskState, object: Option<&Pose>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let rows = task.jacobian.nrows();
    match (&task.pose, object) {
        (Pose::Planar { position, angle }, obj) => {
            let (rot, p_obj, th_obj) = match obj {
                None => (Matrix2::identity(), None, None),
                Some(Pose::Planar { position: p, angle: a }) => {
                    let (s, c) = a.sin_cos();
                    (Matrix2::new(c, -s, s, c), Some(*p), Some(*a))
                }
                Some(_) => return invalid("planar chain needs a planar object pose"),
            };
            let d_pos = match p_obj {
                Some(p) => p - position,
                None => -position,
            };
            let r = DMatrix::from_column_slice(2, 2, rot.as_slice());
            match rows {
                2 => Ok((r, DVector::from_column_slice(d_pos.as_slice()))),
                3 => {
                    let d_ang = match th_obj {
                        Some(a) => a - angle,
                        None => -angle,
                    };
                    Ok((
                        block_diag(&[&r, &DMatrix::identity(1, 1)]),
                        DVector::from_vec(vec![d_pos.x, d_pos.y, d_ang]),
                    ))
                }
                _ => invalid(format!("planar task Jacobian must have 2 or 3 rows, has {rows}")),
            }
        }
        (Pose::Spatial { position, orientation }, obj) => {
            let (rot, p_obj, q_obj) = match obj {
                None => (nalgebra::Matrix3::identity(), None, None),
                Some(Pose::Spatial { position: p, orientation: o }) => (o.to_rotation_matrix(), Some(*p), Some(*o)),
                Some(_) => return invalid("spatial chain needs a spatial object pose"),
            };
            let d_pos = match p_obj {
                Some(p) => p - position,
                None => -position,
            };
            let r = DMatrix::from_column_slice(3, 3, rot.as_slice());
            match rows {
                3 => Ok((r, DVector::from_column_slice(d_pos.as_slice()))),
                6 => {
                    let hb = hamilton_bar_star(&orientation.conjugate());
                    let ob = match q_obj {
                        Some(o) => hb * hamilton_plus(&o),
                        None => hb,
                    };
                    let ob = DMatrix::from_column_slice(3, 4, ob.as_slice());
                    let mut c = DVector::zeros(6);
                    c.rows_mut(0, 3).copy_from(&d_pos);
                    Ok((block_diag(&[&r, &ob]), c))
                }
                _ => invalid(format!("spatial task Jacobian must have 3 or 6 rows, has {rows}")),
            }
        }
    }
}

fn ik_frame(ctx: &RobotContext, task: &TaskState, object: Option<&Pose>, nullspace: bool, label: &str) -> Result<TaskFrame> {
    ctx.check(task)?;
    let (m, c) = target_map(task, object)?;
    let mut p = pseudoinverse(&task.jacobian, ctx.damping);
    if nullspace {
        p = nullspace_projector(&ctx.primary.jacobian, 0.0) * p;
    }
    TaskFrame::new(&p * m, &p * c + &ctx.q_prev, label)
}

/// `A = I`, `b = 0`.
pub fn op_configuration(nq: usize) -> TaskFrame {
    TaskFrame::identity(nq, OperatorKind::Config.label())
}

/// `A = J†·blkdiag(I, H̄*(ε̄_{t−1}))`, `b = −J†[x_{t−1}; 0] + q_{t−1}`.
pub fn op_absolute_pose(ctx: &RobotContext) -> Result<TaskFrame> {
    ik_frame(ctx, &ctx.primary, None, false, OperatorKind::AbsPose.label())
}

/// `A = J†·blkdiag(R^O, H̄*(ε̄_{t−1})H⁺(ε^O))`, `b = J†[x^O − x_{t−1}; 0] + q_{t−1}`.
pub fn op_relative_pose(ctx: &RobotContext) -> Result<TaskFrame> {
    ik_frame(ctx, &ctx.primary, Some(ctx.object()?), false, OperatorKind::RelPose.label())
}

/// `A = N`, `b = J†J q_{t−1}`.
pub fn op_nullspace_configuration(ctx: &RobotContext) -> Result<TaskFrame> {
    let j = &ctx.primary.jacobian;
    if j.ncols() != ctx.q_prev.len() {
        return invalid("primary Jacobian does not match the joint count");
    }
    let jp = pseudoinverse(j, 0.0);
    let n = DMatrix::identity(j.ncols(), j.ncols()) - &jp * j;
    TaskFrame::new(n, jp * (j * &ctx.q_prev), OperatorKind::NullConfig.label())
}

/// Absolute pose of the secondary task through the primary null space.
pub fn op_nullspace_absolute(ctx: &RobotContext) -> Result<TaskFrame> {
    ik_frame(ctx, ctx.secondary()?, None, true, OperatorKind::NullAbs.label())
}

/// Object-relative pose of the secondary task through the primary null space.
pub fn op_nullspace_relative(ctx: &RobotContext) -> Result<TaskFrame> {
    ik_frame(ctx, ctx.secondary()?, Some(ctx.object()?), true, OperatorKind::NullRel.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "config")]
    Config,
    #[serde(rename = "abs_pose")]
    AbsPose,
    #[serde(rename = "rel_pose")]
    RelPose,
    #[serde(rename = "null_config")]
    NullConfig,
    #[serde(rename = "null_abs")]
    NullAbs,
    #[serde(rename = "null_rel")]
    NullRel,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Config,
        OperatorKind::AbsPose,
        OperatorKind::RelPose,
        OperatorKind::NullConfig,
        OperatorKind::NullAbs,
        OperatorKind::NullRel,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OperatorKind::Config => "config",
            OperatorKind::AbsPose => "abs_pose",
            OperatorKind::RelPose => "rel_pose",
            OperatorKind::NullConfig => "null_config",
            OperatorKind::NullAbs => "null_abs",
            OperatorKind::NullRel => "null_rel",
        }
    }

    pub fn build(self, ctx: &RobotContext) -> Result<TaskFrame> {
        match self {
            OperatorKind::Config => Ok(op_configuration(ctx.q_prev.len())),
            OperatorKind::AbsPose => op_absolute_pose(ctx),
            OperatorKind::RelPose => op_relative_pose(ctx),
            OperatorKind::NullConfig => op_nullspace_configuration(ctx),
            OperatorKind::NullAbs => op_nullspace_absolute(ctx),
            OperatorKind::NullRel => op_nullspace_relative(ctx),
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown operator `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{pseudoinverse, SerialChain};
    use approx::assert_relative_eq;

    fn planar_ctx(q: &[f64]) -> (SerialChain, RobotContext) {
        let chain = SerialChain::planar(&[1.0, 1.0, 1.0]).unwrap();
        let q = DVector::from_column_slice(q);
        let primary = TaskState::from_chain(&chain, &q, Branch::Main, JacobianKind::Pose).unwrap();
        (chain, RobotContext::new(q, primary))
    }

    #[test]
    fn configuration_is_identity() {
        let f = op_configuration(3);
        assert_eq!(f.a, DMatrix::identity(3, 3));
        assert_eq!(f.b, DVector::zeros(3));
    }

    #[test]
    fn absolute_fixed_point_and_ik_step() {
        let (_, ctx) = planar_ctx(&[0.3, 0.5, -0.4]);
        let f = op_absolute_pose(&ctx).unwrap();
        let here = ctx.primary.pose.to_vector();
        assert_relative_eq!(&f.a * &here + &f.b, ctx.q_prev.clone(), epsilon = 1e-12);
        let dx = DVector::from_vec(vec![0.01, -0.02, 0.005]);
        let step = &ctx.q_prev + pseudoinverse(&ctx.primary.jacobian, 0.0) * &dx;
        assert_relative_eq!(&f.a * (&here + &dx) + &f.b, step, epsilon = 1e-12);
    }

    #[test]
    fn nullspace_configuration_identities() {
        let (_, ctx) = planar_ctx(&[0.3, 0.5, -0.4]);
        let f = op_nullspace_configuration(&ctx).unwrap();
        assert!(f.a.norm() < 1e-10);
        assert_relative_eq!(f.b, ctx.q_prev.clone(), epsilon = 1e-10);
        let mut zero = ctx.clone();
        zero.primary.jacobian = DMatrix::zeros(3, 3);
        let f = op_nullspace_configuration(&zero).unwrap();
        assert_eq!(f.a, DMatrix::identity(3, 3));
        assert_eq!(f.b, DVector::zeros(3));
    }

    #[test]
    fn labels_round_trip() {
        for k in OperatorKind::ALL {
            assert_eq!(k.label().parse::<OperatorKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.label()));
        }
        assert!("nope".parse::<OperatorKind>().is_err());
    }

    #[test]
    fn missing_context_is_invalid() {
        let (_, ctx) = planar_ctx(&[0.3, 0.5, -0.4]);
        assert!(matches!(op_relative_pose(&ctx), Err(Error::InvalidArgument(_))));
        assert!(matches!(op_nullspace_absolute(&ctx), Err(Error::InvalidArgument(_))));
    }
}
