use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quat::UnitQuaternion;

const AXIS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarJoint {
    /// Length of the link following the joint.
    pub length: f64,
    /// Constant angle added to the joint reading.
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialJoint {
    /// Unit rotation axis in the parent frame.
    pub axis: Vector3<f64>,
    /// Link translation applied after the joint rotation.
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainKind {
    Planar(Vec<PlanarJoint>),
    Spatial(Vec<SpatialJoint>),
}

/// Joint-index lists of the two end-effector branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl Branches {
    /// Indices present in both branches.
    pub fn shared(&self) -> Vec<usize> {
        self.left
            .iter()
            .filter(|i| self.right.contains(i))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

impl Default for BasePose {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

impl BasePose {
    pub fn planar(x: f64, y: f64, angle: f64) -> Self {
        Self {
            position: Vector3::new(x, y, 0.0),
            orientation: UnitQuaternion::from_yaw(angle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// All joints in order; only valid for unbranched chains.
    #[default]
    Main,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pose {
    Planar {
        position: Vector2<f64>,
        angle: f64,
    },
    Spatial {
        position: Vector3<f64>,
        orientation: UnitQuaternion,
    },
}

impl Pose {
    /// Position as a dynamic vector (2 or 3 entries).
    pub fn position(&self) -> DVector<f64> {
        match self {
            Pose::Planar { position, .. } => DVector::from_column_slice(position.as_slice()),
            Pose::Spatial { position, .. } => DVector::from_column_slice(position.as_slice()),
        }
    }

    /// Planar: `[x, y, θ]`; spatial: `[x, y, z, w, qx, qy, qz]`.
    pub fn to_vector(&self) -> DVector<f64> {
        match self {
            Pose::Planar { position, angle } => {
                DVector::from_vec(vec![position.x, position.y, *angle])
            }
            Pose::Spatial {
                position,
                orientation,
            } => {
                let c = orientation.coords();
                DVector::from_vec(vec![
                    position.x, position.y, position.z, c[0], c[1], c[2], c[3],
                ])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianKind {
    Position,
    Orientation,
    /// Position rows stacked over orientation rows.
    Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskJacobian {
    pub matrix: DMatrix<f64>,
    pub kind: JacobianKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    kind: ChainKind,
    branches: Option<Branches>,
    base: BasePose,
}

impl SerialChain {
    pub fn new(kind: ChainKind, branches: Option<Branches>, base: BasePose) -> Result<Self> {
        let n = match &kind {
            ChainKind::Planar(j) => {
                if let Some(bad) = j.iter().find(|j| !(j.length >= 0.0) || !j.offset.is_finite()) {
                    return invalid(format!("planar link length must be >= 0, got {}", bad.length));
                }
                j.len()
            }
            ChainKind::Spatial(j) => {
                for (i, joint) in j.iter().enumerate() {
                    if (joint.axis.norm() - 1.0).abs() > AXIS_TOL {
                        return invalid(format!(
                            "joint {i}: axis must have unit norm, got {}",
                            joint.axis.norm()
                        ));
                    }
                    if !joint.offset.iter().all(|v| v.is_finite()) {
                        return invalid(format!("joint {i}: non-finite offset"));
                    }
                }
                j.len()
            }
        };
        if n == 0 {
            return invalid("chain has no joints");
        }
        if let ChainKind::Planar(_) = kind {
            let o = base.orientation;
            if o.u.x.abs() > 1e-12 || o.u.y.abs() > 1e-12 || base.position.z != 0.0 {
                return invalid("planar chain base must lie in the xy plane");
            }
        }
        if let Some(b) = &branches {
            for (name, list) in [("left", &b.left), ("right", &b.right)] {
                if list.is_empty() {
                    return invalid(format!("{name} branch is empty"));
                }
                if let Some(i) = list.iter().find(|&&i| i >= n) {
                    return invalid(format!("{name} branch references joint {i} of {n}"));
                }
                let mut seen = list.clone();
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != list.len() {
                    return invalid(format!("{name} branch repeats a joint"));
                }
            }
        }
        Ok(Self {
            kind,
            branches,
            base,
        })
    }

    pub fn planar(lengths: &[f64]) -> Result<Self> {
        let joints = lengths
            .iter()
            .map(|&length| PlanarJoint {
                length,
                offset: 0.0,
            })
            .collect();
        Self::new(ChainKind::Planar(joints), None, BasePose::default())
    }

    pub fn kind(&self) -> &ChainKind {
        &self.kind
    }

    pub fn branches(&self) -> Option<&Branches> {
        self.branches.as_ref()
    }

    pub fn base(&self) -> &BasePose {
        &self.base
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.kind, ChainKind::Planar(_))
    }

    pub fn dof(&self) -> usize {
        match &self.kind {
            ChainKind::Planar(j) => j.len(),
            ChainKind::Spatial(j) => j.len(),
        }
    }

    /// Position rows of a task Jacobian (2 planar, 3 spatial).
    pub fn position_dim(&self) -> usize {
        if self.is_planar() {
            2
        } else {
            3
        }
    }

    /// Orientation rows of a task Jacobian (1 planar, 3 spatial).
    pub fn orientation_dim(&self) -> usize {
        if self.is_planar() {
            1
        } else {
            3
        }
    }

    pub fn rows(&self, kind: JacobianKind) -> usize {
        match kind {
            JacobianKind::Position => self.position_dim(),
            JacobianKind::Orientation => self.orientation_dim(),
            JacobianKind::Pose => self.position_dim() + self.orientation_dim(),
        }
    }

    /// Joint indices traversed from the root to the selected end-effector.
    pub fn branch_joints(&self, branch: Branch) -> Result<Vec<usize>> {
        match (branch, &self.branches) {
            (Branch::Main, None) => Ok((0..self.dof()).collect()),
            (Branch::Main, Some(_)) => invalid("branched chain requires Left or Right branch"),
            (_, None) => invalid("chain has no branches"),
            (Branch::Left, Some(b)) => Ok(b.left.clone()),
            (Branch::Right, Some(b)) => Ok(b.right.clone()),
        }
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return invalid(format!(
                "joint vector has {} entries, chain has {} joints",
                q.len(),
                self.dof()
            ));
        }
        if !q.iter().all(|v| v.is_finite()) {
            return invalid("joint vector has non-finite entries");
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>, branch: Branch) -> Result<Pose> {
        self.check_q(q)?;
        let idx = self.branch_joints(branch)?;
        Ok(self.walk(q, &idx).0)
    }

    /// Walks the branch and returns the end pose plus, per traversed joint,
    /// its world origin and world rotation axis.
    fn walk(&self, q: &DVector<f64>, idx: &[usize]) -> (Pose, Vec<(Vector3<f64>, Vector3<f64>)>) {
        let mut frames = Vec::with_capacity(idx.len());
        match &self.kind {
            ChainKind::Planar(joints) => {
                let mut angle = self.base.orientation.yaw();
                let mut p = Vector2::new(self.base.position.x, self.base.position.y);
                for &k in idx {
                    frames.push((Vector3::new(p.x, p.y, 0.0), Vector3::z()));
                    angle += q[k] + joints[k].offset;
                    p += joints[k].length * Vector2::new(angle.cos(), angle.sin());
                }
                (
                    Pose::Planar {
                        position: p,
                        angle: super::wrap_angle(angle),
                    },
                    frames,
                )
            }
            ChainKind::Spatial(joints) => {
                let mut rot = self.base.orientation;
                let mut p = self.base.position;
                for &k in idx {
                    let j = &joints[k];
                    frames.push((p, rot.rotate(&j.axis)));
                    rot = rot.multiply(&UnitQuaternion::from_axis_angle(&j.axis, q[k]));
                    p += rot.rotate(&j.offset);
                }
                (
                    Pose::Spatial {
                        position: p,
                        orientation: rot,
                    },
                    frames,
                )
            }
        }
    }

    /// Geometric Jacobian of the selected branch; columns of joints outside
    /// the branch are zero.
    pub fn geometric_jacobian(
        &self,
        q: &DVector<f64>,
        branch: Branch,
        kind: JacobianKind,
    ) -> Result<TaskJacobian> {
        self.check_q(q)?;
        let idx = self.branch_joints(branch)?;
        let (pose, frames) = self.walk(q, &idx);
        let pd = self.position_dim();
        let od = self.orientation_dim();
        let mut full = DMatrix::zeros(pd + od, self.dof());
        let end = match pose {
            Pose::Planar { position, .. } => Vector3::new(position.x, position.y, 0.0),
            Pose::Spatial { position, .. } => position,
        };
        for (&k, (origin, axis)) in idx.iter().zip(frames.iter()) {
            let lin = axis.cross(&(end - origin));
            if self.is_planar() {
                full[(0, k)] = lin.x;
                full[(1, k)] = lin.y;
                full[(2, k)] = axis.z;
            } else {
                for r in 0..3 {
                    full[(r, k)] = lin[r];
                    full[(3 + r, k)] = axis[r];
                }
            }
        }
        let matrix = match kind {
            JacobianKind::Pose => full,
            JacobianKind::Position => full.rows(0, pd).into_owned(),
            JacobianKind::Orientation => full.rows(pd, od).into_owned(),
        };
        Ok(TaskJacobian { matrix, kind })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChainDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChainDoc::from(self))?)
    }
}

/// JSON document form:
/// `{"type":"planar"|"spatial","links":[...],"branches":{"left":[...],"right":[...]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDoc {
    #[serde(rename = "type")]
    pub chain_type: String,
    pub links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Branches>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BasePose>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkDoc {
    Length(f64),
    Planar(PlanarJoint),
    Spatial(SpatialJoint),
}

impl TryFrom<ChainDoc> for SerialChain {
    type Error = Error;

    fn try_from(doc: ChainDoc) -> Result<Self> {
        let kind = match doc.chain_type.as_str() {
            "planar" => ChainKind::Planar(
                doc.links
                    .iter()
                    .map(|l| match l {
                        LinkDoc::Length(length) => Ok(PlanarJoint {
                            length: *length,
                            offset: 0.0,
                        }),
                        LinkDoc::Planar(j) => Ok(*j),
                        LinkDoc::Spatial(_) => invalid("spatial link in planar chain"),
                    })
                    .collect::<Result<_>>()?,
            ),
            "spatial" => ChainKind::Spatial(
                doc.links
                    .iter()
                    .map(|l| match l {
                        LinkDoc::Spatial(j) => Ok(*j),
                        _ => invalid("spatial chain links need `axis` and `offset`"),
                    })
                    .collect::<Result<_>>()?,
            ),
            other => return invalid(format!("unknown chain type `{other}`")),
        };
        SerialChain::new(kind, doc.branches, doc.base.unwrap_or_default())
    }
}

impl From<&SerialChain> for ChainDoc {
    fn from(c: &SerialChain) -> Self {
        let (chain_type, links) = match &c.kind {
            ChainKind::Planar(j) => (
                "planar",
                j.iter()
                    .map(|j| {
                        if j.offset == 0.0 {
                            LinkDoc::Length(j.length)
                        } else {
                            LinkDoc::Planar(*j)
                        }
                    })
                    .collect(),
            ),
            ChainKind::Spatial(j) => ("spatial", j.iter().map(|j| LinkDoc::Spatial(*j)).collect()),
        };
        ChainDoc {
            chain_type: chain_type.to_string(),
            links,
            branches: c.branches.clone(),
            base: if c.base == BasePose::default() {
                None
            } else {
                Some(c.base)
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn planar3() -> SerialChain {
        SerialChain::planar(&[1.0, 1.0, 1.0]).unwrap()
    }

    fn spatial_z3() -> SerialChain {
        let j = SpatialJoint {
            axis: Vector3::z(),
            offset: Vector3::x(),
        };
        SerialChain::new(ChainKind::Spatial(vec![j; 3]), None, BasePose::default()).unwrap()
    }

    #[test]
    fn planar_fk_examples() {
        let c = planar3();
        match c.forward_kinematics(&DVector::zeros(3), Branch::Main).unwrap() {
            Pose::Planar { position, angle } => {
                assert_relative_eq!(position, Vector2::new(3.0, 0.0), epsilon = 1e-15);
                assert_eq!(angle, 0.0);
            }
            _ => unreachable!(),
        }
        let q = DVector::from_vec(vec![FRAC_PI_2, 0.0, 0.0]);
        match c.forward_kinematics(&q, Branch::Main).unwrap() {
            Pose::Planar { position, angle } => {
                assert_relative_eq!(position, Vector2::new(0.0, 3.0), epsilon = 1e-14);
                assert_relative_eq!(angle, FRAC_PI_2, epsilon = 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn spatial_fk_planar_embedding() {
        let c = spatial_z3();
        match c.forward_kinematics(&DVector::zeros(3), Branch::Main).unwrap() {
            Pose::Spatial {
                position,
                orientation,
            } => {
                assert_relative_eq!(position, Vector3::new(3.0, 0.0, 0.0), epsilon = 1e-15);
                assert_eq!(orientation, UnitQuaternion::identity());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn planar_pose_jacobian_straight() {
        let j = planar3()
            .geometric_jacobian(&DVector::zeros(3), Branch::Main, JacobianKind::Pose)
            .unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 3., 2., 1., 1., 1., 1.]);
        assert_relative_eq!(j.matrix, expected, epsilon = 1e-15);
        assert_eq!(j.matrix.nrows(), 3);
    }

    #[test]
    fn row_counts_match_kind() {
        let p = planar3();
        let s = spatial_z3();
        let q = DVector::zeros(3);
        let rows = |c: &SerialChain, k| c.geometric_jacobian(&q, Branch::Main, k).unwrap().matrix.nrows();
        assert_eq!(rows(&p, JacobianKind::Position), 2);
        assert_eq!(rows(&p, JacobianKind::Orientation), 1);
        assert_eq!(rows(&s, JacobianKind::Pose), 6);
    }

    #[test]
    fn dimension_mismatch_is_invalid_argument() {
        let err = planar3().forward_kinematics(&DVector::zeros(2), Branch::Main);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = planar3().geometric_jacobian(&DVector::zeros(4), Branch::Main, JacobianKind::Pose);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn construction_invariants() {
        assert!(SerialChain::planar(&[1.0, -0.1]).is_err());
        let bad_axis = SpatialJoint {
            axis: Vector3::new(0.0, 0.0, 1.1),
            offset: Vector3::x(),
        };
        assert!(SerialChain::new(ChainKind::Spatial(vec![bad_axis]), None, BasePose::default()).is_err());
        let b = Branches {
            left: vec![0, 1],
            right: vec![0, 3],
        };
        let joints = vec![PlanarJoint { length: 1.0, offset: 0.0 }; 3];
        assert!(SerialChain::new(ChainKind::Planar(joints), Some(b), BasePose::default()).is_err());
    }

    #[test]
    fn branched_chain_zero_columns() {
        let joints = vec![PlanarJoint { length: 0.7, offset: 0.0 }; 5];
        let branches = Branches {
            left: vec![0, 1, 2],
            right: vec![0, 3, 4],
        };
        let c = SerialChain::new(ChainKind::Planar(joints), Some(branches), BasePose::default()).unwrap();
        let q = DVector::from_vec(vec![0.3, 0.2, -0.4, 0.5, 0.1]);
        let jl = c.geometric_jacobian(&q, Branch::Left, JacobianKind::Position).unwrap();
        for col in [3, 4] {
            assert!(jl.matrix.column(col).iter().all(|&v| v == 0.0));
        }
        assert!(jl.matrix.column(0).norm() > 0.0);
        assert!(c.forward_kinematics(&q, Branch::Main).is_err());
        assert_eq!(c.branches().unwrap().shared(), vec![0]);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"type":"planar","links":[1.0,{"length":0.5,"offset":1.5},0.5],
                       "branches":{"left":[0,1],"right":[0,2]}}"#;
        let c = SerialChain::from_json(text).unwrap();
        assert_eq!(c.dof(), 3);
        let back = SerialChain::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);

        let text = r#"{"type":"spatial","links":[{"axis":[0,0,1],"offset":[1,0,0]}]}"#;
        let s = SerialChain::from_json(text).unwrap();
        assert!(!s.is_planar());
        assert!(SerialChain::from_json(r#"{"type":"cubic","links":[1.0]}"#).is_err());
    }
}
