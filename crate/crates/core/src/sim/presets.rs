use std::f64::consts::FRAC_PI_2;

use nalgebra::{DVector, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::{BasePose, Branches, ChainKind, PlanarJoint, SerialChain, SpatialJoint};

pub const PRESET_NAMES: [&str; 5] = ["planar3", "planar3_alt", "bimanual5", "bimanual7", "spatial6"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotPreset {
    pub name: String,
    #[serde(skip)]
    pub chain: SerialChain,
    pub q_init: Vec<f64>,
    pub notes: String,
}

impl RobotPreset {
    pub fn q_init(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q_init)
    }
}

fn planar(joints: &[(f64, f64)], branches: Option<Branches>, base: BasePose) -> SerialChain {
    let joints = joints
        .iter()
        .map(|&(length, offset)| PlanarJoint { length, offset })
        .collect();
    SerialChain::new(ChainKind::Planar(joints), branches, base).expect("preset chains are valid")
}

/// Shared torso joint followed by two mirrored arms.
fn bimanual(torso: f64, arm: &[f64]) -> SerialChain {
    let mut joints = vec![(torso, 0.0)];
    for side in [FRAC_PI_2, -FRAC_PI_2] {
        for (k, &l) in arm.iter().enumerate() {
            joints.push((l, if k == 0 { side } else { 0.0 }));
        }
    }
    let n = arm.len();
    let branches = Branches {
        left: std::iter::once(0).chain(1..=n).collect(),
        right: std::iter::once(0).chain(n + 1..=2 * n).collect(),
    };
    planar(&joints, Some(branches), BasePose::planar(0.0, 0.0, FRAC_PI_2))
}

pub fn preset(name: &str) -> Result<RobotPreset> {
    let (chain, q_init, notes) = match name {
        "planar3" => (
            planar(&[(1.0, 0.0); 3], None, BasePose::default()),
            vec![FRAC_PI_2 + 0.5, -1.0, -FRAC_PI_2 + 0.5],
            "three unit links",
        ),
        "planar3_alt" => (
            planar(&[(1.2, 0.0), (0.9, 0.0), (0.7, 0.0)], None, BasePose::default()),
            vec![FRAC_PI_2 + 0.5, -1.0, -FRAC_PI_2 + 0.5],
            "three links of unequal length",
        ),
        "bimanual5" => (
            bimanual(1.0, &[0.6, 0.5]),
            vec![0.0, -0.5, 1.0, 0.5, -1.0],
            "vertical torso joint shared by two 2-link arms",
        ),
        "bimanual7" => (
            bimanual(1.2, &[0.5, 0.4, 0.3]),
            vec![0.0, -1.795, 0.491, 0.491, 1.795, -0.491, -0.491],
            "longer torso shared by two 3-link arms",
        ),
        "spatial6" => {
            let axes = [
                Vector3::z(),
                Vector3::y(),
                Vector3::y(),
                Vector3::x(),
                Vector3::y(),
                Vector3::z(),
            ];
            let offsets = [
                Vector3::new(0.0, 0.0, 0.3),
                Vector3::new(0.4, 0.0, 0.0),
                Vector3::new(0.35, 0.0, 0.0),
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::new(0.05, 0.0, 0.0),
            ];
            let joints = axes
                .iter()
                .zip(offsets)
                .map(|(&axis, offset)| SpatialJoint { axis, offset })
                .collect();
            (
                SerialChain::new(ChainKind::Spatial(joints), None, BasePose::default())?,
                vec![0.1, 0.4, -0.6, 0.2, 0.5, -0.1],
                "six revolute joints, axes z y y x y z",
            )
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(RobotPreset {
        name: name.to_string(),
        chain,
        q_init,
        notes: notes.to_string(),
    })
}
