use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kinematics::{ChainKind, SerialChain};
use crate::priority::{synthesize_priority, Hierarchy, PriorityController, Task};

const TORSO_SAMPLES: usize = 7200;

/// Annulus `[r_min, r_max]` reachable by a planar arm from its root.
fn annulus(lengths: &[f64]) -> (f64, f64) {
    let sum: f64 = lengths.iter().sum();
    let longest = lengths.iter().copied().fold(0.0, f64::max);
    ((2.0 * longest - sum).max(0.0), sum)
}

/// Brute-force test of whether both arm targets of a planar two-arm chain
/// (one shared torso joint at index 0) can be met at once: sweeps the torso
/// angle and checks each target against its arm's reachable annulus around
/// the torso tip, shrunk by `margin`.
pub fn bimanual_reachable(
    chain: &SerialChain,
    p_left: &DVector<f64>,
    p_right: &DVector<f64>,
    margin: f64,
) -> Result<bool> {
    let ChainKind::Planar(joints) = chain.kind() else {
        return invalid("reachability sweep needs a planar chain");
    };
    let Some(br) = chain.branches() else {
        return invalid("reachability sweep needs a branched chain");
    };
    if br.shared() != [0] || p_left.len() != 2 || p_right.len() != 2 {
        return invalid("reachability sweep needs one shared torso joint and planar targets");
    }
    let arm = |idx: &[usize]| annulus(&idx.iter().skip(1).map(|&i| joints[i].length).collect::<Vec<_>>());
    let (l_lo, l_hi) = arm(&br.left);
    let (r_lo, r_hi) = arm(&br.right);
    let base = chain.base();
    let yaw = base.orientation.yaw() + joints[0].offset;
    let inside = |p: &DVector<f64>, tx: f64, ty: f64, lo: f64, hi: f64| {
        let d = (p[0] - tx).hypot(p[1] - ty);
        d >= lo + margin && d <= hi - margin
    };
    Ok((0..TORSO_SAMPLES).any(|k| {
        let a = yaw + 2.0 * std::f64::consts::PI * k as f64 / TORSO_SAMPLES as f64;
        let tx = base.position.x + joints[0].length * a.cos();
        let ty = base.position.y + joints[0].length * a.sin();
        inside(p_left, tx, ty, l_lo, l_hi) && inside(p_right, tx, ty, r_lo, r_hi)
    }))
}

/// Sweep of manual weights between two strict hierarchies with constant
/// references, warm-started from one pair to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionConfig {
    pub tasks: Vec<Task>,
    /// Exactly two hierarchies; pair `i` weights them `(1 − s_i, s_i)` with
    /// `s_i` rising from 0 to 1.
    pub hierarchies: Vec<Hierarchy>,
    pub references: Vec<Vec<f64>>,
    pub pairs: usize,
    pub settle: f64,
    pub dwell: f64,
    pub dt: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub weights: Vec<[f64; 2]>,
    /// Joint state at the end of each pair's dwell.
    pub final_q: Vec<Vec<f64>>,
    /// Task error norms at the end of each dwell.
    pub errors: Vec<Vec<f64>>,
    pub flagged_steps: usize,
}

impl TransitionResult {
    /// Largest change of any task error between consecutive weight pairs.
    pub fn max_error_jump(&self) -> f64 {
        self.errors
            .windows(2)
            .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn run_transition_study(chain: &SerialChain, q0: &DVector<f64>, cfg: &TransitionConfig) -> Result<TransitionResult> {
    if cfg.hierarchies.len() != 2 || cfg.pairs < 2 {
        return invalid("transition study needs two hierarchies and at least two weight pairs");
    }
    if cfg.references.len() != cfg.tasks.len() {
        return invalid("one reference per task");
    }
    let refs: Vec<DVector<f64>> = cfg.references.iter().map(|r| DVector::from_column_slice(r)).collect();
    let mut q = q0.clone();
    let mut out = TransitionResult {
        weights: vec![],
        final_q: vec![],
        errors: vec![],
        flagged_steps: 0,
    };
    for i in 0..cfg.pairs {
        let s = i as f64 / (cfg.pairs - 1) as f64;
        let w = [1.0 - s, s];
        let ctl = PriorityController::manual(cfg.tasks.clone(), cfg.hierarchies.clone(), w.to_vec(), cfg.damping);
        let horizon = if i == 0 { cfg.settle } else { cfg.dwell };
        let steps = (horizon / cfg.dt).round() as usize;
        let traj = synthesize_priority(&ctl, chain, &q, |_| refs.clone(), 0.0, cfg.dt, steps)?;
        q = traj.final_q().cloned().unwrap_or(q);
        out.weights.push(w);
        out.final_q.push(q.as_slice().to_vec());
        out.errors.push(traj.last_errors().to_vec());
        out.flagged_steps += traj.flagged_steps;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::preset;

    #[test]
    fn annulus_bounds() {
        let (lo, hi) = annulus(&[0.6, 0.5]);
        assert!((lo - 0.1).abs() < 1e-15 && (hi - 1.1).abs() < 1e-15);
        assert_eq!(annulus(&[0.5, 0.4, 0.3]).0, 0.0);
    }

    #[test]
    fn reachability_of_initial_pose() {
        let p = preset("bimanual5").unwrap();
        let q = p.q_init();
        let l = p.chain.forward_kinematics(&q, crate::kinematics::Branch::Left).unwrap().position();
        let r = p.chain.forward_kinematics(&q, crate::kinematics::Branch::Right).unwrap().position();
        assert!(bimanual_reachable(&p.chain, &l, &r, 0.0).unwrap());
        let far = DVector::from_vec(vec![5.0, 0.0]);
        assert!(!bimanual_reachable(&p.chain, &l, &far, 0.0).unwrap());
    }
}
