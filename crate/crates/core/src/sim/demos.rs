use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reference::{Phase, Reference, ReferenceProgram};
use super::studies::bimanual_reachable;
use super::time_grid;
use crate::error::{invalid, Error, Result};
use crate::kinematics::{pseudoinverse, strict_hierarchy_step, wrap_angle, Branch, JacobianKind, Pose, SerialChain};
use crate::priority::{task_jacobians, Hierarchy, Task};
use crate::tpgmm::Demonstration;

/// Arm whose reference is held fixed while the other one sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn branch(self) -> Branch {
        match self {
            Side::Left => Branch::Left,
            Side::Right => Branch::Right,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Bimanual program: the `held` arm keeps its initial position, the other
/// arm's reference moves away from the torso tip along the line through its
/// initial position, travels `excursion` beyond it, holds there and comes
/// back.
///
/// Timeline as fractions of `horizon`: rest until 0.05, out until 0.4, hold
/// until 0.6, back until 0.95. Phases are labelled by sampling the brute-force
/// reachability test on the reference, so conflict intervals are located
/// independently of any controller.
pub fn priority_program(
    chain: &SerialChain,
    q0: &DVector<f64>,
    held: Side,
    excursion: f64,
    horizon: f64,
) -> Result<ReferenceProgram> {
    let (left, right) = (Task::position("left", Branch::Left), Task::position("right", Branch::Right));
    let p_held = if held == Side::Left { &left } else { &right }.value(chain, q0)?;
    let p_move = if held == Side::Left { &right } else { &left }.value(chain, q0)?;
    if p_held.len() != 2 {
        return invalid("priority program needs a planar chain");
    }
    let dir = (&p_move - torso_tip(chain, q0)?).normalize();
    let far = &p_move + dir * excursion;
    let (a, b) = (p_move.as_slice().to_vec(), far.as_slice().to_vec());
    let h = horizon;
    let sweep = Reference::Waypoints {
        points: vec![
            (0.05 * h, a.clone()),
            (0.4 * h, b.clone()),
            (0.6 * h, b),
            (0.95 * h, a),
        ],
    };
    let fixed = Reference::Constant {
        value: p_held.as_slice().to_vec(),
    };
    let references = if held == Side::Left {
        vec![fixed, sweep]
    } else {
        vec![sweep, fixed]
    };
    let mut program = ReferenceProgram {
        references,
        phases: vec![],
    };
    program.phases = label_phases(chain, &program, horizon, 0.01)?;
    Ok(program)
}

fn torso_tip(chain: &SerialChain, q: &DVector<f64>) -> Result<DVector<f64>> {
    let shared = chain.branches().map(|b| b.shared()).unwrap_or_default();
    let crate::kinematics::ChainKind::Planar(joints) = chain.kind() else {
        return invalid("expected a planar chain");
    };
    if shared != [0] {
        return invalid("expected exactly one shared torso joint at index 0");
    }
    let base = chain.base();
    let a = base.orientation.yaw() + joints[0].offset + q[0];
    Ok(DVector::from_vec(vec![
        base.position.x + joints[0].length * a.cos(),
        base.position.y + joints[0].length * a.sin(),
    ]))
}

fn label_phases(chain: &SerialChain, program: &ReferenceProgram, horizon: f64, dt: f64) -> Result<Vec<Phase>> {
    let mut phases: Vec<Phase> = Vec::new();
    for t in time_grid(dt, horizon) {
        let refs = program.eval(t);
        let conflict = !bimanual_reachable(chain, &refs[0], &refs[1], 0.0)?;
        match phases.last_mut() {
            Some(p) if p.conflict == conflict => p.t1 = t + dt,
            _ => phases.push(Phase {
                label: if conflict { "conflict".into() } else { "feasible".into() },
                t0: t,
                t1: t + dt,
                conflict,
            }),
        }
    }
    Ok(phases)
}

impl Task {
    pub fn position(label: &str, branch: Branch) -> Self {
        Task::new(label, branch, crate::priority::TaskKind::Position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityDemoConfig {
    pub tasks: Vec<Task>,
    pub hierarchy: Hierarchy,
    pub program: ReferenceProgram,
    pub dt: f64,
    pub horizon: f64,
    /// `K_p` in `ẋ_k = K_p·e_k`.
    pub gain: f64,
    pub damping: f64,
    pub seed: u64,
    /// Std of a constant offset added per demo to the references of every
    /// task except the top one.
    #[serde(default)]
    pub jitter: f64,
}

/// Runs the strict-hierarchy controller on the program and records
/// `ξ_t = [t; K_p e_1; …]`, the joint states, task values and Jacobians.
/// Returns the demos plus warnings (for example, a program without a
/// conflict phase, which leaves the hierarchy unidentifiable).
pub fn generate_priority_demos(
    chain: &SerialChain,
    q0: &DVector<f64>,
    cfg: &PriorityDemoConfig,
    n_demos: usize,
) -> Result<(Vec<Demonstration>, Vec<String>)> {
    let dims: Vec<usize> = cfg.tasks.iter().map(|t| t.reference_dim(chain)).collect();
    cfg.program.validate(&dims)?;
    if !(cfg.dt > 0.0 && cfg.horizon > 0.0 && cfg.gain > 0.0) {
        return invalid("dt, horizon and gain must be positive");
    }
    if q0.len() != chain.dof() {
        return invalid(format!("q0 has {} entries for {} joints", q0.len(), chain.dof()));
    }
    let mut warnings = Vec::new();
    if !cfg.program.has_conflict() {
        warnings.push("reference program has no conflict phase; hierarchies are not identifiable".to_string());
    }
    let top = *cfg.hierarchy.order.first().ok_or_else(|| Error::InvalidArgument("empty hierarchy".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let times = time_grid(cfg.dt, cfg.horizon);
    let mut demos = Vec::with_capacity(n_demos);
    for _ in 0..n_demos {
        let refs: Vec<Reference> = cfg
            .program
            .references
            .iter()
            .enumerate()
            .map(|(k, r)| {
                if k == top || cfg.jitter == 0.0 {
                    r.clone()
                } else {
                    let off: Vec<f64> = (0..r.dim())
                        .map(|_| cfg.jitter * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    r.shifted(&off)
                }
            })
            .collect();
        demos.push(run_priority_demo(chain, q0, cfg, &refs, &times)?);
    }
    Ok((demos, warnings))
}

fn run_priority_demo(
    chain: &SerialChain,
    q0: &DVector<f64>,
    cfg: &PriorityDemoConfig,
    refs: &[Reference],
    times: &[f64],
) -> Result<Demonstration> {
    let m: usize = cfg.tasks.iter().map(|t| t.dim(chain)).sum();
    let mut xi = DMatrix::zeros(times.len(), 1 + m);
    let mut demo = Demonstration::default();
    let mut q = q0.clone();
    for (row, &t) in times.iter().enumerate() {
        let jacs = task_jacobians(chain, &cfg.tasks, &q)?;
        let mut col = 1;
        let mut values = Vec::with_capacity(m);
        let mut stack = Vec::with_capacity(cfg.tasks.len());
        xi[(row, 0)] = t;
        for ((task, r), j) in cfg.tasks.iter().zip(refs).zip(&jacs) {
            let e = task.error(chain, &q, &r.eval(t))? * cfg.gain;
            for v in e.iter() {
                xi[(row, col)] = *v;
                col += 1;
            }
            values.extend(task.value(chain, &q)?.iter().copied());
            stack.push((j.clone(), e));
        }
        demo.q.push(q.clone());
        demo.x.push(DVector::from_vec(values));
        demo.jacobians.push(jacs);
        demo.object.push(None);
        let qdot = strict_hierarchy_step(&stack, &cfg.hierarchy.order, cfg.damping)?;
        q += qdot * cfg.dt;
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("demo diverged at t = {t}")));
        }
    }
    demo.times = times.to_vec();
    demo.xi = xi;
    demo.validate()?;
    Ok(demo)
}

/// Recomputes `ξ` of a recorded priority demo from its stored joint states.
pub fn rederive_xi(
    chain: &SerialChain,
    tasks: &[Task],
    program: &ReferenceProgram,
    gain: f64,
    demo: &Demonstration,
) -> Result<DMatrix<f64>> {
    let m: usize = tasks.iter().map(|t| t.dim(chain)).sum();
    let mut xi = DMatrix::zeros(demo.len(), 1 + m);
    for (row, (&t, q)) in demo.times.iter().zip(&demo.q).enumerate() {
        xi[(row, 0)] = t;
        let mut col = 1;
        for (task, r) in tasks.iter().zip(&program.references) {
            for v in (task.error(chain, q, &r.eval(t))? * gain).iter() {
                xi[(row, col)] = *v;
                col += 1;
            }
        }
    }
    Ok(xi)
}

/// Planar three-joint reach, transfer and oscillation demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpacesConfig {
    pub dt: f64,
    pub reach_end: f64,
    pub transition_end: f64,
    pub horizon: f64,
    /// Nominal object pose `[x, y, θ]`.
    pub object_nominal: [f64; 3],
    /// Half-widths of the uniform object pose spread.
    pub object_spread: [f64; 3],
    /// Pre-grasp pose in the object frame; every demo starts there.
    pub approach: [f64; 3],
    pub q_home: Vec<f64>,
    pub osc_joint: usize,
    pub osc_amplitude: f64,
    pub osc_frequency: f64,
    pub seed: u64,
}

impl Default for SpacesConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            reach_end: 2.0,
            transition_end: 3.0,
            horizon: 6.0,
            object_nominal: [1.8, 0.6, -0.3],
            object_spread: [0.4, 0.4, 0.3],
            approach: [-0.4, 0.0, 0.0],
            q_home: vec![std::f64::consts::FRAC_PI_2, -0.8, -0.6],
            osc_joint: 1,
            osc_amplitude: 0.25,
            osc_frequency: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpacesDemos {
    /// `ξ = [t, q, x, y, θ]` with the object pose recorded per step.
    pub demos: Vec<Demonstration>,
    pub objects: Vec<Pose>,
}

pub(crate) fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn compose_planar(obj: &Pose, rel: &[f64; 3]) -> [f64; 3] {
    let Pose::Planar { position, angle } = obj else {
        unreachable!("planar object")
    };
    let (s, c) = angle.sin_cos();
    [
        position.x + c * rel[0] - s * rel[1],
        position.y + s * rel[0] + c * rel[1],
        angle + rel[2],
    ]
}

pub(crate) fn relative_planar(obj: &Pose, world: &[f64; 3]) -> [f64; 3] {
    let Pose::Planar { position, angle } = obj else {
        unreachable!("planar object")
    };
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (world[0] - position.x, world[1] - position.y);
    [c * dx + s * dy, -s * dx + c * dy, wrap_angle(world[2] - angle)]
}

/// Newton iterations on the planar pose, started from `q`.
pub(crate) fn planar_ik(chain: &SerialChain, q: &DVector<f64>, target: &[f64; 3]) -> Result<DVector<f64>> {
    let mut q = q.clone();
    for _ in 0..50 {
        let pose = chain.forward_kinematics(&q, Branch::Main)?.to_vector();
        let e = DVector::from_vec(vec![
            target[0] - pose[0],
            target[1] - pose[1],
            wrap_angle(target[2] - pose[2]),
        ]);
        if e.norm() < 1e-13 {
            return Ok(q);
        }
        let j = chain.geometric_jacobian(&q, Branch::Main, JacobianKind::Pose)?.matrix;
        q += pseudoinverse(&j, 1e-6) * e;
    }
    let pose = chain.forward_kinematics(&q, Branch::Main)?.to_vector();
    if (pose[0] - target[0]).hypot(pose[1] - target[1]) > 1e-8 {
        return Err(Error::InvalidArgument(format!("IK did not reach {target:?}")));
    }
    Ok(q)
}

/// Generates `n_demos` demonstrations with object poses drawn uniformly
/// around the nominal. Reach: starting at the pre-grasp pose, the end
/// effector follows a minimum-jerk path in the object frame onto the object
/// pose, tracked by exact IK seeded from `q0`. Then a minimum-jerk
/// joint-space transfer to `q_home`, then a sinusoid on one joint around
/// `q_home`.
pub fn generate_spaces_demos(
    chain: &SerialChain,
    q0: &DVector<f64>,
    cfg: &SpacesConfig,
    n_demos: usize,
) -> Result<SpacesDemos> {
    if !chain.is_planar() || chain.dof() != cfg.q_home.len() || q0.len() != chain.dof() {
        return invalid("spaces demos need a planar chain matching q_home and q0");
    }
    if cfg.osc_joint >= chain.dof() {
        return invalid("oscillating joint out of range");
    }
    if !(0.0 < cfg.reach_end && cfg.reach_end < cfg.transition_end && cfg.transition_end < cfg.horizon) {
        return invalid("phase boundaries must satisfy 0 < reach_end < transition_end < horizon");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let times = time_grid(cfg.dt, cfg.horizon);
    let q_home = DVector::from_column_slice(&cfg.q_home);
    let nq = chain.dof();
    let mut out = SpacesDemos {
        demos: vec![],
        objects: vec![],
    };
    // Pre-grasp configurations are continued from the nominal object's one so
    // every demo stays on the same IK branch.
    let nominal = Pose::Planar {
        position: Vector2::new(cfg.object_nominal[0], cfg.object_nominal[1]),
        angle: cfg.object_nominal[2],
    };
    let q_nominal = planar_ik(chain, q0, &compose_planar(&nominal, &cfg.approach))?;
    for _ in 0..n_demos {
        let o: Vec<f64> = (0..3)
            .map(|i| cfg.object_nominal[i] + cfg.object_spread[i] * rng.random_range(-1.0..=1.0))
            .collect();
        let obj = Pose::Planar {
            position: Vector2::new(o[0], o[1]),
            angle: o[2],
        };
        let rel0 = cfg.approach;
        let mut q = q_nominal.clone();
        for step in 1..=20 {
            let s = step as f64 / 20.0;
            let o: Vec<f64> = (0..3)
                .map(|i| cfg.object_nominal[i] + s * (obj.to_vector()[i] - cfg.object_nominal[i]))
                .collect();
            let via = Pose::Planar {
                position: Vector2::new(o[0], o[1]),
                angle: o[2],
            };
            q = planar_ik(chain, &q, &compose_planar(&via, &rel0))?;
        }
        let mut q_reach = q.clone();
        let mut demo = Demonstration::default();
        let mut xi = DMatrix::zeros(times.len(), 1 + nq + 3);
        for (row, &t) in times.iter().enumerate() {
            if t <= cfg.reach_end {
                let s = 1.0 - min_jerk(t / cfg.reach_end);
                let rel = [rel0[0] * s, rel0[1] * s, rel0[2] * s];
                q = planar_ik(chain, &q, &compose_planar(&obj, &rel))?;
                q_reach = q.clone();
            } else if t <= cfg.transition_end {
                let s = min_jerk((t - cfg.reach_end) / (cfg.transition_end - cfg.reach_end));
                q = &q_reach + (&q_home - &q_reach) * s;
            } else {
                q = q_home.clone();
                let w = 2.0 * std::f64::consts::PI * cfg.osc_frequency;
                q[cfg.osc_joint] += cfg.osc_amplitude * (w * (t - cfg.transition_end)).sin();
            }
            let x = chain.forward_kinematics(&q, Branch::Main)?.to_vector();
            xi[(row, 0)] = t;
            for i in 0..nq {
                xi[(row, 1 + i)] = q[i];
            }
            for i in 0..3 {
                xi[(row, 1 + nq + i)] = x[i];
            }
            demo.q.push(q.clone());
            demo.x.push(x);
            demo.object.push(Some(obj.clone()));
        }
        demo.times = times.clone();
        demo.xi = xi;
        demo.validate()?;
        out.demos.push(demo);
        out.objects.push(obj);
    }
    Ok(out)
}
