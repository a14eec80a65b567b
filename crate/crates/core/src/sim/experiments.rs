//! Experiment suites. Each returns a [`SuiteReport`] listing every checked
//! criterion with its measured value and threshold, plus the raw series.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::demos::{planar_ik, relative_planar};
use super::{
    bimanual_reachable, generate_priority_demos, generate_spaces_demos, preset, priority_program, run_transition_study,
    time_grid, PriorityDemoConfig, Side, SpacesConfig, TransitionConfig,
};
use crate::error::{invalid, Result};
use crate::gaussians::{gmr, EmOptions, EmReport};
use crate::kinematics::{Branch, JacobianKind, Pose, SerialChain};
use crate::operators::{op_configuration, op_relative_pose, RobotContext, TaskState};
use crate::par::Execution;
use crate::priority::{
    fit_priority_model, project_demo, synthesize_priority, Hierarchy, PriorityController, PriorityModel, Task, TaskKind,
};
use crate::tpgmm::{project_to_frames, tpgmm_fit, Demonstration, ProjectionMode, TaskFrame, TpGmm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<"`, `"<="` or `">="`: how `value` is compared to `threshold`.
    pub relation: String,
    pub passed: bool,
}

impl CriterionResult {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::make(name, value, threshold, "<", value < threshold)
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::make(name, value, threshold, "<=", value <= threshold)
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::make(name, value, threshold, ">=", value >= threshold)
    }

    fn make(name: impl Into<String>, value: f64, threshold: f64, relation: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            relation: relation.into(),
            passed: passed && value.is_finite(),
        }
    }
}

/// Column-named numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub criteria: Vec<CriterionResult>,
    pub warnings: Vec<String>,
    pub tables: Vec<Table>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            criteria: vec![],
            warnings: vec![],
            tables: vec![],
        }
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn variances(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    data.column_iter()
        .map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .collect()
}

// Bimanual priority experiments.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorityConfig {
    pub robot: String,
    pub transfer_robot: String,
    pub dt: f64,
    pub horizon: f64,
    pub gain: f64,
    /// Damping of the task pseudoinverses in demos, in the candidate
    /// operators used for projection, and in the controller.
    pub damping: f64,
    /// Distance the swept reference travels outward from its start.
    pub excursion: f64,
    pub n_demos: usize,
    pub k: usize,
    pub seed: u64,
    /// Duration of the closed-loop synthesis runs.
    pub synth_horizon: f64,
    /// How far the reachable right target is moved toward the torso.
    pub feasible_shift: f64,
    /// Relative regularizer of the hierarchy precision matrices.
    pub precision_reg: f64,
    /// EM covariance regularizer relative to `trace(cov)/D` of each view. The
    /// time column dominates that trace, so the usual 1e-6 would floor the
    /// velocity variances far above the demonstrated spread.
    pub em_reg_scale: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            robot: "bimanual5".into(),
            transfer_robot: "bimanual7".into(),
            dt: 0.05,
            horizon: 100.0,
            gain: 1.0,
            damping: 1e-2,
            excursion: 0.5,
            n_demos: 1,
            k: 1,
            seed: 1,
            synth_horizon: 100.0,
            feasible_shift: 0.15,
            precision_reg: 1e-8,
            em_reg_scale: 1e-12,
            exec: Execution::Parallel,
        }
    }
}

pub fn bimanual_tasks() -> Vec<Task> {
    vec![Task::position("left", Branch::Left), Task::position("right", Branch::Right)]
}

pub fn bimanual_hierarchies() -> Vec<Hierarchy> {
    vec![
        Hierarchy::new("left_first", vec![0, 1]),
        Hierarchy::new("right_first", vec![1, 0]),
    ]
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

/// Demos of the bimanual robot under the hierarchy that favours `side`.
pub fn priority_demos(cfg: &PriorityConfig, side: Side) -> Result<(SerialChain, Vec<Demonstration>, Vec<String>)> {
    let p = preset(&cfg.robot)?;
    let program = priority_program(&p.chain, &p.q_init(), side, cfg.excursion, cfg.horizon)?;
    let demo_cfg = PriorityDemoConfig {
        tasks: bimanual_tasks(),
        hierarchy: bimanual_hierarchies()[side_index(side)].clone(),
        program,
        dt: cfg.dt,
        horizon: cfg.horizon,
        gain: cfg.gain,
        damping: cfg.damping,
        seed: cfg.seed,
        jitter: 0.0,
    };
    let (demos, warnings) = generate_priority_demos(&p.chain, &p.q_init(), &demo_cfg, cfg.n_demos)?;
    Ok((p.chain, demos, warnings))
}

fn em_options(k: usize, seed: u64, exec: Execution) -> EmOptions {
    EmOptions {
        seed,
        exec,
        ..EmOptions::with_k(k)
    }
}

/// Trains the priority model on demos favouring `side`.
pub fn train_priority(cfg: &PriorityConfig, side: Side) -> Result<(PriorityModel, EmReport)> {
    let (_, demos, _) = priority_demos(cfg, side)?;
    fit_priority(cfg, &demos)
}

/// Fits the bimanual priority model to recorded demos.
pub fn fit_priority(cfg: &PriorityConfig, demos: &[Demonstration]) -> Result<(PriorityModel, EmReport)> {
    let (mut model, report, _) = fit_priority_model(
        demos,
        bimanual_tasks(),
        bimanual_hierarchies(),
        cfg.damping,
        &EmOptions {
            reg_scale: cfg.em_reg_scale,
            ..em_options(cfg.k, cfg.seed, cfg.exec)
        },
    )?;
    model.precision_reg = cfg.precision_reg;
    Ok((model, report))
}

/// Hierarchy extraction: per-dimension variance of the demonstrated
/// hierarchy's projection against the alternative.
pub fn priority_suite(cfg: &PriorityConfig, side: Side) -> Result<SuiteReport> {
    let (_, demos, warnings) = priority_demos(cfg, side)?;
    let proj = project_demo(&demos, &bimanual_hierarchies(), cfg.damping, cfg.exec)?;
    let dem = side_index(side);
    let alt = 1 - dem;
    let v_dem = variances(&proj.datasets[dem]);
    let v_alt = variances(&proj.datasets[alt]);
    let mut report = SuiteReport::new(&format!("priority_{}", if dem == 0 { "left" } else { "right" }));
    report.warnings = warnings;
    let ratio = (1..v_dem.len())
        .map(|d| v_dem[d] / v_alt[d])
        .fold(0.0, f64::max);
    report
        .criteria
        .push(CriterionResult::at_most("max per-dimension variance ratio", ratio, 1e-2));
    // The top task of the demonstrated hierarchy is realized exactly.
    let top = if dem == 0 { 1..3 } else { 3..5 };
    let deviation = demos
        .iter()
        .flat_map(|d| d.xi.row_iter())
        .zip(proj.datasets[dem].row_iter())
        .flat_map(|(xi, x)| top.clone().map(move |c| (xi[c] - x[c]).abs()))
        .fold(0.0, f64::max);
    if cfg.damping == 0.0 {
        report
            .criteria
            .push(CriterionResult::below("top-task projection deviation", deviation, 1e-9));
    }
    let cols: Vec<String> = ["t", "xl_x", "xl_y", "xr_x", "xr_y"].iter().map(|s| s.to_string()).collect();
    for (j, h) in bimanual_hierarchies().iter().enumerate() {
        let d = &proj.datasets[j];
        report.tables.push(Table {
            name: format!("projected_{}", h.label),
            columns: cols.clone(),
            rows: d.row_iter().map(|r| r.iter().copied().collect()).collect(),
        });
    }
    report.tables.push(Table {
        name: "variances".into(),
        columns: std::iter::once("frame".to_string()).chain(cols[1..].iter().cloned()).collect(),
        rows: [(dem, &v_dem), (alt, &v_alt)]
            .iter()
            .map(|(j, v)| std::iter::once(*j as f64).chain(v[1..].iter().copied()).collect())
            .collect(),
    });
    Ok(report)
}

/// Targets for a closed-loop run: left at its initial position, right moved
/// along the program's sweep line by `outward` (positive: away from the
/// torso, beyond reach; negative: toward the torso).
pub fn fixed_targets(chain: &SerialChain, q0: &DVector<f64>, outward: f64) -> Result<Vec<DVector<f64>>> {
    let tasks = bimanual_tasks();
    let left = tasks[0].value(chain, q0)?;
    let right = tasks[1].value(chain, q0)?;
    // Mid-hold of a unit-horizon program sits at the full excursion.
    let program = priority_program(chain, q0, Side::Left, 1.0, 1.0)?;
    let dir = program.references[1].eval(0.5) - &right;
    Ok(vec![left, &right + dir * outward])
}

/// Outcome of a fixed-target synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    /// Final task errors, in task order.
    pub errors: Vec<f64>,
    /// Whether the targets passed the brute-force reachability sweep.
    pub reachable: bool,
    /// `[t, errors…, candidate precision traces…]` per step.
    pub rows: Vec<Vec<f64>>,
}

/// Runs the learned controller on `robot` towards [`fixed_targets`].
pub fn closed_loop(model: &PriorityModel, robot: &str, outward: f64, cfg: &PriorityConfig) -> Result<ClosedLoop> {
    let p = preset(robot)?;
    let q0 = p.q_init();
    let targets = fixed_targets(&p.chain, &q0, outward)?;
    let reachable = bimanual_reachable(&p.chain, &targets[0], &targets[1], 0.0)?;
    let mut ctl = PriorityController::learned(model.clone(), cfg.damping);
    ctl.gain = cfg.gain;
    ctl.exec = cfg.exec;
    let steps = (cfg.synth_horizon / cfg.dt).round() as usize;
    let traj = synthesize_priority(&ctl, &p.chain, &q0, |_| targets.clone(), 0.0, cfg.dt, steps)?;
    let rows = traj
        .times
        .iter()
        .zip(&traj.errors)
        .zip(&traj.weight_traces)
        .map(|((t, e), w)| [*t].iter().chain(e).chain(w).copied().collect())
        .collect();
    Ok(ClosedLoop {
        errors: traj.last_errors().to_vec(),
        reachable,
        rows,
    })
}

pub fn closed_loop_table(name: &str, run: &ClosedLoop) -> Table {
    Table {
        name: name.into(),
        columns: ["t", "err_left", "err_right", "trace_left_first", "trace_right_first"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: run.rows.clone(),
    }
}

/// Priority synthesis with a model trained on left-priority demos.
pub fn synthesis_suite(cfg: &PriorityConfig) -> Result<SuiteReport> {
    let (model, _) = train_priority(cfg, Side::Left)?;
    let mut report = SuiteReport::new("synthesis");
    let conflict = closed_loop(&model, &cfg.robot, cfg.excursion, cfg)?;
    report.criteria.push(CriterionResult::below(
        "conflict: left steady-state error",
        conflict.errors[0],
        1e-3,
    ));
    report.criteria.push(CriterionResult::below(
        "conflict: right target classified unreachable",
        conflict.reachable as u8 as f64,
        0.5,
    ));
    let feasible = closed_loop(&model, &cfg.robot, -cfg.feasible_shift, cfg)?;
    report.criteria.push(CriterionResult::at_least(
        "feasible: right target classified reachable",
        feasible.reachable as u8 as f64,
        0.5,
    ));
    report.criteria.push(CriterionResult::below(
        "feasible: left steady-state error",
        feasible.errors[0],
        1e-3,
    ));
    report.criteria.push(CriterionResult::below(
        "feasible: right steady-state error",
        feasible.errors[1],
        1e-3,
    ));
    report.tables.push(closed_loop_table("conflict_run", &conflict));
    report.tables.push(closed_loop_table("feasible_run", &feasible));
    Ok(report)
}

/// Model trained on one bimanual robot, run on another.
pub fn transfer_suite(cfg: &PriorityConfig) -> Result<SuiteReport> {
    let (model, _) = train_priority(cfg, Side::Left)?;
    let mut report = SuiteReport::new("transfer");
    let run = closed_loop(&model, &cfg.transfer_robot, cfg.excursion, cfg)?;
    report.criteria.push(CriterionResult::below(
        &format!("{}: left steady-state error under conflict", cfg.transfer_robot),
        run.errors[0],
        1e-3,
    ));
    report.criteria.push(CriterionResult::below(
        &format!("{}: right target classified unreachable", cfg.transfer_robot),
        run.reachable as u8 as f64,
        0.5,
    ));
    report.tables.push(closed_loop_table("transfer_run", &run));
    Ok(report)
}

// Weight-transition studies on the planar arm.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionSuiteConfig {
    pub robot: String,
    pub q_init: Option<Vec<f64>>,
    pub y_infeasible: f64,
    pub y_feasible: f64,
    pub orientation: f64,
    pub pairs: usize,
    pub settle: f64,
    pub dwell: f64,
    pub dt: f64,
    pub damping: f64,
}

impl Default for TransitionSuiteConfig {
    fn default() -> Self {
        Self {
            robot: "planar3".into(),
            q_init: None,
            y_infeasible: 1.1,
            y_feasible: 0.5,
            orientation: -FRAC_PI_2,
            pairs: 101,
            settle: 60.0,
            dwell: 5.0,
            dt: 0.01,
            damping: 1e-2,
        }
    }
}

fn transition_config(cfg: &TransitionSuiteConfig, y: f64) -> TransitionConfig {
    TransitionConfig {
        tasks: vec![
            Task::new("position_y", Branch::Main, TaskKind::PositionAxis { axis: 1 }),
            Task::new("orientation", Branch::Main, TaskKind::Orientation),
        ],
        hierarchies: vec![
            Hierarchy::new("orientation_first", vec![1, 0]),
            Hierarchy::new("position_first", vec![0, 1]),
        ],
        references: vec![vec![y], vec![cfg.orientation]],
        pairs: cfg.pairs,
        settle: cfg.settle,
        dwell: cfg.dwell,
        dt: cfg.dt,
        damping: cfg.damping,
    }
}

fn transition_run(cfg: &TransitionSuiteConfig, y: f64) -> Result<super::TransitionResult> {
    let p = preset(&cfg.robot)?;
    let q0 = match &cfg.q_init {
        Some(q) => DVector::from_column_slice(q),
        None => p.q_init(),
    };
    run_transition_study(&p.chain, &q0, &transition_config(cfg, y))
}

fn transition_table(r: &super::TransitionResult) -> Table {
    let nq = r.final_q.first().map_or(0, |q| q.len());
    Table {
        name: "weights".into(),
        columns: ["w_orientation_first", "w_position_first", "err_position", "err_orientation"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..nq).map(|i| format!("q_{i}")))
            .collect(),
        rows: r
            .weights
            .iter()
            .zip(&r.errors)
            .zip(&r.final_q)
            .map(|((w, e), q)| w.iter().chain(e).chain(q).copied().collect())
            .collect(),
    }
}

/// Conflicting position and orientation targets, weights swept between the
/// two strict hierarchies.
pub fn transitions_suite(cfg: &TransitionSuiteConfig) -> Result<SuiteReport> {
    let r = transition_run(cfg, cfg.y_infeasible)?;
    let mut report = SuiteReport::new("transitions");
    let (first, last) = (&r.errors[0], &r.errors[r.errors.len() - 1]);
    report
        .criteria
        .push(CriterionResult::below("orientation error at (1,0)", first[1], 1e-3));
    report
        .criteria
        .push(CriterionResult::below("position error at (0,1)", last[0], 1e-3));
    report
        .criteria
        .push(CriterionResult::below("max consecutive error jump", r.max_error_jump(), 0.05));
    if r.flagged_steps > 0 {
        report
            .warnings
            .push(format!("{} steps needed a regularized weight sum", r.flagged_steps));
    }
    report.tables.push(transition_table(&r));
    Ok(report)
}

/// Reachable targets: every weight pair tracks both tasks.
pub fn feasible_suite(cfg: &TransitionSuiteConfig) -> Result<SuiteReport> {
    let r = transition_run(cfg, cfg.y_feasible)?;
    let mut report = SuiteReport::new("feasible");
    let worst_pos = r.errors.iter().map(|e| e[0]).fold(0.0, f64::max);
    let worst_ori = r.errors.iter().map(|e| e[1]).fold(0.0, f64::max);
    report
        .criteria
        .push(CriterionResult::below("max position error over pairs", worst_pos, 1e-3));
    report
        .criteria
        .push(CriterionResult::below("max orientation error over pairs", worst_ori, 1e-3));
    report.tables.push(transition_table(&r));
    Ok(report)
}

// Operational versus configuration space on the planar arm.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpacesSuiteConfig {
    pub robot: String,
    pub n_demos: usize,
    pub k: usize,
    pub seed: u64,
    /// Seed of the held-out object pose used for reproduction.
    pub test_seed: u64,
    pub demos: SpacesConfig,
    pub damping: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SpacesSuiteConfig {
    fn default() -> Self {
        Self {
            robot: "planar3".into(),
            n_demos: 10,
            k: 10,
            seed: 3,
            test_seed: 101,
            demos: SpacesConfig::default(),
            damping: 0.0,
            exec: Execution::Parallel,
        }
    }
}

pub const CONFIG_FRAME: &str = "configuration";
pub const OBJECT_FRAME: &str = "object";

/// Observation frames of a spaces demo step: `[t; q]` and `[t; object-relative pose]`.
fn spaces_frames(demo: &Demonstration, t: usize, nq: usize) -> Result<Vec<TaskFrame>> {
    let d = demo.xi.ncols();
    let mut a_cfg = DMatrix::zeros(d, 1 + nq);
    for i in 0..=nq {
        a_cfg[(i, i)] = 1.0;
    }
    let Some(Pose::Planar { position, angle }) = demo.object.get(t).cloned().flatten() else {
        return invalid("spaces demos need a planar object pose per step");
    };
    let (s, c) = angle.sin_cos();
    let mut a_obj = DMatrix::zeros(d, 4);
    a_obj[(0, 0)] = 1.0;
    a_obj[(1 + nq, 1)] = c;
    a_obj[(1 + nq, 2)] = -s;
    a_obj[(2 + nq, 1)] = s;
    a_obj[(2 + nq, 2)] = c;
    a_obj[(3 + nq, 3)] = 1.0;
    let mut b_obj = DVector::zeros(d);
    b_obj[1 + nq] = position.x;
    b_obj[2 + nq] = position.y;
    b_obj[3 + nq] = angle;
    Ok(vec![
        TaskFrame::new(a_cfg, DVector::zeros(d), CONFIG_FRAME)?,
        TaskFrame::new(a_obj, b_obj, OBJECT_FRAME)?,
    ])
}

/// Trains the two-frame model on generated reach-then-oscillate demos.
pub fn train_spaces(cfg: &SpacesSuiteConfig) -> Result<(TpGmm, EmReport, super::SpacesDemos)> {
    let demos = spaces_demos(cfg)?;
    let (model, report) = fit_spaces(cfg, &demos.demos)?;
    Ok((model, report, demos))
}

pub fn spaces_demos(cfg: &SpacesSuiteConfig) -> Result<super::SpacesDemos> {
    let p = preset(&cfg.robot)?;
    let demo_cfg = SpacesConfig {
        seed: cfg.seed,
        ..cfg.demos.clone()
    };
    generate_spaces_demos(&p.chain, &p.q_init(), &demo_cfg, cfg.n_demos)
}

/// Fits the configuration/object model to spaces demos.
pub fn fit_spaces(cfg: &SpacesSuiteConfig, demos: &[Demonstration]) -> Result<(TpGmm, EmReport)> {
    let nq = preset(&cfg.robot)?.chain.dof();
    let proj = project_to_frames(
        demos,
        |d, t| spaces_frames(d, t, nq),
        ProjectionMode::InverseAffine,
        cfg.exec,
    )?;
    let labels = vec![CONFIG_FRAME.to_string(), OBJECT_FRAME.to_string()];
    tpgmm_fit(&proj.datasets, &labels, &em_options(cfg.k, cfg.seed, cfg.exec))
}

/// Per-step record of a spaces reproduction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacesRun {
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    /// `candidates[j][t]`: joint reference proposed by frame `j` alone.
    pub candidates: Vec<Vec<DVector<f64>>>,
    /// Trace of each candidate's joint-space covariance.
    pub candidate_traces: Vec<Vec<f64>>,
}

/// Reproduces the task for `object` from `q0`: the frames are rebuilt from
/// the previous joint reference at each step.
pub fn reproduce_spaces(
    model: &TpGmm,
    chain: &SerialChain,
    q0: &DVector<f64>,
    object: &Pose,
    times: &[f64],
    damping: f64,
) -> Result<SpacesRun> {
    let nq = chain.dof();
    let mut q = q0.clone();
    let mut run = SpacesRun {
        times: times.to_vec(),
        q: vec![],
        candidates: vec![vec![]; 2],
        candidate_traces: vec![vec![]; 2],
    };
    let outputs: Vec<usize> = (1..=nq).collect();
    for &t in times {
        let ctx = RobotContext::new(q.clone(), TaskState::from_chain(chain, &q, Branch::Main, JacobianKind::Pose)?)
            .with_object(object.clone())
            .with_damping(damping);
        let frames = [op_configuration(nq).with_time(), op_relative_pose(&ctx)?.with_time()];
        let time_in = DVector::from_element(1, t);
        for (j, f) in frames.iter().enumerate() {
            let g = gmr(&model.synthesize_subset(&[(j, f)])?, &[0], &outputs, &time_in)?;
            run.candidate_traces[j].push(g.cov.trace());
            run.candidates[j].push(g.mean);
        }
        let g = gmr(&model.synthesize(&frames)?, &[0], &outputs, &time_in)?;
        q = g.mean;
        run.q.push(q.clone());
    }
    Ok(run)
}

/// Object pose drawn with the test seed and the pre-grasp configuration for it.
pub fn held_out_object(cfg: &SpacesSuiteConfig) -> Result<(Pose, DVector<f64>)> {
    let p = preset(&cfg.robot)?;
    let demo_cfg = SpacesConfig {
        seed: cfg.test_seed,
        ..cfg.demos.clone()
    };
    let d = generate_spaces_demos(&p.chain, &p.q_init(), &demo_cfg, 1)?;
    Ok((d.objects[0].clone(), d.demos[0].q[0].clone()))
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

pub fn spaces_suite(cfg: &SpacesSuiteConfig) -> Result<SuiteReport> {
    let p = preset(&cfg.robot)?;
    let chain = &p.chain;
    let (model, _, demos) = train_spaces(cfg)?;
    let mut report = SuiteReport::new("spaces");
    if cfg.n_demos < 2 {
        report
            .warnings
            .push("a single demonstration has no variability; frame relevance is undetermined".into());
    }
    let dc = &cfg.demos;
    let j = dc.osc_joint;

    // Variability of the demonstrations in each space.
    let k_reach = (dc.reach_end / dc.dt).round() as usize;
    let spread = |f: &dyn Fn(&Demonstration, &Pose, usize) -> Vec<f64>, k: usize| {
        let rows: Vec<Vec<f64>> = demos.demos.iter().zip(&demos.objects).map(|(d, o)| f(d, o, k)).collect();
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
        variances(&m)
    };
    let rel = |d: &Demonstration, o: &Pose, k: usize| {
        let x = &d.x[k];
        relative_planar(o, &[x[0], x[1], x[2]]).to_vec()
    };
    let joint = |d: &Demonstration, _: &Pose, k: usize| vec![d.q[k][j]];
    let rel_reach = spread(&rel, k_reach).into_iter().fold(0.0, f64::max);
    let joint_reach = spread(&joint, k_reach)[0];
    let osc_steps: Vec<usize> = (0..demos.demos[0].len())
        .filter(|&k| demos.demos[0].times[k] > dc.transition_end)
        .collect();
    let joint_osc = osc_steps
        .iter()
        .map(|&k| spread(&joint, k)[0])
        .fold(0.0, f64::max);
    let rel_osc = osc_steps
        .iter()
        .map(|&k| spread(&rel, k).into_iter().fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    report.criteria.extend([
        CriterionResult::below("demo variance: object-relative pose at reach end", rel_reach, 1e-4),
        CriterionResult::at_least(&format!("demo variance: joint {j} at reach end"), joint_reach, 1e-2),
        CriterionResult::below(&format!("demo variance: joint {j} during oscillation"), joint_osc, 1e-4),
        CriterionResult::at_least("demo variance: object-relative pose during oscillation", rel_osc, 1e-2),
    ]);

    // Reproduction for a held-out object.
    let (object, q_start) = held_out_object(cfg)?;
    let times = time_grid(dc.dt, dc.horizon);
    let run = reproduce_spaces(&model, chain, &q_start, &object, &times, cfg.damping)?;
    let ee = |q: &DVector<f64>| -> Result<Vector2<f64>> {
        let v = chain.forward_kinematics(q, Branch::Main)?.to_vector();
        Ok(Vector2::new(v[0], v[1]))
    };
    let mut reach_err = Vec::new();
    let mut osc_err = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        if t <= dc.reach_end {
            reach_err.push((ee(&run.q[k])? - ee(&run.candidates[1][k])?).norm());
        } else if t > dc.transition_end {
            osc_err.push(run.q[k][j] - run.candidates[0][k][j]);
        }
    }
    report.criteria.push(CriterionResult::below(
        &format!("oscillation: joint {j} RMSE to configuration candidate"),
        rmse(osc_err.into_iter()),
        0.05,
    ));
    report.criteria.push(CriterionResult::below(
        "reach: end-effector RMSE to object candidate",
        rmse(reach_err.into_iter()),
        0.01,
    ));
    let reach_end_k = times.iter().position(|&t| t >= dc.reach_end).unwrap_or(0);
    let Pose::Planar { position: grasp, .. } = &object else {
        return invalid("planar object expected");
    };
    report.criteria.push(CriterionResult::below(
        "reach: end-effector distance to the object at grasp time",
        (ee(&run.q[reach_end_k])? - grasp).norm(),
        0.01,
    ));
    let osc_mid_k = times
        .iter()
        .position(|&t| t >= 0.5 * (dc.transition_end + dc.horizon))
        .unwrap_or(times.len() - 1);
    let tr = &run.candidate_traces;
    report.criteria.push(CriterionResult::below(
        "variance order at reach end: object / configuration",
        tr[1][reach_end_k] / tr[0][reach_end_k],
        1.0,
    ));
    report.criteria.push(CriterionResult::below(
        "variance order mid oscillation: configuration / object",
        tr[0][osc_mid_k] / tr[1][osc_mid_k],
        1.0,
    ));

    // Sanity: the held-out grasp pose is reachable.
    let Pose::Planar { position, angle } = &object else {
        return invalid("planar object expected");
    };
    planar_ik(chain, &p.q_init(), &[position.x, position.y, *angle])?;

    report.tables.push(reproduction_table(&run));
    Ok(report)
}

/// `[t, q…, candidate q per frame…, candidate covariance traces…]` per step.
pub fn reproduction_table(run: &SpacesRun) -> Table {
    let nq = run.q.first().map_or(0, |q| q.len());
    let tr = &run.candidate_traces;
    let mut columns = vec!["t".to_string()];
    for name in ["q", "cand_cfg", "cand_obj"] {
        columns.extend((0..nq).map(|i| format!("{name}_{i}")));
    }
    columns.extend(["trace_cfg".to_string(), "trace_obj".to_string()]);
    Table {
        name: "reproduction".into(),
        columns,
        rows: (0..run.times.len())
            .map(|k| {
                std::iter::once(run.times[k])
                    .chain(run.q[k].iter().copied())
                    .chain(run.candidates[0][k].iter().copied())
                    .chain(run.candidates[1][k].iter().copied())
                    .chain([tr[0][k], tr[1][k]])
                    .collect()
            })
            .collect(),
    }
}
