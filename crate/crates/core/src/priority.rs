//! Candidate strict hierarchies, projection of demonstrations through them,
//! learned precision matrices, and the controller that softly weights the
//! candidate hierarchies.
//!
//! A demonstration for priority learning stores `ξ_t = [t; ẋ_1; …; ẋ_NT]`,
//! the time followed by the stacked desired task velocities `ẋ_k = K_p·e_k`.
//! Candidate `j` observes `[t; J̄_t A_t^(j) ẋ_t]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussians::{gmr, EmOptions, EmReport, Gmm};
use crate::kinematics::{hierarchy_operator, wrap_angle, Branch, JacobianKind, Pose, SerialChain};
use crate::linalg::{add_diagonal, pinv_truncated, trace, PINV_RTOL};
use crate::par::{self, Execution};
use crate::quat::UnitQuaternion;
use crate::tpgmm::{project_to_frames, tpgmm_fit, Demonstration, Projection, ProjectionMode, TaskFrame, TpGmm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TaskKind {
    /// End-effector position (2 or 3 rows).
    Position,
    /// One position coordinate.
    PositionAxis { axis: usize },
    /// Planar angle (1 row) or spatial orientation (3 rows; references are
    /// quaternions `[w, x, y, z]`).
    Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub label: String,
    #[serde(default)]
    pub branch: Branch,
    pub kind: TaskKind,
}

impl Task {
    pub fn new(label: impl Into<String>, branch: Branch, kind: TaskKind) -> Self {
        Self {
            label: label.into(),
            branch,
            kind,
        }
    }

    pub fn dim(&self, chain: &SerialChain) -> usize {
        match self.kind {
            TaskKind::Position => chain.position_dim(),
            TaskKind::PositionAxis { .. } => 1,
            TaskKind::Orientation => chain.orientation_dim(),
        }
    }

    /// Length of a reference value for this task.
    pub fn reference_dim(&self, chain: &SerialChain) -> usize {
        match (self.kind, chain.is_planar()) {
            (TaskKind::Orientation, false) => 4,
            _ => self.dim(chain),
        }
    }

    pub fn jacobian(&self, chain: &SerialChain, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pd = chain.position_dim();
        match self.kind {
            TaskKind::Position => Ok(chain.geometric_jacobian(q, self.branch, JacobianKind::Position)?.matrix),
            TaskKind::PositionAxis { axis } => {
                if axis >= pd {
                    return invalid(format!("task `{}`: axis {axis} out of range", self.label));
                }
                let j = chain.geometric_jacobian(q, self.branch, JacobianKind::Position)?.matrix;
                Ok(j.rows(axis, 1).into_owned())
            }
            TaskKind::Orientation => Ok(chain.geometric_jacobian(q, self.branch, JacobianKind::Orientation)?.matrix),
        }
    }

    /// Current task value in reference coordinates.
    pub fn value(&self, chain: &SerialChain, q: &DVector<f64>) -> Result<DVector<f64>> {
        let pose = chain.forward_kinematics(q, self.branch)?;
        Ok(match (self.kind, pose) {
            (TaskKind::Position, p) => p.position(),
            (TaskKind::PositionAxis { axis }, p) => {
                let pos = p.position();
                if axis >= pos.len() {
                    return invalid(format!("task `{}`: axis {axis} out of range", self.label));
                }
                DVector::from_element(1, pos[axis])
            }
            (TaskKind::Orientation, Pose::Planar { angle, .. }) => DVector::from_element(1, angle),
            (TaskKind::Orientation, Pose::Spatial { orientation, .. }) => {
                DVector::from_column_slice(orientation.coords().as_slice())
            }
        })
    }

    /// `reference − current`, with planar angles wrapped and spatial
    /// orientation errors taken as `vec(ε_ref * ε̄)` on the shortest arc.
    pub fn error(&self, chain: &SerialChain, q: &DVector<f64>, reference: &DVector<f64>) -> Result<DVector<f64>> {
        if reference.len() != self.reference_dim(chain) {
            return invalid(format!(
                "task `{}` expects a {}-entry reference, got {}",
                self.label,
                self.reference_dim(chain),
                reference.len()
            ));
        }
        let cur = self.value(chain, q)?;
        Ok(match (self.kind, chain.is_planar()) {
            (TaskKind::Orientation, true) => DVector::from_element(1, wrap_angle(reference[0] - cur[0])),
            (TaskKind::Orientation, false) => {
                let r = UnitQuaternion::new(reference[0], reference[1], reference[2], reference[3]);
                let c = UnitQuaternion::new(cur[0], cur[1], cur[2], cur[3]);
                let rel = r.multiply(&c.conjugate()).canonical();
                DVector::from_column_slice(rel.u.as_slice())
            }
            _ => reference - cur,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub label: String,
    /// Task indices, highest priority first.
    pub order: Vec<usize>,
}

impl Hierarchy {
    pub fn new(label: impl Into<String>, order: Vec<usize>) -> Self {
        Self {
            label: label.into(),
            order,
        }
    }
}

pub fn task_jacobians(chain: &SerialChain, tasks: &[Task], q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    tasks.iter().map(|t| t.jacobian(chain, q)).collect()
}

/// Rows of all task Jacobians stacked in task order.
pub fn stack_jacobians(jacobians: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = jacobians.first() else {
        return invalid("no task Jacobians");
    };
    let nq = first.ncols();
    let rows: usize = jacobians.iter().map(|j| j.nrows()).sum();
    let mut out = DMatrix::zeros(rows, nq);
    let mut r = 0;
    for j in jacobians {
        if j.ncols() != nq {
            return invalid("task Jacobians disagree on joint count");
        }
        out.view_mut((r, 0), j.shape()).copy_from(j);
        r += j.nrows();
    }
    Ok(out)
}

/// `A^(j)` for hierarchy `h`: `[J_1†, N_1 J_2†, …]` in priority order, with
/// each block in its task's column slot.
pub fn hierarchy_matrix(jacobians: &[DMatrix<f64>], h: &Hierarchy, damping: f64) -> Result<DMatrix<f64>> {
    hierarchy_operator(jacobians, &h.order, damping)
}

/// Frame that maps `[t; ξ]` to `[t; J̄ A ξ]`.
pub fn projection_frame(jacobians: &[DMatrix<f64>], h: &Hierarchy, damping: f64) -> Result<TaskFrame> {
    let a = hierarchy_matrix(jacobians, h, damping)?;
    let jbar = stack_jacobians(jacobians)?;
    let m = jbar.nrows();
    TaskFrame::new(jbar * a, DVector::zeros(m), h.label.clone()).map(|f| f.with_time())
}

/// Projects priority demonstrations (time in `ξ` column 0, recorded
/// Jacobians per step) through every candidate hierarchy.
pub fn project_demo(
    demos: &[Demonstration],
    hierarchies: &[Hierarchy],
    damping: f64,
    exec: Execution,
) -> Result<Projection> {
    if hierarchies.is_empty() {
        return invalid("no candidate hierarchies");
    }
    for (d, demo) in demos.iter().enumerate() {
        if demo.jacobians.len() != demo.len() {
            return invalid(format!("demonstration {d} has no recorded Jacobians"));
        }
    }
    project_to_frames(
        demos,
        |demo, t| {
            hierarchies
                .iter()
                .map(|h| projection_frame(&demo.jacobians[t], h, damping))
                .collect()
        },
        ProjectionMode::ForwardLinear,
        exec,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityModel {
    pub tasks: Vec<Task>,
    pub hierarchies: Vec<Hierarchy>,
    /// Frames are over `[t; X^(j)]`.
    pub model: TpGmm,
    /// Relative regularizer for `Γ^(j)`.
    #[serde(default = "default_precision_reg")]
    pub precision_reg: f64,
    #[serde(skip)]
    frame_models: Vec<Gmm>,
}

fn default_precision_reg() -> f64 {
    1e-8
}

impl PriorityModel {
    pub fn new(tasks: Vec<Task>, hierarchies: Vec<Hierarchy>, model: TpGmm) -> Result<Self> {
        if model.p() != hierarchies.len() {
            return invalid(format!(
                "model has {} frames for {} hierarchies",
                model.p(),
                hierarchies.len()
            ));
        }
        let mut m = Self {
            tasks,
            hierarchies,
            model,
            precision_reg: default_precision_reg(),
            frame_models: Vec::new(),
        };
        m.rebuild_cache()?;
        Ok(m)
    }

    fn rebuild_cache(&mut self) -> Result<()> {
        self.frame_models = (0..self.model.p())
            .map(|j| self.model.frame_model(j))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn frame_model(&self, j: usize) -> &Gmm {
        &self.frame_models[j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: PriorityModel = serde_json::from_str(text)?;
        if m.model.p() != m.hierarchies.len() {
            return invalid("model frames and hierarchies disagree");
        }
        m.rebuild_cache()?;
        Ok(m)
    }

    /// GMR of frame `j` on time: `X^(j) | t`.
    pub fn conditional(&self, j: usize, t: f64) -> Result<crate::gaussians::Gaussian> {
        let g = self.frame_model(j);
        let outs: Vec<usize> = (1..g.dim()).collect();
        gmr(g, &[0], &outs, &DVector::from_element(1, t))
    }
}

/// Fits a time-indexed TP-GMM with one frame per candidate hierarchy.
pub fn fit_priority_model(
    demos: &[Demonstration],
    tasks: Vec<Task>,
    hierarchies: Vec<Hierarchy>,
    damping: f64,
    opts: &EmOptions,
) -> Result<(PriorityModel, EmReport, Projection)> {
    let proj = project_demo(demos, &hierarchies, damping, opts.exec)?;
    let labels: Vec<String> = hierarchies.iter().map(|h| h.label.clone()).collect();
    let (tp, report) = tpgmm_fit(&proj.datasets, &labels, opts)?;
    Ok((PriorityModel::new(tasks, hierarchies, tp)?, report, proj))
}

/// `Γ = (A Σ Aᵀ + reg·I)⁻¹` with `reg = rel_reg·trace(AΣAᵀ)/N_q`. The flag
/// reports a rank-deficient `A`, for which the regularizer is what makes the
/// inverse exist.
pub fn precision_from_covariance(a: &DMatrix<f64>, sigma: &DMatrix<f64>, rel_reg: f64) -> Result<(DMatrix<f64>, bool)> {
    if a.ncols() != sigma.nrows() || !sigma.is_square() {
        return invalid(format!(
            "precision: A is {}x{}, Σ is {}x{}",
            a.nrows(),
            a.ncols(),
            sigma.nrows(),
            sigma.ncols()
        ));
    }
    let nq = a.nrows();
    let mut m = a * sigma * a.transpose();
    let reg = (rel_reg * trace(&m) / nq as f64).max(f64::MIN_POSITIVE);
    add_diagonal(&mut m, reg);
    let flagged = crate::linalg::rank(a, PINV_RTOL) < nq;
    let gamma = match m.clone().cholesky() {
        Some(c) => c.inverse(),
        None => pinv_truncated(&m, PINV_RTOL),
    };
    Ok((gamma, flagged))
}

/// `Γ^(j)` at time `t` for the current hierarchy matrix `A^(j)`.
pub fn hierarchy_precision(model: &PriorityModel, t: f64, j: usize, a: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if j >= model.hierarchies.len() {
        return invalid(format!("hierarchy index {j} out of range"));
    }
    let g = model.conditional(j, t)?;
    precision_from_covariance(a, &g.cov, model.precision_reg)
}

/// `q̇ = (Σ Γ_j)⁻¹ Σ Γ_j q̇_j`. The flag reports that the summed precision
/// needed regularization.
pub fn soft_weighted_step(candidates: &[(DVector<f64>, DMatrix<f64>)]) -> Result<(DVector<f64>, bool)> {
    let Some((q0, _)) = candidates.first() else {
        return invalid("soft weighting needs at least one candidate");
    };
    let n = q0.len();
    let mut lambda = DMatrix::zeros(n, n);
    let mut eta = DVector::zeros(n);
    for (q, g) in candidates {
        if q.len() != n || g.shape() != (n, n) {
            return invalid("candidate dimensions disagree");
        }
        eta += g * q;
        lambda += g;
    }
    if let Some(c) = lambda.clone().cholesky() {
        return Ok((c.solve(&eta), false));
    }
    let reg = (1e-12 * trace(&lambda) / n as f64).max(f64::MIN_POSITIVE);
    add_diagonal(&mut lambda, reg);
    let q = match lambda.clone().cholesky() {
        Some(c) => c.solve(&eta),
        None => pinv_truncated(&lambda, PINV_RTOL) * eta,
    };
    Ok((q, true))
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    Learned(Box<PriorityModel>),
    /// `Γ^(j) = w_j·I`.
    Manual(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// `q̇^(j) = A^(j) ẋ`.
    #[default]
    Direct,
    /// `q̇^(j) = A^(j)(μ^(j) + ẋ)`, with `μ^(j)` the frame's expected velocity
    /// at `t` and `ẋ` the current offsets to the references.
    ObjectTracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityController {
    pub tasks: Vec<Task>,
    pub hierarchies: Vec<Hierarchy>,
    pub weights: WeightSource,
    pub mode: CandidateMode,
    pub gain: f64,
    pub damping: f64,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub qdot: DVector<f64>,
    /// Per-task error vectors at the current configuration.
    pub errors: Vec<DVector<f64>>,
    /// `tr(Γ^(j))` per candidate.
    pub weight_traces: Vec<f64>,
    pub flagged: bool,
}

impl PriorityController {
    pub fn learned(model: PriorityModel, damping: f64) -> Self {
        Self {
            tasks: model.tasks.clone(),
            hierarchies: model.hierarchies.clone(),
            weights: WeightSource::Learned(Box::new(model)),
            mode: CandidateMode::Direct,
            gain: 1.0,
            damping,
            exec: Execution::Sequential,
        }
    }

    pub fn manual(tasks: Vec<Task>, hierarchies: Vec<Hierarchy>, weights: Vec<f64>, damping: f64) -> Self {
        Self {
            tasks,
            hierarchies,
            weights: WeightSource::Manual(weights),
            mode: CandidateMode::Direct,
            gain: 1.0,
            damping,
            exec: Execution::Sequential,
        }
    }

    pub fn step(&self, chain: &SerialChain, q: &DVector<f64>, t: f64, references: &[DVector<f64>]) -> Result<StepResult> {
        if references.len() != self.tasks.len() {
            return invalid(format!("{} references for {} tasks", references.len(), self.tasks.len()));
        }
        let jacs = task_jacobians(chain, &self.tasks, q)?;
        let errors = self
            .tasks
            .iter()
            .zip(references)
            .map(|(task, r)| task.error(chain, q, r))
            .collect::<Result<Vec<_>>>()?;
        let m: usize = errors.iter().map(|e| e.len()).sum();
        let xdot = DVector::from_iterator(m, errors.iter().flat_map(|e| e.iter().map(|v| v * self.gain)));
        let nq = q.len();
        if let WeightSource::Manual(w) = &self.weights {
            if w.len() != self.hierarchies.len() {
                return invalid(format!("{} weights for {} hierarchies", w.len(), self.hierarchies.len()));
            }
        }
        let per = par::map_indexed(self.hierarchies.len(), self.exec, |j| -> Result<_> {
            let a = hierarchy_matrix(&jacs, &self.hierarchies[j], self.damping)?;
            let (gamma, flagged, mu) = match &self.weights {
                WeightSource::Manual(w) => (DMatrix::identity(nq, nq) * w[j], false, None),
                WeightSource::Learned(model) => {
                    let (g, f) = hierarchy_precision(model, t, j, &a)?;
                    let mu = match self.mode {
                        CandidateMode::Direct => None,
                        CandidateMode::ObjectTracking => Some(model.conditional(j, t)?.mean),
                    };
                    (g, f, mu)
                }
            };
            let input = match mu {
                Some(mu) if mu.len() == m => mu + &xdot,
                Some(_) => return Err(Error::InvalidArgument("model velocity dimension mismatch".into())),
                None => xdot.clone(),
            };
            Ok((a * input, gamma, flagged))
        });
        let per = per.into_iter().collect::<Result<Vec<_>>>()?;
        let weight_traces = per.iter().map(|(_, g, _)| trace(g)).collect();
        let flagged_any = per.iter().any(|(_, _, f)| *f);
        let cands: Vec<_> = per.into_iter().map(|(q, g, _)| (q, g)).collect();
        let (qdot, reg_flag) = soft_weighted_step(&cands)?;
        Ok(StepResult {
            qdot,
            errors,
            weight_traces,
            flagged: flagged_any || reg_flag,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriorityTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    /// Per step, per task error norm.
    pub errors: Vec<Vec<f64>>,
    pub weight_traces: Vec<Vec<f64>>,
    pub flagged_steps: usize,
}

impl PriorityTrajectory {
    pub fn last_errors(&self) -> &[f64] {
        self.errors.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn final_q(&self) -> Option<&DVector<f64>> {
        self.q.last()
    }
}

/// Runs the soft-weighted controller for `steps` steps of size `dt`,
/// starting at time `t0`, integrating `q ← q + q̇·dt`. The record holds the
/// state at every step plus the final state.
pub fn synthesize_priority<R>(
    controller: &PriorityController,
    chain: &SerialChain,
    q0: &DVector<f64>,
    references: R,
    t0: f64,
    dt: f64,
    steps: usize,
) -> Result<PriorityTrajectory>
where
    R: Fn(f64) -> Vec<DVector<f64>>,
{
    if !(dt > 0.0) {
        return invalid("dt must be positive");
    }
    let mut q = q0.clone();
    let mut traj = PriorityTrajectory::default();
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        let refs = references(t);
        let r = controller.step(chain, &q, t, &refs)?;
        traj.times.push(t);
        traj.q.push(q.clone());
        traj.errors.push(r.errors.iter().map(|e| e.norm()).collect());
        traj.weight_traces.push(r.weight_traces);
        if r.flagged {
            traj.flagged_steps += 1;
        }
        if k < steps {
            q += r.qdot * dt;
            if !q.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!("joint state diverged at t = {t}")));
            }
        }
    }
    Ok(traj)
}
