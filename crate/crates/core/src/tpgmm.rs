//! Task-parameterized GMMs: data projected into `P` candidate frames, one EM
//! with shared responsibilities, and synthesis as a product of the
//! frame-transformed components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussians::{fit_views, gaussian_product, gmr, EmOptions, EmReport, Gaussian, Gmm, ProductTerm};
use crate::kinematics::Pose;
use crate::linalg::{pinv_truncated, PINV_RTOL};
use crate::par::{self, Execution};

/// Affine task parameters `(A, b)` mapping a frame-local vector `x` to `Ax + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFrame {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub label: String,
}

impl TaskFrame {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        if a.nrows() != b.len() {
            return invalid(format!("frame A has {} rows but b has {}", a.nrows(), b.len()));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return invalid("frame parameters must be finite");
        }
        Ok(Self {
            a,
            b,
            label: label.into(),
        })
    }

    pub fn identity(dim: usize, label: impl Into<String>) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            label: label.into(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    /// Prepends an unmodulated input dimension (e.g. time):
    /// `A' = blkdiag(1, A)`, `b' = [0; b]`.
    pub fn with_time(&self) -> Self {
        let (r, c) = self.a.shape();
        let mut a = DMatrix::zeros(r + 1, c + 1);
        a[(0, 0)] = 1.0;
        a.view_mut((1, 1), (r, c)).copy_from(&self.a);
        let b = self.b.clone().insert_row(0, 0.0);
        Self {
            a,
            b,
            label: self.label.clone(),
        }
    }

    pub fn apply(&self, g: &Gaussian) -> Result<Gaussian> {
        g.transform(&self.a, &self.b)
    }
}

/// One time-indexed demonstration.
///
/// Context vectors are either empty or hold one entry per timestep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Demonstration {
    pub times: Vec<f64>,
    /// Datapoints `ξ_t`, one per row.
    pub xi: DMatrix<f64>,
    pub q: Vec<DVector<f64>>,
    /// Task-space state (e.g. stacked end-effector poses).
    pub x: Vec<DVector<f64>>,
    /// Per-step task Jacobians, in task order.
    pub jacobians: Vec<Vec<DMatrix<f64>>>,
    pub object: Vec<Option<Pose>>,
}

impl Demonstration {
    pub fn new(times: Vec<f64>, xi: DMatrix<f64>) -> Result<Self> {
        let d = Self {
            times,
            xi,
            ..Default::default()
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.xi.nrows() != n {
            return invalid(format!("demonstration has {n} timestamps but {} datapoints", self.xi.nrows()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("demonstration timestamps must be strictly increasing");
        }
        if !self.xi.iter().all(|v| v.is_finite()) {
            return invalid("demonstration datapoints must be finite");
        }
        for (name, len) in [
            ("q", self.q.len()),
            ("x", self.x.len()),
            ("jacobians", self.jacobians.len()),
            ("object", self.object.len()),
        ] {
            if len != 0 && len != n {
                return invalid(format!("demonstration `{name}` has {len} entries, expected {n}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// `X = A⁻¹(ξ − b)`; the truncated pseudoinverse when `A` is not square
    /// and invertible.
    InverseAffine,
    /// `X = Aξ`, where `A` already includes any left factor such as the
    /// stacked task Jacobian.
    ForwardLinear,
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// One dataset per frame; rows are datapoints of all demos in order.
    pub datasets: Vec<DMatrix<f64>>,
    /// Datapoints where some frame needed the pseudoinverse fallback.
    pub pinv_fallbacks: usize,
}

/// Projects every datapoint of every demo into the `P` frames returned by
/// `builder(demo, t)`.
pub fn project_to_frames<F>(
    demos: &[Demonstration],
    builder: F,
    mode: ProjectionMode,
    exec: Execution,
) -> Result<Projection>
where
    F: Fn(&Demonstration, usize) -> Result<Vec<TaskFrame>> + Sync + Send,
{
    let index: Vec<(usize, usize)> = demos
        .iter()
        .enumerate()
        .flat_map(|(d, demo)| (0..demo.len()).map(move |t| (d, t)))
        .collect();
    if index.is_empty() {
        return invalid("no datapoints to project");
    }
    let rows = par::map_slice(&index, exec, |&(d, t)| -> Result<(Vec<DVector<f64>>, bool)> {
        let demo = &demos[d];
        let xi = demo.xi.row(t).transpose();
        let mut fallback = false;
        let frames = builder(demo, t)?;
        let out = frames
            .iter()
            .map(|f| match mode {
                ProjectionMode::ForwardLinear => {
                    if f.input_dim() != xi.len() {
                        return invalid(format!("frame `{}` expects {} inputs, ξ has {}", f.label, f.input_dim(), xi.len()));
                    }
                    Ok(&f.a * &xi)
                }
                ProjectionMode::InverseAffine => {
                    if f.output_dim() != xi.len() {
                        return invalid(format!("frame `{}` maps to {} dims, ξ has {}", f.label, f.output_dim(), xi.len()));
                    }
                    let rhs = &xi - &f.b;
                    if f.a.is_square() {
                        if let Some(x) = f.a.clone().lu().solve(&rhs) {
                            return Ok(x);
                        }
                    }
                    fallback = true;
                    Ok(pinv_truncated(&f.a, PINV_RTOL) * rhs)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((out, fallback))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let p = rows[0].0.len();
    if p == 0 || rows.iter().any(|(r, _)| r.len() != p) {
        return invalid("frame builder must return the same non-zero number of frames at every step");
    }
    let mut datasets = Vec::with_capacity(p);
    for j in 0..p {
        let dim = rows[0].0[j].len();
        if rows.iter().any(|(r, _)| r[j].len() != dim) {
            return invalid(format!("frame {j} changes dimension between datapoints"));
        }
        datasets.push(DMatrix::from_fn(rows.len(), dim, |t, c| rows[t].0[j][c]));
    }
    Ok(Projection {
        datasets,
        pinv_fallbacks: rows.iter().filter(|(_, f)| *f).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpGmm {
    pub frames: Vec<String>,
    pub priors: Vec<f64>,
    /// `components[i][j]`: component `i` in frame `j`.
    pub components: Vec<Vec<Gaussian>>,
}

/// Joint EM over frame datasets that share their rows.
pub fn tpgmm_fit(
    datasets: &[DMatrix<f64>],
    labels: &[String],
    opts: &EmOptions,
) -> Result<(TpGmm, EmReport)> {
    if labels.len() != datasets.len() {
        return invalid(format!("{} frame labels for {} datasets", labels.len(), datasets.len()));
    }
    let fit = fit_views(datasets, opts)?;
    Ok((
        TpGmm {
            frames: labels.to_vec(),
            priors: fit.priors,
            components: fit.components,
        },
        fit.report,
    ))
}

impl TpGmm {
    pub fn k(&self) -> usize {
        self.priors.len()
    }

    pub fn p(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_index(&self, label: &str) -> Option<usize> {
        self.frames.iter().position(|f| f == label)
    }

    /// The mixture of frame `j` in its own coordinates.
    pub fn frame_model(&self, j: usize) -> Result<Gmm> {
        if j >= self.p() {
            return invalid(format!("frame index {j} out of range ({} frames)", self.p()));
        }
        Gmm::new(
            self.priors.clone(),
            self.components.iter().map(|row| row[j].clone()).collect(),
        )
    }

    /// Product over all frames of the transformed components.
    pub fn synthesize(&self, frames: &[TaskFrame]) -> Result<Gmm> {
        if frames.len() != self.p() {
            return invalid(format!("{} frames given, model has {}", frames.len(), self.p()));
        }
        let all: Vec<(usize, &TaskFrame)> = frames.iter().enumerate().collect();
        self.synthesize_subset(&all)
    }

    /// Product over a subset of frames, e.g. a single one for per-frame
    /// candidates.
    pub fn synthesize_subset(&self, frames: &[(usize, &TaskFrame)]) -> Result<Gmm> {
        if frames.is_empty() {
            return invalid("synthesis needs at least one frame");
        }
        let comps = self
            .components
            .iter()
            .map(|row| {
                let transformed = frames
                    .iter()
                    .map(|&(j, f)| {
                        let g = row.get(j).ok_or_else(|| {
                            crate::Error::InvalidArgument(format!("frame index {j} out of range"))
                        })?;
                        f.apply(g)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let terms: Vec<ProductTerm> = transformed.iter().map(ProductTerm::from).collect();
                gaussian_product(&terms)
            })
            .collect::<Result<Vec<_>>>()?;
        Gmm::new(self.priors.clone(), comps)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TpGmm = serde_json::from_str(text)?;
        if m.components.len() != m.priors.len() || m.components.iter().any(|r| r.len() != m.frames.len()) {
            return invalid("model JSON: components must be K rows of P gaussians");
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub times: Vec<f64>,
    /// Commanded reference at each step.
    pub q: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
}

/// Runs the synthesis loop: at each time the frames are rebuilt from the
/// previous reference, the model is synthesized in the common space, GMR is
/// conditioned on time (common-space dimension 0) and the conditional mean
/// becomes the new reference.
pub fn reproduce<F>(
    model: &TpGmm,
    mut frames_at: F,
    q0: DVector<f64>,
    times: &[f64],
) -> Result<Reproduction>
where
    F: FnMut(f64, &DVector<f64>) -> Result<Vec<TaskFrame>>,
{
    let mut q = q0;
    let mut out = Reproduction {
        times: times.to_vec(),
        q: Vec::with_capacity(times.len()),
        cov: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let frames = frames_at(t, &q)?;
        let gmm = model.synthesize(&frames)?;
        let outputs: Vec<usize> = (1..gmm.dim()).collect();
        if outputs.len() != q.len() {
            return invalid(format!(
                "synthesized space has {} outputs but the reference has {}",
                outputs.len(),
                q.len()
            ));
        }
        let g = gmr(&gmm, &[0], &outputs, &DVector::from_element(1, t))?;
        q = g.mean;
        out.q.push(q.clone());
        out.cov.push(g.cov);
    }
    Ok(out)
}
