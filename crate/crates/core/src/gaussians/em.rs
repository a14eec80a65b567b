//! Expectation-maximization shared by plain GMMs and task-parameterized GMMs.
//!
//! The engine fits `P` views of the same `N` datapoints. Component `i` has one
//! Gaussian per view and the responsibilities are shared across views:
//! `γ_ti ∝ π_i ∏_j N(x_t^(j) | μ_ij, Σ_ij)`. A plain GMM is the `P = 1` case.
//!
//! Covariances are regularized by a conjugate penalty `−(c_j/2)·tr(Σ_ij⁻¹)`
//! with `c_j = N·reg_j`. Its exact M-step is `Σ_ij = S_ij + (c_j/N_i)·I`,
//! which adds exactly `reg_j·I` when `K = 1`, and keeps the penalized
//! objective monotone under EM.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gaussian, Gmm};
use crate::error::{invalid, Error, Result};
use crate::linalg::{add_diagonal, log_sum_exp, symmetrize, trace, CovFactor};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Equal-width bins along the first column of the first view.
    #[default]
    TimeSplit,
    /// Seeded k-means++ on the concatenated views.
    KMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub k: usize,
    pub init: Init,
    pub seed: u64,
    /// Absolute regularizer for every view; `None` derives it per view as
    /// `reg_scale · trace(cov(X))/D`.
    pub reg: Option<f64>,
    pub reg_scale: f64,
    pub max_iter: usize,
    /// Stop once the relative objective improvement falls below this.
    pub tol: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            k: 1,
            init: Init::TimeSplit,
            seed: 0,
            reg: None,
            reg_scale: 1e-6,
            max_iter: 200,
            tol: 1e-6,
            exec: Execution::default(),
        }
    }
}

impl EmOptions {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    /// Penalized log-likelihood at each evaluated parameter set.
    pub objective: Vec<f64>,
    /// Unpenalized data log-likelihood at the same parameter sets.
    pub log_likelihood: Vec<f64>,
    /// Number of M-steps after initialization.
    pub iterations: usize,
    pub converged: bool,
    /// Components re-seeded after losing all responsibility.
    pub reseeded: usize,
    /// Regularizer used for each view.
    pub reg: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub priors: Vec<f64>,
    /// `components[i][j]`: component `i` in view `j`.
    pub components: Vec<Vec<Gaussian>>,
    pub report: EmReport,
}

/// Fits a `K`-component GMM to the rows of `data`.
pub fn em_fit(data: &DMatrix<f64>, opts: &EmOptions) -> Result<(Gmm, EmReport)> {
    let fit = fit_views(std::slice::from_ref(data), opts)?;
    let comps = fit.components.into_iter().map(|mut v| v.remove(0)).collect();
    Ok((Gmm::new(fit.priors, comps)?, fit.report))
}

struct Params {
    priors: Vec<f64>,
    comps: Vec<Vec<Gaussian>>,
}

/// Multi-view EM over datasets sharing their row count.
pub(crate) fn fit_views(views: &[DMatrix<f64>], opts: &EmOptions) -> Result<EmFit> {
    let Some(first) = views.first() else {
        return invalid("EM needs at least one view");
    };
    let n = first.nrows();
    let k = opts.k;
    if k == 0 {
        return invalid("EM needs K >= 1");
    }
    if n < k {
        return invalid(format!("EM needs at least K datapoints: N = {n}, K = {k}"));
    }
    for (j, v) in views.iter().enumerate() {
        if v.nrows() != n {
            return invalid(format!("view {j} has {} rows, expected {n}", v.nrows()));
        }
        if v.ncols() == 0 {
            return invalid(format!("view {j} has no columns"));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return invalid(format!("view {j} contains non-finite values"));
        }
    }
    if !(opts.tol >= 0.0) {
        return invalid("EM tolerance must be non-negative");
    }
    let regs: Vec<f64> = views
        .iter()
        .map(|v| match opts.reg {
            Some(r) => r,
            None => auto_reg(v, opts.reg_scale),
        })
        .collect();
    if regs.iter().any(|r| !(*r >= 0.0)) {
        return invalid("EM regularizer must be non-negative");
    }

    let labels = match opts.init {
        Init::TimeSplit => time_split(&views[0], k),
        Init::KMeans => kmeans(views, k, opts.seed),
    };
    let mut resp = DMatrix::zeros(n, k);
    for (t, &l) in labels.iter().enumerate() {
        resp[(t, l)] = 1.0;
    }
    let mut reseeded = 0;
    let init_scores = hard_assignment_scores(views, &labels, k);
    let mut params = m_step(views, &resp, &regs, &init_scores, opts.exec, &mut reseeded);

    let mut objective = Vec::new();
    let mut log_likelihood = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (rows, lse) = e_step(views, &params, &regs, opts.exec)?;
        let ll: f64 = lse.iter().sum();
        let obj = ll - penalty(&params, &regs, n);
        if !obj.is_finite() {
            return Err(Error::InvalidArgument(
                "EM objective became non-finite; increase reg".into(),
            ));
        }
        let prev = objective.last().copied();
        objective.push(obj);
        log_likelihood.push(ll);
        if let Some(p) = prev {
            if obj - p < opts.tol * p.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if iterations == opts.max_iter {
            break;
        }
        for t in 0..n {
            for i in 0..k {
                resp[(t, i)] = (rows[t][i] - lse[t]).exp();
            }
        }
        params = m_step(views, &resp, &regs, &lse, opts.exec, &mut reseeded);
        iterations += 1;
    }
    Ok(EmFit {
        priors: params.priors,
        components: params.comps,
        report: EmReport {
            objective,
            log_likelihood,
            iterations,
            converged,
            reseeded,
            reg: regs,
        },
    })
}

pub(crate) fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let mut s = c.transpose() * &c / n;
    symmetrize(&mut s);
    s
}

fn auto_reg(x: &DMatrix<f64>, scale: f64) -> f64 {
    let r = scale * trace(&sample_cov(x)) / x.ncols() as f64;
    if r > 0.0 {
        r
    } else {
        scale
    }
}

fn time_split(x: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = x.nrows();
    let col = x.column(0);
    let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    if !(hi > lo) {
        return (0..n).map(|t| t * k / n).collect();
    }
    col.iter()
        .map(|&v| (((v - lo) / (hi - lo) * k as f64) as usize).min(k - 1))
        .collect()
}

fn concat_row(views: &[DMatrix<f64>], t: usize) -> DVector<f64> {
    DVector::from_iterator(
        views.iter().map(|v| v.ncols()).sum(),
        views.iter().flat_map(|v| v.row(t).iter().cloned().collect::<Vec<_>>()),
    )
}

fn kmeans(views: &[DMatrix<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = views[0].nrows();
    let pts: Vec<DVector<f64>> = (0..n).map(|t| concat_row(views, t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![pts[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = pts.iter().map(|p| (p - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (t, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = t;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(pts[idx].clone());
        for (t, p) in pts.iter().enumerate() {
            d2[t] = d2[t].min((p - &centers[centers.len() - 1]).norm_squared());
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (t, p) in pts.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    (p - &centers[a])
                        .norm_squared()
                        .total_cmp(&(p - &centers[b]).norm_squared())
                })
                .unwrap_or(0);
            if labels[t] != best {
                labels[t] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (i, c) in centers.iter_mut().enumerate() {
            let members: Vec<_> = (0..n).filter(|&t| labels[t] == i).collect();
            if !members.is_empty() {
                *c = members.iter().fold(DVector::zeros(c.len()), |acc, &t| acc + &pts[t])
                    / members.len() as f64;
            }
        }
    }
    labels
}

/// Score per datapoint used to pick re-seed locations before the first
/// E-step: negative squared distance to the mean of its own cluster.
fn hard_assignment_scores(views: &[DMatrix<f64>], labels: &[usize], k: usize) -> Vec<f64> {
    let n = labels.len();
    let pts: Vec<DVector<f64>> = (0..n).map(|t| concat_row(views, t)).collect();
    let dim = pts[0].len();
    let mut sums = vec![DVector::zeros(dim); k];
    let mut counts = vec![0usize; k];
    for (t, &l) in labels.iter().enumerate() {
        sums[l] += &pts[t];
        counts[l] += 1;
    }
    labels
        .iter()
        .enumerate()
        .map(|(t, &l)| -(&pts[t] - &sums[l] / counts[l] as f64).norm_squared())
        .collect()
}

fn m_step(
    views: &[DMatrix<f64>],
    resp: &DMatrix<f64>,
    regs: &[f64],
    scores: &[f64],
    exec: Execution,
    reseeded: &mut usize,
) -> Params {
    let n = resp.nrows();
    let k = resp.ncols();
    let p = views.len();
    let nk: Vec<f64> = (0..k).map(|i| resp.column(i).iter().sum()).collect();
    let empty_tol = 1e-10 * n as f64;

    let cells = par::map_indexed(k * p, exec, |cell| {
        let (i, j) = (cell / p, cell % p);
        if nk[i] <= empty_tol {
            return None;
        }
        let x = &views[j];
        let g = resp.column(i);
        let mean = x.transpose() * g / nk[i];
        let mut c = x.clone();
        for (t, mut r) in c.row_iter_mut().enumerate() {
            r -= mean.transpose();
            r *= g[t].sqrt();
        }
        let mut cov = c.transpose() * &c / nk[i];
        add_diagonal(&mut cov, n as f64 * regs[j] / nk[i]);
        symmetrize(&mut cov);
        Some(Gaussian { mean, cov })
    });

    let mut priors: Vec<f64> = nk.iter().map(|&v| v / n as f64).collect();
    let mut comps: Vec<Vec<Gaussian>> = Vec::with_capacity(k);
    let mut used = Vec::new();
    let mut cells = cells.into_iter();
    for i in 0..k {
        let row: Vec<Option<Gaussian>> = (0..p).map(|_| cells.next().flatten()).collect();
        if row.iter().all(|c| c.is_some()) {
            comps.push(row.into_iter().flatten().collect());
            continue;
        }
        // Lowest-scoring datapoint not already used for a re-seed.
        let t = (0..n)
            .filter(|t| !used.contains(t))
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap_or(0);
        used.push(t);
        *reseeded += 1;
        comps.push(
            views
                .iter()
                .zip(regs)
                .map(|(x, &r)| {
                    let mut cov = sample_cov(x);
                    add_diagonal(&mut cov, r.max(f64::MIN_POSITIVE));
                    Gaussian {
                        mean: x.row(t).transpose(),
                        cov,
                    }
                })
                .collect(),
        );
        priors[i] = 1.0 / n as f64;
    }
    let total: f64 = priors.iter().sum();
    for v in &mut priors {
        *v /= total;
    }
    Params { priors, comps }
}

/// Per-datapoint log joint `ln π_i + Σ_j ln N(x_t^(j))` and its log-sum-exp.
fn e_step(
    views: &[DMatrix<f64>],
    params: &Params,
    regs: &[f64],
    exec: Execution,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let factors: Vec<Vec<CovFactor>> = params
        .comps
        .iter()
        .map(|row| {
            row.iter()
                .zip(regs)
                .map(|(g, &r)| {
                    CovFactor::new(&g.cov, r.max(1e-300)).ok_or_else(|| {
                        Error::InvalidArgument("component covariance is singular; increase reg".into())
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let log_priors: Vec<f64> = params.priors.iter().map(|p| p.ln()).collect();
    let n = views[0].nrows();
    let out = par::map_indexed(n, exec, |t| {
        let row: Vec<f64> = (0..log_priors.len())
            .map(|i| {
                log_priors[i]
                    + views
                        .iter()
                        .enumerate()
                        .map(|(j, x)| {
                            let d = x.row(t).transpose() - &params.comps[i][j].mean;
                            factors[i][j].log_density(&d)
                        })
                        .sum::<f64>()
            })
            .collect();
        let l = log_sum_exp(&row);
        (row, l)
    });
    Ok(out.into_iter().unzip())
}

fn penalty(params: &Params, regs: &[f64], n: usize) -> f64 {
    params
        .comps
        .iter()
        .flat_map(|row| row.iter().zip(regs))
        .map(|(g, &r)| {
            if r == 0.0 {
                return 0.0;
            }
            let inv_trace = g
                .cov
                .clone()
                .cholesky()
                .map(|c| trace(&c.inverse()))
                .unwrap_or(f64::INFINITY);
            0.5 * n as f64 * r * inv_trace
        })
        .sum()
}
