use nalgebra::{DMatrix, DVector};

use super::{Gaussian, Gmm};
use crate::error::{invalid, Result};
use crate::linalg::{log_sum_exp, symmetrize, trace, CovFactor};

/// Conditional distribution of `output_dims` given `x_in` on `input_dims`,
/// moment-matched to a single Gaussian (law of total variance).
///
/// An input block that is not positive definite is inverted after adding
/// `1e-10·(trace/d)·I`.
pub fn gmr(
    model: &Gmm,
    input_dims: &[usize],
    output_dims: &[usize],
    x_in: &DVector<f64>,
) -> Result<Gaussian> {
    let d = model.dim();
    if input_dims.is_empty() || output_dims.is_empty() {
        return invalid("gmr needs non-empty input and output dimensions");
    }
    if x_in.len() != input_dims.len() {
        return invalid(format!(
            "gmr input has {} entries for {} input dimensions",
            x_in.len(),
            input_dims.len()
        ));
    }
    let mut seen = vec![false; d];
    for &i in input_dims.iter().chain(output_dims) {
        if i >= d || seen[i] {
            return invalid(format!("gmr dimensions must be distinct and below {d}"));
        }
        seen[i] = true;
    }

    let sub = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| {
        DMatrix::from_fn(r.len(), c.len(), |a, b| m[(r[a], c[b])])
    };
    let pick = |v: &DVector<f64>, ix: &[usize]| DVector::from_iterator(ix.len(), ix.iter().map(|&i| v[i]));

    let mut log_w = Vec::with_capacity(model.k());
    let mut cond = Vec::with_capacity(model.k());
    for (prior, g) in model.priors.iter().zip(&model.components) {
        let s_ii = sub(&g.cov, input_dims, input_dims);
        let s_oi = sub(&g.cov, output_dims, input_dims);
        let s_oo = sub(&g.cov, output_dims, output_dims);
        let reg = 1e-10 * (trace(&s_ii) / input_dims.len() as f64).max(f64::MIN_POSITIVE);
        let f = CovFactor::new(&s_ii, reg)
            .ok_or_else(|| crate::Error::InvalidArgument("gmr input covariance is degenerate".into()))?;
        let diff = x_in - pick(&g.mean, input_dims);
        log_w.push(prior.ln() + f.log_density(&diff));
        let gain = f.solve(&s_oi.transpose()).transpose();
        let mean = pick(&g.mean, output_dims) + &gain * diff;
        let cov = s_oo - &gain * s_oi.transpose();
        cond.push((mean, cov));
    }
    let lse = log_sum_exp(&log_w);
    let h: Vec<f64> = if lse.is_finite() {
        log_w.iter().map(|l| (l - lse).exp()).collect()
    } else {
        // Input far from every component: fall back to the priors.
        model.priors.clone()
    };
    let m = output_dims.len();
    let mut mean = DVector::zeros(m);
    for (w, (mu, _)) in h.iter().zip(&cond) {
        mean += *w * mu;
    }
    let mut cov = DMatrix::zeros(m, m);
    for (w, (mu, s)) in h.iter().zip(&cond) {
        let dm = mu - &mean;
        cov += *w * (s + &dm * dm.transpose());
    }
    symmetrize(&mut cov);
    Ok(Gaussian { mean, cov })
}
