//! Dense linear-algebra helpers shared by the kinematic and statistical code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative singular-value cutoff used by every undamped pseudoinverse.
pub const PINV_RTOL: f64 = 1e-8;

/// Thin SVD `M = U diag(s) Vᵀ` by one-sided Jacobi rotations.
///
/// nalgebra's bidiagonal SVD can return factors that do not reconstruct
/// rank-deficient inputs (errors of order 1e-2 were observed on exactly
/// rank-3 4×5 matrices), which breaks every Penrose condition downstream.
/// One-sided Jacobi is exact in that case and accurate to a few ulps for the
/// small matrices used here. Singular values are not sorted.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    if r < c {
        let t = svd(&m.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut u = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s = DVector::from_iterator(c, u.column_iter().map(|col| col.norm()));
    for (k, &sk) in s.iter().enumerate() {
        if sk > 0.0 {
            u.column_mut(k).unscale_mut(sk);
        }
    }
    Svd { u, s, v }
}

/// Moore–Penrose pseudoinverse, singular values below `rtol * σ_max` dropped.
pub fn pinv_truncated(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let Svd { u, s, v } = svd(m);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return DMatrix::zeros(c, r);
    }
    let cutoff = rtol * smax;
    let mut out = DMatrix::zeros(c, r);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff {
            // out += v_k u_kᵀ / s_k
            out.ger(1.0 / sk, &v.column(k), &u.column(k), 1.0);
        }
    }
    out
}

/// Number of singular values above `rtol * σ_max`.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = svd(m).s;
    let smax = s.max();
    s.iter().filter(|&&v| v > rtol * smax).count()
}

/// Damped least-squares inverse `Mᵀ (M Mᵀ + λ² I)⁻¹`.
pub fn pinv_damped(m: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let mut g = m * m.transpose();
    for i in 0..r {
        g[(i, i)] += damping * damping;
    }
    match g.clone().cholesky() {
        Some(ch) => {
            // (M Mᵀ + λ²I)⁻¹ M  then transpose
            let x = ch.solve(m);
            x.transpose()
        }
        None => m.transpose() * pinv_truncated(&g, PINV_RTOL),
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn add_diagonal(m: &mut DMatrix<f64>, value: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += value;
    }
}

/// Cached factorization of a covariance matrix for density evaluation.
#[derive(Clone)]
pub struct CovFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl CovFactor {
    /// Factorizes `cov`, adding `fallback_reg · I` if it is not positive
    /// definite as given.
    pub fn new(cov: &DMatrix<f64>, fallback_reg: f64) -> Option<Self> {
        let chol = cov.clone().cholesky().or_else(|| {
            let mut r = cov.clone();
            add_diagonal(&mut r, fallback_reg);
            r.cholesky()
        })?;
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        Some(Self { chol, log_det })
    }

    /// Squared Mahalanobis norm of `d`.
    pub fn mahalanobis(&self, d: &DVector<f64>) -> f64 {
        // ‖L⁻¹ d‖²
        let mut y = d.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    pub fn log_density(&self, d: &DVector<f64>) -> f64 {
        let dim = d.len() as f64;
        -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + self.log_det + self.mahalanobis(d))
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn svd_reconstructs_rank_deficient_wide_matrix() {
        // Exactly rank 3; nalgebra's SVD misses it by 7e-2.
        let m = DMatrix::from_column_slice(
            4,
            5,
            &[
                1.942879218959976, -0.17067053183857883, -2.645270781753228, -0.0619316920641268,
                -1.456378847046131, 0.6639651147027568, -1.2310491951427416, -2.1589781078241157,
                0.5697637379946174, 0.4471156278246832, -0.5145233429542629, 0.4558201274597742,
                -0.4745462766330306, 1.7487538553798478, 0.7798753927216281, 1.0495340313304866,
                -0.680058825107384, -1.11706405813426, -0.7306078435754018, -1.9070427156906216,
            ],
        );
        let Svd { u, s, v } = svd(&m);
        let back = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((back - &m).norm() < 1e-13);
        assert_eq!(rank(&m, PINV_RTOL), 3);
        let p = pinv_truncated(&m, PINV_RTOL);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        let pm = &p * &m;
        assert!((pm.transpose() - &pm).norm() < 1e-12);
    }

    #[test]
    fn svd_orthonormal_factors() {
        let m = DMatrix::from_fn(6, 3, |r, c| ((r * 3 + c) as f64).sin());
        let Svd { u, s, v } = svd(&m);
        assert!((u.transpose() * &u - DMatrix::identity(3, 3)).norm() < 1e-13);
        assert!((v.transpose() * &v - DMatrix::identity(3, 3)).norm() < 1e-13);
        assert!((&u * DMatrix::from_diagonal(&s) * v.transpose() - &m).norm() < 1e-13);
    }

    #[test]
    fn damped_pinv_of_identity() {
        let p = pinv_damped(&DMatrix::identity(2, 2), 0.1);
        assert_relative_eq!(p[(0, 0)], 1.0 / 1.01, epsilon = 1e-14);
    }

    #[test]
    fn log_density_standard_normal() {
        let f = CovFactor::new(&DMatrix::identity(1, 1), 0.0).unwrap();
        let v = f.log_density(&DVector::from_element(1, 0.0));
        assert_relative_eq!(v, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn block_diag_shapes() {
        let a = DMatrix::from_element(2, 1, 1.0);
        let b = DMatrix::from_element(1, 3, 2.0);
        let m = block_diag(&[&a, &b]);
        assert_eq!(m.shape(), (3, 4));
        assert_eq!(m[(2, 3)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
    }
}
