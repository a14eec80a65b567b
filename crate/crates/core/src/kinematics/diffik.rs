use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{pinv_damped, pinv_truncated, PINV_RTOL};

/// `damping == 0` gives the SVD pseudoinverse with relative truncation
/// `1e-8·σ_max`; `damping > 0` gives `Jᵀ(JJᵀ + λ²I)⁻¹`.
pub fn pseudoinverse(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    if damping > 0.0 {
        pinv_damped(j, damping)
    } else {
        pinv_truncated(j, PINV_RTOL)
    }
}

/// `N = I − J†J`.
pub fn nullspace_projector(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let n = j.ncols();
    DMatrix::identity(n, n) - pseudoinverse(j, damping) * j
}

/// `q̇ = (JᵀWJ)⁻¹JᵀWẋ`, with the truncated pseudoinverse standing in for the
/// inverse when `JᵀWJ` is singular (least-norm among weighted minimizers).
pub fn weighted_pseudoinverse_step(
    j: &DMatrix<f64>,
    w: &DMatrix<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = j.nrows();
    if w.shape() != (m, m) || xdot.len() != m {
        return invalid(format!(
            "weighted step: J is {}x{}, W is {}x{}, xdot has {}",
            m,
            j.ncols(),
            w.nrows(),
            w.ncols(),
            xdot.len()
        ));
    }
    let jtw = j.transpose() * w;
    let h = &jtw * j;
    let rhs = &jtw * xdot;
    // Cholesky can succeed on a numerically singular JᵀWJ, so always go
    // through the truncated SVD.
    Ok(pinv_truncated(&h, PINV_RTOL) * rhs)
}

fn check_order(n_tasks: usize, order: &[usize]) -> Result<()> {
    if n_tasks == 0 {
        return invalid("hierarchy needs at least one task");
    }
    let mut seen = vec![false; n_tasks];
    if order.len() != n_tasks {
        return invalid(format!("order has {} entries for {n_tasks} tasks", order.len()));
    }
    for &k in order {
        if k >= n_tasks || seen[k] {
            return invalid(format!("order {order:?} is not a permutation of 0..{n_tasks}"));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Visits tasks in priority order, yielding each task's index together with
/// `N_acc J_k†`, where `N_acc` projects onto the null space of all tasks
/// visited before it. Damping only enters `J_k†`; `N_acc` always uses the
/// truncated pseudoinverse so lower tasks never disturb higher ones.
fn for_each_projected_pinv(
    jacobians: &[&DMatrix<f64>],
    order: &[usize],
    damping: f64,
    mut visit: impl FnMut(usize, DMatrix<f64>),
) -> Result<()> {
    check_order(jacobians.len(), order)?;
    let nq = jacobians[order[0]].ncols();
    if let Some(bad) = jacobians.iter().find(|j| j.ncols() != nq) {
        return invalid(format!(
            "task Jacobians disagree on joint count: {} vs {nq}",
            bad.ncols()
        ));
    }
    let mut stacked = DMatrix::<f64>::zeros(0, nq);
    for (pos, &k) in order.iter().enumerate() {
        let jk = jacobians[k];
        let pinv = pseudoinverse(jk, damping);
        let block = if pos == 0 {
            pinv
        } else {
            nullspace_projector(&stacked, 0.0) * pinv
        };
        visit(k, block);
        if pos + 1 < order.len() {
            let r = stacked.nrows();
            stacked = stacked.insert_rows(r, jk.nrows(), 0.0);
            stacked.view_mut((r, 0), jk.shape()).copy_from(jk);
        }
    }
    Ok(())
}

/// Strict-priority joint velocity `J₁†ẋ₁ + N₁J₂†ẋ₂ + …` in the given order.
/// Each lower task passes through the null space of the stacked Jacobian of
/// all tasks above it.
pub fn strict_hierarchy_step(
    tasks: &[(DMatrix<f64>, DVector<f64>)],
    order: &[usize],
    damping: f64,
) -> Result<DVector<f64>> {
    for (j, x) in tasks {
        if j.nrows() != x.len() {
            return invalid(format!(
                "task Jacobian has {} rows but velocity has {}",
                j.nrows(),
                x.len()
            ));
        }
    }
    let jacs: Vec<_> = tasks.iter().map(|(j, _)| j).collect();
    let nq = jacs.first().map_or(0, |j| j.ncols());
    let mut qdot = DVector::zeros(nq);
    for_each_projected_pinv(&jacs, order, damping, |k, block| {
        qdot += block * &tasks[k].1;
    })?;
    Ok(qdot)
}

/// Matrix `A` with `A·[ẋ_0; ẋ_1; …] = strict_hierarchy_step(...)`, where the
/// stacked input keeps the tasks in their natural index order and each
/// priority block sits at its task's column slot.
pub fn hierarchy_operator(
    jacobians: &[DMatrix<f64>],
    order: &[usize],
    damping: f64,
) -> Result<DMatrix<f64>> {
    let jacs: Vec<_> = jacobians.iter().collect();
    let mut offsets = Vec::with_capacity(jacobians.len());
    let mut total = 0;
    for j in jacobians {
        offsets.push(total);
        total += j.nrows();
    }
    let nq = jacobians.first().map_or(0, |j| j.ncols());
    let mut a = DMatrix::zeros(nq, total);
    for_each_projected_pinv(&jacs, order, damping, |k, block| {
        a.view_mut((0, offsets[k]), block.shape()).copy_from(&block);
    })?;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn small_examples() {
        assert_eq!(pseudoinverse(&DMatrix::identity(2, 2), 0.0), DMatrix::identity(2, 2));
        assert_relative_eq!(pseudoinverse(&DMatrix::from_element(1, 1, 2.0), 0.0)[(0, 0)], 0.5);
        assert_eq!(pseudoinverse(&DMatrix::zeros(2, 3), 0.0), DMatrix::zeros(3, 2));
        let n = nullspace_projector(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 0.0);
        assert_relative_eq!(n, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])), epsilon = 1e-15);
    }

    #[test]
    fn penrose_on_full_row_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j = random(&mut rng, 2, 3);
        let p = pseudoinverse(&j, 0.0);
        assert_relative_eq!(&j * &p * &j, j, epsilon = 1e-10);
        assert_relative_eq!(&p * &j * &p, p, epsilon = 1e-10);
        let sq = random(&mut rng, 3, 3);
        assert!(nullspace_projector(&sq, 0.0).norm() < 1e-10);
    }

    #[test]
    fn weighted_step_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = random(&mut rng, 4, 3);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let w = DMatrix::identity(4, 4);
        let q = weighted_pseudoinverse_step(&j, &w, &x).unwrap();
        assert_relative_eq!(q, pseudoinverse(&j, 0.0) * &x, epsilon = 1e-10);

        let j2 = random(&mut rng, 2, 3);
        let x2 = DVector::from_vec(vec![0.3, -0.7]);
        let w2 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let q = weighted_pseudoinverse_step(&j2, &w2, &x2).unwrap();
        let first = j2.rows(0, 1).into_owned();
        let expected = pseudoinverse(&first, 0.0) * DVector::from_element(1, 0.3);
        assert_relative_eq!(q, expected, epsilon = 1e-10);

        let a = weighted_pseudoinverse_step(&j2, &(DMatrix::identity(2, 2) * 0.3), &x2).unwrap();
        let b = weighted_pseudoinverse_step(&j2, &(DMatrix::identity(2, 2) * 7.0), &x2).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn hierarchy_top_task_exact_and_operator_matches_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let j1 = random(&mut rng, 2, 4);
        let j2 = random(&mut rng, 2, 4);
        let j3 = random(&mut rng, 1, 4);
        let x1 = DVector::from_vec(vec![0.2, -0.4]);
        let x2 = DVector::from_vec(vec![1.0, 0.5]);
        let x3 = DVector::from_vec(vec![-0.3]);
        let tasks = vec![(j1.clone(), x1.clone()), (j2.clone(), x2.clone()), (j3.clone(), x3.clone())];
        for order in [[0, 1, 2], [1, 0, 2], [2, 1, 0]] {
            let q = strict_hierarchy_step(&tasks, &order, 0.0).unwrap();
            let top = &tasks[order[0]];
            assert_relative_eq!(&top.0 * &q, top.1.clone(), epsilon = 1e-10);
            let a = hierarchy_operator(&[j1.clone(), j2.clone(), j3.clone()], &order, 0.0).unwrap();
            let stacked = DVector::from_iterator(5, x1.iter().chain(x2.iter()).chain(x3.iter()).cloned());
            assert_relative_eq!(a * stacked, q, epsilon = 1e-12);
        }
        let single = strict_hierarchy_step(&tasks[..1], &[0], 0.0).unwrap();
        assert_relative_eq!(single, pseudoinverse(&j1, 0.0) * &x1, epsilon = 1e-14);
        assert!(strict_hierarchy_step(&tasks, &[0, 0, 1], 0.0).is_err());
    }
}
