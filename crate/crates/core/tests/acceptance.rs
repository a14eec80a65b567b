//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs without the libtest harness so the lines are
//! always visible.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use taskprio::gaussians::{em_fit, gaussian_product, gmr, EmOptions, Gaussian, Gmm, Init, ProductTerm};
use taskprio::kinematics::{nullspace_projector, pseudoinverse};
use taskprio::priority::soft_weighted_step;
use taskprio::quat::{angular_velocity, hamilton_bar, hamilton_bar_star, hamilton_plus, UnitQuaternion};
use taskprio::sim::experiments::{
    feasible_suite, priority_suite, spaces_suite, synthesis_suite, transfer_suite, transitions_suite,
    CriterionResult, PriorityConfig, SpacesSuiteConfig, SuiteReport, TransitionSuiteConfig,
};
use taskprio::sim::Side;

const CASES: usize = 1000;

#[derive(Default)]
struct Ledger {
    failed: usize,
    total: usize,
}

impl Ledger {
    fn line(&mut self, id: &str, c: &CriterionResult) {
        self.total += 1;
        if !c.passed {
            self.failed += 1;
        }
        println!(
            "{} [{id}] {}: {:.3e} {} {:.0e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        );
    }

    fn suite(&mut self, id: &str, label: &str, budget_s: f64, run: impl FnOnce() -> taskprio::Result<SuiteReport>) {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(report) => {
                for c in &report.criteria {
                    self.line(id, &CriterionResult { name: format!("{label}: {}", c.name), ..c.clone() });
                }
                for w in &report.warnings {
                    println!("     [{id}] warning: {w}");
                }
            }
            Err(e) => self.line(id, &CriterionResult::below(format!("{label}: run failed ({e})"), f64::NAN, 0.0)),
        }
        self.line(id, &CriterionResult::below(format!("{label}: runtime [s]"), elapsed, budget_s));
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng))
}

fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, d, d);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn random_quat(rng: &mut impl Rng) -> UnitQuaternion {
    UnitQuaternion::from_vector(&Vector4::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng)))
}

/// Maximum of `f` over `CASES` seeded cases, plus the mean time per case.
fn sweep(seed: u64, mut f: impl FnMut(&mut ChaCha8Rng) -> f64) -> (f64, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let worst = (0..CASES).map(|_| f(&mut rng)).fold(0.0, f64::max);
    (worst, start.elapsed() / CASES as u32)
}

fn kernel(ledger: &mut Ledger, name: &str, tol: f64, (worst, per_case): (f64, Duration)) {
    ledger.line("7", &CriterionResult::below(format!("{name}: max residual over {CASES} cases"), worst, tol));
    ledger.line(
        "7",
        &CriterionResult::below(format!("{name}: mean time per case [ms]"), per_case.as_secs_f64() * 1e3, 1.0),
    );
}

fn math_kernels(ledger: &mut Ledger) {
    kernel(ledger, "Penrose conditions", 1e-9, sweep(11, |rng| {
        let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=8));
        // Every fourth case is rank deficient.
        let j = if rng.random_range(0..4) == 0 && r.min(c) > 1 {
            let k = rng.random_range(1..r.min(c));
            random_matrix(rng, r, k) * random_matrix(rng, k, c)
        } else {
            random_matrix(rng, r, c)
        };
        let p = pseudoinverse(&j, 0.0);
        let jp = &j * &p;
        let pj = &p * &j;
        [
            (&jp * &j - &j).norm() / j.norm(),
            (&pj * &p - &p).norm() / p.norm(),
            (jp.transpose() - &jp).norm(),
            (pj.transpose() - &pj).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }));

    kernel(ledger, "null-space projector identities", 1e-9, sweep(12, |rng| {
        let (r, c) = (rng.random_range(1..=5), rng.random_range(2..=8));
        let j = random_matrix(rng, r, c);
        let n = nullspace_projector(&j, 0.0);
        let v = DVector::from_fn(c, |_, _| gauss(rng));
        [
            (&n * &n - &n).norm(),
            (n.transpose() - &n).norm(),
            (&j * &n).norm() / j.norm(),
            (&n * pseudoinverse(&j, 0.0)).norm(),
            // Projection never lengthens a vector.
            ((&n * &v).norm() - v.norm()).max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }));

    kernel(ledger, "Hamilton operators: product and commutation", 1e-12, sweep(13, |rng| {
        let (a, b) = (random_quat(rng), random_quat(rng));
        let ab = a.multiply(&b).coords();
        [
            (hamilton_plus(&a) * b.coords() - ab).amax(),
            (hamilton_bar(&b) * a.coords() - ab).amax(),
            (hamilton_plus(&a) * hamilton_bar(&b) - hamilton_bar(&b) * hamilton_plus(&a)).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }));

    kernel(ledger, "angular velocity: linear operator form vs vector part", 1e-12, sweep(14, |rng| {
        let prev = random_quat(rng);
        let mut cur = random_quat(rng);
        // Same rotation, sign chosen so the relative rotation is the short arc.
        if cur.multiply(&prev.conjugate()).coords()[0] < 0.0 {
            let c = -cur.coords();
            cur = UnitQuaternion::new(c[0], c[1], c[2], c[3]);
        }
        let dt = rng.random_range(1e-3..1.0);
        let linear = hamilton_bar_star(&prev.conjugate()) * cur.coords() / dt;
        let direct = angular_velocity(&cur, &prev, dt).unwrap();
        (linear - direct).amax() * dt
    }));

    kernel(ledger, "Gaussian product vs whitened normal equations", 1e-9, sweep(15, |rng| {
        let d = rng.random_range(1..=6);
        let p = rng.random_range(2..=5);
        let gs: Vec<Gaussian> = (0..p)
            .map(|_| Gaussian::new(DVector::from_fn(d, |_, _| gauss(rng)), random_spd(rng, d)).unwrap())
            .collect();
        let terms: Vec<ProductTerm> = gs.iter().map(ProductTerm::from).collect();
        let prod = gaussian_product(&terms).unwrap();
        // Oracle: least squares on the stacked whitened system Wⱼ x = Wⱼ μⱼ with
        // Σⱼ = LⱼLⱼᵀ and Wⱼ = Lⱼ⁻¹, solved by QR.
        let mut w = DMatrix::zeros(p * d, d);
        let mut rhs = DVector::zeros(p * d);
        for (j, g) in gs.iter().enumerate() {
            let l = g.cov.clone().cholesky().unwrap().l();
            let wj = l.solve_lower_triangular(&DMatrix::identity(d, d)).unwrap();
            rhs.rows_mut(j * d, d).copy_from(&(&wj * &g.mean));
            w.view_mut((j * d, 0), (d, d)).copy_from(&wj);
        }
        let qr = w.qr();
        let r = qr.r();
        let mean = r.solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap();
        let r_inv = r.solve_upper_triangular(&DMatrix::identity(d, d)).unwrap();
        let cov = &r_inv * r_inv.transpose();
        let rel = |a: f64, b: f64| a / b.max(1.0);
        rel((prod.mean - &mean).amax(), mean.amax()).max(rel((prod.cov - &cov).amax(), cov.amax()))
    }));

    // EM: the penalized objective never decreases.
    let start = Instant::now();
    let mut worst_drop = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for case in 0..20 {
        let d = rng.random_range(1..=4);
        let k = rng.random_range(2..=4);
        let centers: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(d, |_, _| 4.0 * gauss(&mut rng))).collect();
        let n = 300;
        let data = DMatrix::from_fn(n, d, |r, c| centers[r % k][c] + gauss(&mut rng) * (1.0 + (r % k) as f64 * 0.5));
        let opts = EmOptions {
            init: if case % 2 == 0 { Init::KMeans } else { Init::TimeSplit },
            seed: case,
            tol: 0.0,
            max_iter: 100,
            ..EmOptions::with_k(k)
        };
        let (_, report) = em_fit(&data, &opts).unwrap();
        for w in report.objective.windows(2) {
            worst_drop = worst_drop.max((w[0] - w[1]) / w[0].abs().max(1.0));
        }
    }
    // Drops below the rounding floor of a sum over 300 log-densities are noise.
    ledger.line(
        "7",
        &CriterionResult::below("EM objective: largest relative decrease over 20 datasets", worst_drop.max(0.0), 1e-12),
    );
    println!("     [7] EM datasets took {:.2} s", start.elapsed().as_secs_f64());

    // GMR against a Monte-Carlo conditional mean.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let comps = vec![
        Gaussian::new(
            DVector::from_vec(vec![-1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.8]),
        )
        .unwrap(),
        Gaussian::new(
            DVector::from_vec(vec![1.5, 4.0, 1.0]),
            DMatrix::from_row_slice(3, 3, &[0.5, -0.2, 0.1, -0.2, 0.7, 0.0, 0.1, 0.0, 0.4]),
        )
        .unwrap(),
    ];
    let model = Gmm::new(vec![0.4, 0.6], comps).unwrap();
    let x0 = 0.3;
    let cond = gmr(&model, &[0], &[1, 2], &DVector::from_element(1, x0)).unwrap();
    let samples = model.sample(1_000_000, &mut rng).unwrap();
    let h = 0.02;
    let (mut sum, mut count) = (DVector::zeros(2), 0usize);
    for s in samples.iter().filter(|s| (s[0] - x0).abs() < h) {
        sum += s.rows(1, 2);
        count += 1;
    }
    let mc = sum / count as f64;
    ledger.line(
        "7",
        &CriterionResult::below(
            format!("GMR vs Monte-Carlo conditional mean, {count} samples in window: relative error"),
            (&cond.mean - &mc).norm() / mc.norm(),
            0.02,
        ),
    );
}

fn soft_weighting(ledger: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (mut dominant, mut scaling) = (0.0f64, 0.0f64);
    for _ in 0..CASES {
        let n = rng.random_range(2..=7);
        let m = rng.random_range(2..=4);
        let cands: Vec<(DVector<f64>, DMatrix<f64>)> = (0..m)
            .map(|_| (DVector::from_fn(n, |_, _| gauss(&mut rng)), random_spd(&mut rng, n)))
            .collect();
        let lead = rng.random_range(0..m);
        // The ratio is spectral: the dominant precision's smallest eigenvalue
        // is 1e9 times the largest eigenvalue of any other candidate.
        let others_max = cands
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != lead)
            .map(|(_, (_, g))| g.symmetric_eigenvalues().max())
            .fold(0.0, f64::max);
        let lead_min = cands[lead].1.symmetric_eigenvalues().min();
        let boost = 1e9 * others_max / lead_min;
        let boosted: Vec<_> = cands
            .iter()
            .enumerate()
            .map(|(j, (q, g))| (q.clone(), if j == lead { g * boost } else { g.clone() }))
            .collect();
        let (q, _) = soft_weighted_step(&boosted).unwrap();
        dominant = dominant.max((&q - &cands[lead].0).norm() / cands[lead].0.norm());

        let (base, _) = soft_weighted_step(&cands).unwrap();
        let c = 10f64.powf(rng.random_range(-6.0..6.0));
        let scaled: Vec<_> = cands.iter().map(|(q, g)| (q.clone(), g * c)).collect();
        let (q, _) = soft_weighted_step(&scaled).unwrap();
        scaling = scaling.max((&q - &base).norm() / base.norm());
    }
    ledger.line(
        "8",
        &CriterionResult::below(format!("precision ratio 1e9: relative distance to dominant candidate, {CASES} cases"), dominant, 1e-6),
    );
    ledger.line(
        "8",
        &CriterionResult::below(format!("common precision scaling: relative change of the command, {CASES} cases"), scaling, 1e-12),
    );
}

fn main() {
    // Ignore libtest arguments that `cargo test` forwards.
    let mut ledger = Ledger::default();
    let pc = PriorityConfig::default();
    let tc = TransitionSuiteConfig::default();

    ledger.suite("1", "hierarchy extraction, left priority", 10.0, || priority_suite(&pc, Side::Left));
    ledger.suite("1", "hierarchy extraction, right priority", 10.0, || priority_suite(&pc, Side::Right));
    ledger.suite("2", "priority synthesis", 10.0, || synthesis_suite(&pc));
    ledger.suite("3", "transfer", 10.0, || transfer_suite(&pc));
    ledger.suite("4", "weight transitions", 30.0, || transitions_suite(&tc));
    ledger.suite("5", "feasible tasks", 30.0, || feasible_suite(&tc));
    ledger.suite("6", "operational vs configuration space", 60.0, || spaces_suite(&SpacesSuiteConfig::default()));
    math_kernels(&mut ledger);
    soft_weighting(&mut ledger);

    println!("{} of {} criteria passed", ledger.total - ledger.failed, ledger.total);
    if ledger.failed > 0 {
        std::process::exit(1);
    }
}
