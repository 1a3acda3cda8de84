use ndarray::{array, Array2};
use plnet::linalg::{max_asymmetry, Cholesky};
use plnet::wglasso::{kkt_residual, solve, GlassoProblem};
use proptest::prelude::*;

/// Penalized log-likelihood of a symmetric 2x2 precision `[[a, c], [c, b]]`
/// with the penalty applied to both off-diagonal entries.
fn objective2(s: &Array2<f64>, n: f64, pen: f64, (a, b, c): (f64, f64, f64)) -> f64 {
    let det = a * b - c * c;
    if a <= 0.0 || det <= 0.0 {
        return f64::NEG_INFINITY;
    }
    n * det.ln() - (s[[0, 0]] * a + s[[1, 1]] * b + 2.0 * s[[0, 1]] * c) - 2.0 * pen * c.abs()
}

/// Coarse grid followed by a shrinking pattern search.
fn grid_oracle(s: &Array2<f64>, n: f64, pen: f64) -> (f64, f64, f64) {
    let mut best = (1.0, 1.0, 0.0);
    let mut best_val = f64::NEG_INFINITY;
    for i in 1..=60 {
        for j in 1..=60 {
            for l in -40..=40 {
                let x = (i as f64 * 0.2, j as f64 * 0.2, l as f64 * 0.1);
                let v = objective2(s, n, pen, x);
                if v > best_val {
                    best_val = v;
                    best = x;
                }
            }
        }
    }
    let mut step = 0.1;
    while step > 1e-9 {
        let mut moved = false;
        for d in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)] {
            for sign in [-1.0, 1.0] {
                let x = (best.0 + sign * step * d.0, best.1 + sign * step * d.1, best.2 + sign * step * d.2);
                let v = objective2(s, n, pen, x);
                if v > best_val {
                    best_val = v;
                    best = x;
                    moved = true;
                }
            }
        }
        // An exact zero is a kink the pattern search can only reach directly.
        let x = (best.0, best.1, 0.0);
        let v = objective2(s, n, pen, x);
        if v > best_val {
            best_val = v;
            best = x;
            moved = true;
        }
        if !moved {
            step /= 2.0;
        }
    }
    best
}

fn check_against_oracle(s: Array2<f64>, n: f64, pen: f64) {
    let problem = GlassoProblem::new(s.clone(), n, array![[0.0, pen], [pen, 0.0]], 0.0);
    let fit = solve(&problem, None).unwrap();
    let (a, b, c) = grid_oracle(&s, n, pen);
    assert!((fit.omega[[0, 0]] - a).abs() < 1e-3, "{} vs {a}", fit.omega[[0, 0]]);
    assert!((fit.omega[[1, 1]] - b).abs() < 1e-3, "{} vs {b}", fit.omega[[1, 1]]);
    assert!((fit.omega[[0, 1]] - c).abs() < 1e-3, "{} vs {c}", fit.omega[[0, 1]]);
}

#[test]
fn two_by_two_matches_grid_oracle() {
    check_against_oracle(array![[2.0, 1.0], [1.0, 2.0]], 10.0, 1.0);
    check_against_oracle(array![[2.0, 0.0], [0.0, 4.0]], 10.0, 1e6);
    check_against_oracle(array![[3.0, -2.0], [-2.0, 4.0]], 10.0, 0.5);
    check_against_oracle(array![[1.5, 0.9], [0.9, 1.0]], 5.0, 0.2);
}

#[test]
fn huge_penalty_is_diagonal() {
    let p = GlassoProblem::<f64>::new(array![[2.0, 0.0], [0.0, 4.0]], 10.0, array![[0.0, 1e6], [1e6, 0.0]], 0.0);
    let fit = solve(&p, None).unwrap();
    assert!((fit.omega[[0, 0]] - 5.0).abs() < 1e-12);
    assert!((fit.omega[[1, 1]] - 2.5).abs() < 1e-12);
    assert_eq!(fit.omega[[0, 1]], 0.0);
}

#[test]
fn diagonal_rate_shifts_scatter() {
    let p = GlassoProblem::<f64>::new(array![[3.0]], 4.0, array![[0.0]], 0.5);
    let fit = solve(&p, None).unwrap();
    assert!((fit.omega[[0, 0]] - 4.0 / 3.5).abs() < 1e-14);
    assert!(kkt_residual(fit.omega.view(), &p).unwrap() < 1e-12);
}

fn random_problem(p: usize, n: usize, seed: u64, pen_scale: f64) -> GlassoProblem<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, p), || rng.random::<f64>() * 2.0 - 1.0);
    let s = x.t().dot(&x);
    let mut pen = Array2::from_shape_simple_fn((p, p), || rng.random_range(0.1..3.0) * pen_scale);
    for i in 0..p {
        pen[[i, i]] = 0.0;
        for j in 0..i {
            pen[[i, j]] = pen[[j, i]];
        }
    }
    let rate = if rng.random_bool(0.5) { 0.0 } else { 0.4 };
    GlassoProblem::new(s, n as f64, pen, rate)
}

fn nonzeros(a: &Array2<f64>) -> usize {
    a.indexed_iter().filter(|((i, j), v)| i != j && **v != 0.0).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_symmetry_and_definiteness(p in 2usize..=10, n in 5usize..60, seed in any::<u64>()) {
        let problem = random_problem(p, n, seed, 1.0);
        let fit = solve(&problem, None).unwrap();
        prop_assert_eq!(max_asymmetry(fit.omega.view()), 0.0);
        prop_assert!(Cholesky::new(fit.omega.view()).is_ok());
        prop_assert!(kkt_residual(fit.omega.view(), &problem).unwrap() < 1e-6);
    }

    #[test]
    fn larger_penalty_never_adds_edges(p in 2usize..=8, seed in any::<u64>()) {
        let base = random_problem(p, 30, seed, 0.3);
        let mut heavy = base.clone();
        heavy.penalties *= 10.0;
        let a = solve(&base, None).unwrap().omega;
        let b = solve(&heavy, None).unwrap().omega;
        prop_assert!(nonzeros(&b) <= nonzeros(&a));
    }

    #[test]
    fn covariance_log_det_never_decreases(p in 2usize..=8, seed in any::<u64>()) {
        let mut problem = random_problem(p, 25, seed, 0.5);
        problem.tol = 1e-12;
        let fit = solve(&problem, None).unwrap();
        for w in fit.log_det_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{:?}", fit.log_det_trace);
        }
    }

    #[test]
    fn warm_start_reaches_cold_optimum(p in 2usize..=8, seed in any::<u64>()) {
        let problem = random_problem(p, 40, seed, 1.0);
        let cold = solve(&problem, None).unwrap().omega;
        let mut other = problem.clone();
        other.penalties *= 0.5;
        let start = solve(&other, None).unwrap().omega;
        let warm = solve(&problem, Some(&start)).unwrap().omega;
        prop_assert!(kkt_residual(warm.view(), &problem).unwrap() < 1e-6);
        let gap = (&warm - &cold).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(gap < 1e-5, "gap {}", gap);
    }
}

#[test]
fn single_precision_solve() {
    let p = GlassoProblem::<f32>::new(array![[2.0, 0.5], [0.5, 1.0]], 10.0, array![[0.0, 0.5], [0.5, 0.0]], 0.0);
    let fit = solve(&p, None).unwrap();
    assert!(kkt_residual(fit.omega.view(), &p).unwrap() < 1e-3);
}
