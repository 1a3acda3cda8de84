use ndarray::{Array1, Array2};
use plnet::admm::{kl_objective, solve_mu, solve_sigma2, stationarity_residual, AdmmConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    omega: Array2<f64>,
    lambda: Array1<f64>,
    sigma2: Array1<f64>,
    y: Array1<f64>,
    init: Array1<f64>,
}

fn instance(p: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_simple_fn((p, p), || rng.random::<f64>() * 2.0 - 1.0);
    Instance {
        omega: a.t().dot(&a) + Array2::<f64>::eye(p) * 0.2,
        lambda: Array1::from_shape_simple_fn(p, || rng.random::<f64>() * 4.0 - 2.0),
        sigma2: Array1::from_shape_simple_fn(p, || rng.random_range(0.05..1.5)),
        y: Array1::from_shape_simple_fn(p, || rng.random_range(0..30) as f64),
        init: Array1::from_shape_simple_fn(p, || rng.random::<f64>() * 2.0),
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > 1e-15 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn max_gap(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn first_order_residual_at_termination(p in 1usize..=8, seed in any::<u64>()) {
        let x = instance(p, seed);
        let s = solve_mu(x.y.view(), x.lambda.view(), x.sigma2.view(), x.omega.view(), x.init.view(), &AdmmConfig::default()).unwrap();
        prop_assert!(s.converged);
        let r = stationarity_residual(s.mean().view(), x.sigma2.view(), x.y.view(), x.lambda.view(), x.omega.view());
        prop_assert!(r < 1e-5, "residual {}", r);
    }

    #[test]
    fn optimum_ignores_step_size_and_start(p in 1usize..=8, seed in any::<u64>()) {
        let x = instance(p, seed);
        let sol = |rho: f64, init: &Array1<f64>| {
            let cfg = AdmmConfig { rho, tol: 1e-9, max_iter: 20_000, ..AdmmConfig::default() };
            solve_mu(x.y.view(), x.lambda.view(), x.sigma2.view(), x.omega.view(), init.view(), &cfg).unwrap().mu_m
        };
        let base = sol(1.0, &x.init);
        prop_assert!(max_gap(&base, &sol(0.5, &x.init)) < 1e-6);
        prop_assert!(max_gap(&base, &sol(2.0, &x.init)) < 1e-6);
        prop_assert!(max_gap(&base, &sol(1.0, &x.lambda)) < 1e-6);
    }

    #[test]
    fn kl_never_increases(p in 1usize..=8, seed in any::<u64>()) {
        let x = instance(p, seed);
        let cfg = AdmmConfig::default();
        let before = kl_objective(x.init.view(), x.sigma2.view(), x.y.view(), x.lambda.view(), x.omega.view());
        let mu = solve_mu(x.y.view(), x.lambda.view(), x.sigma2.view(), x.omega.view(), x.init.view(), &cfg).unwrap().mu_m;
        let mid = kl_objective(mu.view(), x.sigma2.view(), x.y.view(), x.lambda.view(), x.omega.view());
        let s2 = Array1::from_shape_fn(p, |j| solve_sigma2(mu[j], x.omega[[j, j]], &cfg).unwrap());
        let after = kl_objective(mu.view(), s2.view(), x.y.view(), x.lambda.view(), x.omega.view());
        prop_assert!(mid <= before + 1e-8);
        prop_assert!(after <= mid + 1e-8);
    }

    #[test]
    fn sigma2_matches_bisection(mu in -20.0f64..20.0, omega_jj in 0.01f64..100.0) {
        let s = solve_sigma2(mu, omega_jj, &AdmmConfig::default()).unwrap();
        let oracle = bisect(|v| v * (omega_jj + (mu + v / 2.0).exp()) - 1.0, 0.0, 1.0 / omega_jj);
        prop_assert!((s - oracle).abs() < 1e-10);
        prop_assert!(s > 0.0 && s <= 1.0 / omega_jj);
        prop_assert!((s * omega_jj + s * (mu + s / 2.0).exp() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn separable_problem_matches_univariate_roots() {
    let p = 4;
    let mut omega = Array2::<f64>::eye(p);
    omega[[2, 2]] = 2.5;
    let lambda = Array1::from(vec![0.5, -1.0, 0.0, 2.0]);
    let sigma2 = Array1::from(vec![0.3, 0.1, 0.5, 0.2]);
    let y = Array1::from(vec![0.0, 4.0, 1.0, 12.0]);
    let s = solve_mu(y.view(), lambda.view(), sigma2.view(), omega.view(), lambda.view(), &AdmmConfig::default()).unwrap();
    for j in 0..p {
        let oracle = bisect(
            |m| omega[[j, j]] * (m - lambda[j]) + (m + sigma2[j] / 2.0).exp() - y[j],
            -50.0,
            50.0,
        );
        assert!((s.mu_m[j] - oracle).abs() < 1e-6, "coordinate {j}");
    }
}

#[test]
fn sigma2_limits() {
    let cfg = AdmmConfig::<f64>::default();
    assert!((solve_sigma2(-50.0, 2.0, &cfg).unwrap() - 0.5).abs() < 1e-9);
    assert!(solve_sigma2(0.0, 1e6, &cfg).unwrap() <= 1e-6);
}
