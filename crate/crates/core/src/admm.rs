//! Per-observation variational updates.
//!
//! The variational mean minimizes
//! `½(μ−λ)ᵀΩ(μ−λ) + Σⱼ [exp(μⱼ + σ²ⱼ/2) − yⱼμⱼ]`, which is split into a
//! quadratic block `μ_N` and a separable exponential block `μ_M` tied by the
//! consensus constraint `μ_N = μ_M`. The variational variances then solve a
//! scalar root problem per coordinate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig<F> {
    /// Augmented-Lagrangian step size `ρ`.
    pub rho: F,
    /// Threshold on `‖μ_M − μ_N‖∞` and on the first-order residual at `μ_M`.
    pub tol: F,
    pub max_iter: usize,
    /// Absolute stationarity tolerance for the scalar root finders.
    pub newton_tol: F,
    pub newton_max_iter: usize,
}

impl<F: Scalar> Default for AdmmConfig<F> {
    fn default() -> Self {
        Self {
            rho: F::one(),
            tol: F::lit(1e-6),
            max_iter: 500,
            newton_tol: F::lit(1e-12),
            newton_max_iter: 100,
        }
    }
}

impl<F: Scalar> AdmmConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > F::zero() && self.tol > F::zero() && self.newton_tol > F::zero()) {
            return Err(Error::InvalidParameter(
                "ADMM rho and tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "ADMM iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Iterates of one ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<F> {
    pub mu_m: Array1<F>,
    pub mu_n: Array1<F>,
    pub alpha: Array1<F>,
    /// `‖μ_M − μ_N‖∞` after the last iteration.
    pub residual: F,
    /// `‖Ω(μ_M − μ_N⁽ᵗ⁺¹⁾) + ρ(μ_N⁽ᵗ⁾ − μ_N⁽ᵗ⁺¹⁾)‖∞`, which equals the
    /// first-order residual of the mean problem at `μ_M`. Only evaluated once
    /// the primal residual is within tolerance; infinite before that.
    pub stationarity: F,
    pub iter: usize,
    pub converged: bool,
}

impl<F: Scalar> AdmmState<F> {
    /// The variational mean returned to the caller (`μ_M` at termination).
    pub fn mean(&self) -> &Array1<F> {
        &self.mu_m
    }
}

/// Root of a strictly increasing `f` inside a sign-changing bracket.
///
/// Newton steps are taken from `start`; any step that leaves the current
/// bracket (or lands on a non-finite value) is replaced by bisection.
fn bracketed_newton<F: Scalar>(
    f: impl Fn(F) -> (F, F),
    mut lo: F,
    mut hi: F,
    start: F,
    tol: F,
    max_iter: usize,
) -> Result<F> {
    let half = F::lit(0.5);
    let mut x = if start >= lo && start <= hi { start } else { hi };
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx > F::zero() || fx.is_nan() {
            hi = x;
        } else {
            lo = x;
        }
        let width = hi - lo;
        if width <= F::lit(4.0) * F::epsilon() * x.abs().max(F::one()) {
            return Ok(if fx.is_finite() { x } else { lo + half * width });
        }
        let newton = x - fx / dfx;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            lo + half * width
        };
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

/// Exact minimizer of the `j`-th exponential block of the augmented Lagrangian:
/// the root of `exp(μ + σ²/2) + ρμ + (α − ρμ_N − y) = 0`.
pub fn mu_m_step<F: Scalar>(
    y: F,
    sigma2: F,
    alpha: F,
    mu_n: F,
    rho: F,
    config: &AdmmConfig<F>,
) -> Result<F> {
    mu_m_step_from(y, sigma2, alpha, mu_n, rho, mu_n, config)
}

fn mu_m_step_from<F: Scalar>(
    y: F,
    sigma2: F,
    alpha: F,
    mu_n: F,
    rho: F,
    guess: F,
    config: &AdmmConfig<F>,
) -> Result<F> {
    let half_s = sigma2 * F::lit(0.5);
    let c = alpha - rho * mu_n - y;
    let h = |m: F| {
        let e = (m + half_s).exp();
        (e + rho * m + c, e + rho)
    };
    // The exponential is positive, so the root lies left of -c/ρ. When that
    // bound is large, a nonnegative root also has exp(μ + σ²/2) ≤ -c, which
    // keeps the first exponential finite.
    let upper = -c / rho;
    let hi = if c < F::zero() && upper + half_s > F::lit(20.0) {
        upper.min(((-c).ln() - half_s).max(F::zero()))
    } else {
        upper
    };
    // h is convex and increasing: after one step Newton stays right of the
    // root and decreases monotonically, so no bracket is needed.
    let mut x = guess.min(hi);
    for _ in 0..config.newton_max_iter {
        let (fx, dfx) = h(x);
        if fx.abs() <= config.newton_tol {
            return Ok(x);
        }
        let delta = fx / dfx;
        let next = (x - delta).min(hi);
        if !next.is_finite() {
            break;
        }
        // Right of the root the step moves left and convexity gives
        // 0 ≤ h(next) ≤ exp(x + σ²/2)·δ²/2, so the check can be skipped.
        if fx > F::zero() && (dfx - rho) * delta * delta <= config.newton_tol {
            return Ok(next);
        }
        if (next - x).abs() <= F::lit(4.0) * F::epsilon() * x.abs().max(F::one()) {
            return Ok(next);
        }
        x = next;
    }
    let base = guess.min(upper);
    let mut step = F::one();
    let mut lo = base - step;
    while h(lo).0 > F::zero() {
        step = step + step;
        lo = base - step;
    }
    // exp(μ* + σ²/2) = ρ(upper − μ*) ≤ ρ(upper − lo)
    let hi = upper.min((rho * (upper - lo)).ln() - half_s).max(lo);
    bracketed_newton(h, lo, hi, guess, config.newton_tol, config.newton_max_iter)
}

/// Quadratic block: solves `(Ω + ρI) μ_N = ρμ_M + α + Ωλ`.
pub fn mu_n_step<F: Scalar>(
    mu_m: ArrayView1<'_, F>,
    alpha: ArrayView1<'_, F>,
    omega: ArrayView2<'_, F>,
    lambda: ArrayView1<'_, F>,
    rho: F,
) -> Result<Array1<F>> {
    let factor = Cholesky::new(shifted(omega, rho).view())?;
    let rhs = &mu_m * rho + &alpha + &omega.dot(&lambda);
    Ok(factor.solve(rhs.view()))
}

/// `α + ρ(μ_M − μ_N)`.
pub fn dual_step<F: Scalar>(
    alpha: ArrayView1<'_, F>,
    mu_m: ArrayView1<'_, F>,
    mu_n: ArrayView1<'_, F>,
    rho: F,
) -> Array1<F> {
    &alpha + &((&mu_m - &mu_n) * rho)
}

fn shifted<F: Scalar>(omega: ArrayView2<'_, F>, rho: F) -> Array2<F> {
    let mut a = omega.to_owned();
    for j in 0..a.nrows() {
        a[[j, j]] += rho;
    }
    a
}

/// Reusable ADMM solver for one precision matrix: factorizes `Ω + ρI` once
/// and is then shared by every observation of the group.
#[derive(Debug, Clone)]
pub struct MuSolver<'a, F> {
    omega: ArrayView2<'a, F>,
    /// `(Ω + ρI)⁻¹`, row-major; a matrix-vector product per iteration is
    /// cheaper than two dependent triangular solves at these sizes.
    shifted_inverse: Array2<F>,
    config: AdmmConfig<F>,
}

impl<'a, F: Scalar> MuSolver<'a, F> {
    pub fn new(omega: ArrayView2<'a, F>, config: AdmmConfig<F>) -> Result<Self> {
        let shifted_inverse = Cholesky::new(shifted(omega, config.rho).view())?.inverse();
        Ok(Self {
            omega,
            shifted_inverse,
            config,
        })
    }

    /// Runs ADMM from `μ_N⁽⁰⁾ = init` and the matching dual `α⁽⁰⁾ = y − exp(init + σ²/2)`.
    pub fn solve(
        &self,
        y: ArrayView1<'_, F>,
        lambda: ArrayView1<'_, F>,
        sigma2: ArrayView1<'_, F>,
        init: ArrayView1<'_, F>,
    ) -> Result<AdmmState<F>> {
        let p = y.len();
        let rho = self.config.rho;
        let omega_lambda = self.omega.dot(&lambda);
        let mut mu_n = init.to_owned();
        let mut mu_m = init.to_owned();
        let half = F::lit(0.5);
        let mut alpha = Array1::from_shape_fn(p, |j| y[j] - (init[j] + half * sigma2[j]).exp());
        let mut next = vec![F::zero(); p];
        let mut rhs = Array1::<F>::zeros(p);
        let mut state_residual = F::infinity();
        let mut stationarity = F::infinity();
        let mut gap = Array1::<F>::zeros(p);
        let mut iter = 0;
        let mut converged = false;
        while iter < self.config.max_iter {
            for j in 0..p {
                mu_m[j] = mu_m_step_from(
                    y[j],
                    sigma2[j],
                    alpha[j],
                    mu_n[j],
                    rho,
                    mu_m[j],
                    &self.config,
                )?;
            }
            for j in 0..p {
                rhs[j] = rho * mu_m[j] + alpha[j] + omega_lambda[j];
            }
            for j in 0..p {
                next[j] = self.shifted_inverse.row(j).dot(&rhs);
            }
            let mut primal = F::zero();
            for j in 0..p {
                gap[j] = mu_m[j] - next[j];
                alpha[j] += rho * gap[j];
                primal = primal.max(gap[j].abs());
            }
            // The stationarity product is only needed once the primal test passes.
            let mut first_order = F::infinity();
            if primal <= self.config.tol {
                first_order = F::zero();
                for j in 0..p {
                    let coupled = self.omega.row(j).dot(&gap);
                    first_order = first_order.max((coupled + rho * (mu_n[j] - next[j])).abs());
                }
            }
            for j in 0..p {
                mu_n[j] = next[j];
            }
            iter += 1;
            state_residual = primal;
            stationarity = first_order;
            if first_order <= self.config.tol {
                converged = true;
                break;
            }
        }
        Ok(AdmmState {
            mu_m,
            mu_n,
            alpha,
            residual: state_residual,
            stationarity,
            iter,
            converged,
        })
    }
}

/// Variational mean for one observation; see [`MuSolver`] for repeated use.
pub fn solve_mu<F: Scalar>(
    y: ArrayView1<'_, F>,
    lambda: ArrayView1<'_, F>,
    sigma2: ArrayView1<'_, F>,
    omega: ArrayView2<'_, F>,
    init: ArrayView1<'_, F>,
    config: &AdmmConfig<F>,
) -> Result<AdmmState<F>> {
    MuSolver::new(omega, *config)?.solve(y, lambda, sigma2, init)
}

/// Variational variance of one coordinate: the root in `(0, 1/Ω_jj]` of
/// `σ²Ω_jj + σ² exp(μ + σ²/2) = 1`.
pub fn solve_sigma2<F: Scalar>(mu: F, omega_jj: F, config: &AdmmConfig<F>) -> Result<F> {
    if !(omega_jj > F::zero()) {
        return Err(Error::InvalidParameter(format!(
            "diagonal precision {omega_jj} must be positive"
        )));
    }
    let half = F::lit(0.5);
    let g = |s: F| {
        let e = (mu + half * s).exp();
        (s * (omega_jj + e) - F::one(), omega_jj + e * (F::one() + half * s))
    };
    // s·exp(μ) ≤ s·exp(μ + s/2) ≤ 1 bounds the root by exp(−μ) as well.
    let hi = (F::one() / omega_jj).min((-mu).exp());
    bracketed_newton(
        g,
        F::zero(),
        hi,
        hi,
        config.newton_tol,
        config.newton_max_iter.max(200),
    )
}

/// Per-observation KL divergence between the variational factor and the
/// posterior, up to an additive constant:
/// `½(μ−λ)ᵀΩ(μ−λ) − yᵀμ + ½Σⱼ[σ²ⱼΩⱼⱼ + 2exp(μⱼ + σ²ⱼ/2) − log σ²ⱼ]`.
pub fn kl_objective<F: Scalar>(
    mu: ArrayView1<'_, F>,
    sigma2: ArrayView1<'_, F>,
    y: ArrayView1<'_, F>,
    lambda: ArrayView1<'_, F>,
    omega: ArrayView2<'_, F>,
) -> F {
    let half = F::lit(0.5);
    let r = &mu - &lambda;
    let quad = r.dot(&omega.dot(&r));
    let mut sep = F::zero();
    for j in 0..mu.len() {
        sep += sigma2[j] * omega[[j, j]] + F::lit(2.0) * (mu[j] + half * sigma2[j]).exp()
            - sigma2[j].ln();
    }
    half * quad - y.dot(&mu) + half * sep
}

/// `‖Ω(μ−λ) − y + exp(μ + σ²/2)‖∞`: first-order residual of the mean problem.
pub fn stationarity_residual<F: Scalar>(
    mu: ArrayView1<'_, F>,
    sigma2: ArrayView1<'_, F>,
    y: ArrayView1<'_, F>,
    lambda: ArrayView1<'_, F>,
    omega: ArrayView2<'_, F>,
) -> F {
    let grad = omega.dot(&(&mu - &lambda));
    let mut worst = F::zero();
    for j in 0..mu.len() {
        let g = grad[j] - y[j] + (mu[j] + F::lit(0.5) * sigma2[j]).exp();
        worst = worst.max(g.abs());
    }
    worst
}
