//! Graphical lasso with an element-wise penalty matrix.
//!
//! Maximizes, over symmetric positive-definite `Ω`,
//!
//! ```text
//! n·log|Ω| − tr(SΩ) − Σ_{i≠j} P_ij |Ω_ij| − r·Σᵢ Ω_ii
//! ```
//!
//! by block coordinate descent on the covariance `W = Ω⁻¹`: each column of
//! `W` is updated through a lasso subproblem solved by coordinate descent,
//! with its own penalty per coordinate. At the optimum
//! `n·W_ij − S_ij = P_ij·sign(Ω_ij)` off the diagonal and
//! `n·W_ii = S_ii + r` on it.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoProblem<F> {
    /// Scatter matrix `S` (symmetric PSD).
    pub scatter: Array2<F>,
    /// Weight `n` on the log-determinant.
    pub n: F,
    /// Off-diagonal penalties `P` (symmetric, positive); the diagonal is ignored.
    pub penalties: Array2<F>,
    /// Linear rate `r` on the diagonal, `2/τ` in the model (0 when `τ = ∞`).
    pub diag_rate: F,
    pub tol: F,
    pub max_sweeps: usize,
}

impl<F: Scalar> GlassoProblem<F> {
    pub fn new(scatter: Array2<F>, n: F, penalties: Array2<F>, diag_rate: F) -> Self {
        Self {
            scatter,
            n,
            penalties,
            diag_rate,
            tol: F::lit(1e-6),
            max_sweeps: 200,
        }
    }

    pub fn dim(&self) -> usize {
        self.scatter.nrows()
    }

    fn check(&self) -> Result<()> {
        let p = self.dim();
        if self.scatter.ncols() != p || self.penalties.dim() != (p, p) {
            return Err(Error::Shape(format!(
                "scatter {:?} and penalties {:?} must both be {p}x{p}",
                self.scatter.dim(),
                self.penalties.dim()
            )));
        }
        if !(self.n > F::zero()) || self.diag_rate < F::zero() {
            return Err(Error::InvalidParameter(
                "glasso weight must be positive and diagonal rate non-negative".into(),
            ));
        }
        for i in 0..p {
            if !(self.scatter[[i, i]] + self.diag_rate > F::zero()) {
                return Err(Error::DegenerateScatter { index: i });
            }
            for j in 0..p {
                if i != j && !(self.penalties[[i, j]] >= F::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "penalty ({i}, {j}) = {} must be non-negative",
                        self.penalties[[i, j]]
                    )));
                }
            }
        }
        Ok(())
    }

    /// The maximized objective, in the same `n`-weighted scale as the problem.
    pub fn objective(&self, omega: ArrayView2<'_, F>) -> Result<F> {
        let log_det = Cholesky::new(omega)?.log_det();
        let p = self.dim();
        let mut value = self.n * log_det;
        for i in 0..p {
            for j in 0..p {
                value -= self.scatter[[i, j]] * omega[[j, i]];
                if i != j {
                    value -= self.penalties[[i, j]] * omega[[i, j]].abs();
                }
            }
            value -= self.diag_rate * omega[[i, i]];
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoFit<F> {
    pub omega: Array2<F>,
    pub sweeps: usize,
    pub converged: bool,
    /// `log|W|` after each sweep; the block updates never decrease it.
    pub log_det_trace: Vec<F>,
}

/// Solves the problem, optionally warm-started from a previous `Ω`.
pub fn solve<F: Scalar>(problem: &GlassoProblem<F>, warm_start: Option<&Array2<F>>) -> Result<GlassoFit<F>> {
    problem.check()?;
    let n = problem.n;
    let s = &problem.scatter / n;
    let lam = &problem.penalties / n;
    let r = problem.diag_rate / n;

    // Block updates from an arbitrary warm covariance can lose positive
    // definiteness; such runs restart cold.
    if let Some((w, beta)) = warm_start.and_then(|om| warm_covariance(om, &s, r)) {
        let fit = sweep(problem, &s, &lam, w, beta);
        if fit.omega.iter().all(|v| v.is_finite()) && Cholesky::new(fit.omega.view()).is_ok() {
            return Ok(fit);
        }
    }
    let (w, beta) = cold_covariance(&s, r);
    let fit = sweep(problem, &s, &lam, w, beta);
    Cholesky::new(fit.omega.view())?;
    Ok(fit)
}

fn sweep<F: Scalar>(
    problem: &GlassoProblem<F>,
    s: &Array2<F>,
    lam: &Array2<F>,
    mut w: Array2<F>,
    mut beta: Array2<F>,
) -> GlassoFit<F> {
    let p = problem.dim();
    let mut scale = F::zero();
    let mut count = 0usize;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                scale += s[[i, j]].abs();
                count += 1;
            }
        }
    }
    let scale = if count > 0 { scale / F::from_usize_lossy(count) } else { F::zero() };
    let threshold = problem.tol * scale;
    let inner_tol = (problem.tol * F::lit(1e-4)).max(F::epsilon() * F::lit(16.0));

    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = p <= 1;
    let mut wb = vec![F::zero(); p];
    while !converged && sweeps < problem.max_sweeps {
        let mut change = F::zero();
        for j in 0..p {
            // wb = W11 β for the current column, kept in sync with β.
            for k in 0..p {
                wb[k] = F::zero();
            }
            for l in 0..p {
                if l == j || beta[[l, j]] == F::zero() {
                    continue;
                }
                let b = beta[[l, j]];
                for k in 0..p {
                    wb[k] += w[[k, l]] * b;
                }
            }
            for pass in 0..10_000 {
                let mut biggest = F::zero();
                for k in 0..p {
                    if k == j {
                        continue;
                    }
                    let old = beta[[k, j]];
                    let partial = s[[k, j]] - (wb[k] - w[[k, k]] * old);
                    let new = soft_threshold(partial, lam[[k, j]]) / w[[k, k]];
                    if new != old {
                        let delta = new - old;
                        for l in 0..p {
                            wb[l] += w[[l, k]] * delta;
                        }
                        beta[[k, j]] = new;
                        biggest = biggest.max(delta.abs() * w[[k, k]].sqrt());
                    }
                }
                if biggest <= inner_tol {
                    break;
                }
                if pass % 4 == 3 && exact_on_support(&w, s, lam, &mut beta, &mut wb, j) {
                    break;
                }
            }
            for k in 0..p {
                if k != j {
                    change = change.max((w[[k, j]] - wb[k]).abs());
                    w[[k, j]] = wb[k];
                    w[[j, k]] = wb[k];
                }
            }
        }
        sweeps += 1;
        if let Ok(ch) = Cholesky::new(w.view()) {
            trace.push(ch.log_det());
        }
        if change <= threshold {
            converged = true;
        }
    }

    let mut omega = Array2::<F>::zeros((p, p));
    for j in 0..p {
        let mut q = w[[j, j]];
        for k in 0..p {
            if k != j {
                q -= w[[k, j]] * beta[[k, j]];
            }
        }
        let theta = F::one() / q;
        omega[[j, j]] = theta;
        for k in 0..p {
            if k != j {
                omega[[k, j]] = -beta[[k, j]] * theta;
            }
        }
    }
    symmetrize_keeping_zeros(&mut omega);
    GlassoFit {
        omega,
        sweeps,
        converged,
        log_det_trace: trace,
    }
}

/// Solves column `j`'s lasso exactly on the current support and sign
/// pattern. The candidate is kept only if it satisfies every optimality
/// condition, in which case it is the unique minimizer.
fn exact_on_support<F: Scalar>(
    w: &Array2<F>,
    s: &Array2<F>,
    lam: &Array2<F>,
    beta: &mut Array2<F>,
    wb: &mut [F],
    j: usize,
) -> bool {
    let p = w.nrows();
    let support: Vec<usize> = (0..p).filter(|&k| k != j && beta[[k, j]] != F::zero()).collect();
    let m = support.len();
    let gram = Array2::from_shape_fn((m, m), |(a, b)| w[[support[a], support[b]]]);
    let Ok(factor) = Cholesky::new(gram.view()) else {
        return false;
    };
    let mut x: Vec<F> = support
        .iter()
        .map(|&k| s[[k, j]] - lam[[k, j]] * beta[[k, j]].signum())
        .collect();
    factor.solve_in_place(&mut x);
    for (a, &k) in support.iter().enumerate() {
        if x[a] == F::zero() || x[a].signum() != beta[[k, j]].signum() || !x[a].is_finite() {
            return false;
        }
    }
    let slack = F::epsilon() * F::lit(64.0);
    let mut fitted = vec![F::zero(); p];
    for (l, f) in fitted.iter_mut().enumerate() {
        *f = support.iter().zip(&x).fold(F::zero(), |acc, (&k, &v)| acc + w[[l, k]] * v);
    }
    for k in 0..p {
        if k != j && beta[[k, j]] == F::zero() {
            let scale = s[[k, j]].abs().max(lam[[k, j]]).max(F::one());
            if (s[[k, j]] - fitted[k]).abs() > lam[[k, j]] + slack * scale {
                return false;
            }
        }
    }
    for (a, &k) in support.iter().enumerate() {
        beta[[k, j]] = x[a];
    }
    wb.copy_from_slice(&fitted);
    true
}

fn soft_threshold<F: Scalar>(x: F, t: F) -> F {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        F::zero()
    }
}

fn cold_covariance<F: Scalar>(s: &Array2<F>, r: F) -> (Array2<F>, Array2<F>) {
    let p = s.nrows();
    let mut w = s.clone();
    for i in 0..p {
        w[[i, i]] += r;
    }
    (w, Array2::zeros((p, p)))
}

/// `W = Ω⁻¹` with its diagonal pinned to the optimum; `None` if that breaks
/// positive definiteness.
fn warm_covariance<F: Scalar>(omega: &Array2<F>, s: &Array2<F>, r: F) -> Option<(Array2<F>, Array2<F>)> {
    let p = s.nrows();
    if omega.dim() != (p, p) {
        return None;
    }
    let mut w = Cholesky::new(omega.view()).ok()?.inverse();
    for i in 0..p {
        w[[i, i]] = s[[i, i]] + r;
    }
    Cholesky::new(w.view()).ok()?;
    let mut beta = Array2::zeros((p, p));
    for j in 0..p {
        for k in 0..p {
            if k != j {
                beta[[k, j]] = -omega[[k, j]] / omega[[j, j]];
            }
        }
    }
    Some((w, beta))
}

/// Averages the triangles, but an entry that is exactly zero in either
/// triangle stays zero in both.
fn symmetrize_keeping_zeros<F: Scalar>(a: &mut Array2<F>) {
    let p = a.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if a[[i, j]] == F::zero() || a[[j, i]] == F::zero() {
                a[[i, j]] = F::zero();
                a[[j, i]] = F::zero();
            }
        }
    }
    symmetrize(a);
}

/// Largest violation of the optimality conditions at `Ω`, in the `n`-weighted scale.
pub fn kkt_residual<F: Scalar>(omega: ArrayView2<'_, F>, problem: &GlassoProblem<F>) -> Result<F> {
    let p = problem.dim();
    let w = Cholesky::new(omega)?.inverse();
    let n = problem.n;
    let mut worst = F::zero();
    for i in 0..p {
        for j in 0..p {
            let g = n * w[[i, j]] - problem.scatter[[i, j]];
            let v = if i == j {
                (g - problem.diag_rate).abs()
            } else {
                let pen = problem.penalties[[i, j]];
                let o = omega[[i, j]];
                if o != F::zero() {
                    (g - pen * o.signum()).abs()
                } else {
                    (g.abs() - pen).max(F::zero())
                }
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
