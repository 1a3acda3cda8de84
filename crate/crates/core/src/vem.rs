//! Outer variational EM loop.
//!
//! Each iteration:
//! 1. posterior inclusion probabilities `p_ij` from `Σ_k |Ω_ij⁽ᵏ⁾|` and the
//!    derived penalty matrix `P`;
//! 2. per observation, the ADMM mean update followed by the variance update;
//! 3. the regression coefficients `β⁽ᵏ⁾`;
//! 4. the scatter matrices `S⁽ᵏ⁾` with the new means `λ`;
//! 5. a weighted graphical lasso per group.
//!
//! Step 1 is the only cross-group coupling; it is reduced in ascending group
//! order so results do not depend on the number of worker threads.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::admm::{solve_sigma2, MuSolver};
use crate::error::{Error, Result};
use crate::linalg::{max_abs_diff, Cholesky};
use crate::metrics::{edge_set, EDGE_THRESHOLD};
use crate::model::{
    initialize, CountDataset, FitConfig, FitReport, GroupData, Hyperparameters, ModelState,
    PhaseTimings, VariationalState,
};
use crate::scalar::Scalar;
use crate::wglasso::{self, GlassoProblem};

/// Posterior inclusion probabilities and the penalties they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionState<F> {
    /// `p_ij`; the diagonal is unused and left at zero.
    pub probs: Array2<F>,
    /// `P_ij = p_ij/v1 + (1 − p_ij)/v0`; zero on the diagonal.
    pub penalties: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix<F> {
    pub value: Array2<F>,
    pub n: usize,
}

/// Posterior probability that an edge is in the slab, given the summed
/// magnitude `Σ_k |Ω_ij⁽ᵏ⁾|` over `k` groups.
pub fn posterior_inclusion<F: Scalar>(abs_sum: F, k: usize, hyper: &Hyperparameters<F>) -> F {
    let Hyperparameters { p0, v0, v1, .. } = *hyper;
    let log_odds_out = ((F::one() - p0) / p0).ln()
        + F::from_usize_lossy(k) * (v1 / v0).ln()
        - (v0.recip() - v1.recip()) * abs_sum;
    F::one() / (F::one() + log_odds_out.exp())
}

pub fn penalty_matrix<F: Scalar>(probs: ArrayView2<'_, F>, hyper: &Hyperparameters<F>) -> Array2<F> {
    let (inv1, inv0) = (hyper.v1.recip(), hyper.v0.recip());
    let mut pen = probs.mapv(|q| q * inv1 + (F::one() - q) * inv0);
    for i in 0..pen.nrows() {
        pen[[i, i]] = F::zero();
    }
    pen
}

/// Step 1: `p_ij` and `P_ij` from the current precision matrices.
pub fn inclusion_state<F: Scalar>(omegas: &[Array2<F>], hyper: &Hyperparameters<F>) -> InclusionState<F> {
    let p = omegas[0].nrows();
    let mut abs_sum = Array2::<F>::zeros((p, p));
    for omega in omegas {
        abs_sum.zip_mut_with(omega, |acc, &o| *acc += o.abs());
    }
    let k = omegas.len();
    let mut probs = abs_sum.mapv(|a| posterior_inclusion(a, k, hyper));
    for i in 0..p {
        probs[[i, i]] = F::zero();
    }
    let penalties = penalty_matrix(probs.view(), hyper);
    InclusionState { probs, penalties }
}

/// Least-squares coefficients `β = (μ − o)ᵀ z (zᵀz)⁻¹`, p × d.
///
/// Rows are observations in all three inputs.
pub fn update_beta<F: Scalar>(
    mu: ArrayView2<'_, F>,
    offsets: ArrayView2<'_, F>,
    z: ArrayView2<'_, F>,
) -> Result<Array2<F>> {
    let d = z.ncols();
    let gram = z.t().dot(&z);
    let factor = Cholesky::new(gram.view()).map_err(|_| Error::RankDeficient { d })?;
    let max_diag = gram.diag().iter().fold(F::zero(), |m, &v| m.max(v));
    let floor = F::epsilon() * F::lit(64.0) * max_diag;
    if factor.lower().diag().iter().any(|&l| l * l <= floor) {
        return Err(Error::RankDeficient { d });
    }
    let cross = (&mu - &offsets).t().dot(&z);
    let mut beta = Array2::<F>::zeros(cross.dim());
    for (j, row) in cross.outer_iter().enumerate() {
        beta.row_mut(j).assign(&factor.solve(row));
    }
    Ok(beta)
}

/// `S = Σᵢ (μᵢ − λᵢ)(μᵢ − λᵢ)ᵀ + diag(Σᵢ σ²ᵢ)`.
pub fn scatter_matrix<F: Scalar>(
    mu: ArrayView2<'_, F>,
    sigma2: ArrayView2<'_, F>,
    lambda: ArrayView2<'_, F>,
) -> ScatterMatrix<F> {
    let resid = &mu - &lambda;
    let mut value = resid.t().dot(&resid);
    let var_sum = sigma2.sum_axis(Axis(0));
    for j in 0..value.nrows() {
        value[[j, j]] += var_sum[j];
    }
    crate::linalg::symmetrize(&mut value);
    ScatterMatrix {
        value,
        n: mu.nrows(),
    }
}

/// Expected complete-data log-likelihood under the variational posterior
/// (no entropy term), summed over the group's observations.
pub fn variational_loglik<F: Scalar>(
    group: &GroupData<F>,
    omega: ArrayView2<'_, F>,
    beta: ArrayView2<'_, F>,
    means: ArrayView2<'_, F>,
    variances: ArrayView2<'_, F>,
) -> Result<F> {
    let log_det = Cholesky::new(omega)?.log_det();
    let half = F::lit(0.5);
    let (n, p) = (group.n(), group.p());
    let mut poisson = F::zero();
    for ((&y, &m), &s) in group.counts.iter().zip(means.iter()).zip(variances.iter()) {
        let yf = F::lit(y as f64);
        poisson += yf * m - (m + half * s).exp() - (yf + F::one()).ln_gamma();
    }
    let lambda = group.means(beta);
    let scatter = scatter_matrix(means, variances, lambda.view());
    let trace: F = (&scatter.value * &omega).sum();
    let nf = F::from_usize_lossy(n);
    let two_pi = F::lit(2.0 * std::f64::consts::PI);
    Ok(poisson + half * nf * log_det - half * trace - half * nf * F::from_usize_lossy(p) * two_pi.ln())
}

/// `ln C(n, k)` through log-gamma.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Extended BIC of one group; the model-space term counts `p(p+1)/2` slots.
pub fn variational_ebic<F: Scalar>(loglik: F, edges: usize, p: usize, d: usize, n: usize, gamma: F) -> F {
    let slots = p * (p + 1) / 2;
    let params = F::from_usize_lossy(edges + p * d);
    F::lit(-2.0) * loglik
        + params * F::from_usize_lossy(n).ln()
        + gamma * F::lit(ln_binomial(slots, edges))
}

/// `{0.1, 0.25, 0.5, 1, 5} · sqrt(K log p / Σ n_k)`.
pub fn default_v0_candidates(k: usize, p: usize, total_n: usize) -> [f64; 5] {
    let scale = (k as f64 * (p as f64).ln() / total_n as f64).sqrt();
    [0.1, 0.25, 0.5, 1.0, 5.0].map(|c| c * scale)
}

/// Default search grid: `v1 = ratio · v0`, `p0 = 0.5`, `τ = ∞`.
pub fn default_grid<F: Scalar>(dataset: &CountDataset<F>, ratio: F) -> Vec<Hyperparameters<F>> {
    default_v0_candidates(dataset.k(), dataset.p(), dataset.total_observations())
        .iter()
        .map(|&v0| {
            let v0 = F::lit(v0);
            Hyperparameters {
                p0: F::lit(0.5),
                v0,
                v1: ratio * v0,
                tau: F::infinity(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitOutput<F> {
    pub model: ModelState<F>,
    pub variational: VariationalState<F>,
    pub report: FitReport,
}

/// Runs the variational EM from the standard initialization.
pub fn fit<F: Scalar>(
    dataset: &CountDataset<F>,
    hyper: &Hyperparameters<F>,
    config: &FitConfig<F>,
    gamma: F,
) -> Result<FitOutput<F>> {
    let (model, variational) = initialize(dataset)?;
    fit_from(dataset, hyper, config, gamma, model, variational)
}

/// Runs the variational EM from caller-supplied states.
pub fn fit_from<F: Scalar>(
    dataset: &CountDataset<F>,
    hyper: &Hyperparameters<F>,
    config: &FitConfig<F>,
    gamma: F,
    model: ModelState<F>,
    variational: VariationalState<F>,
) -> Result<FitOutput<F>> {
    hyper.validate()?;
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.thread_count)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run(dataset, hyper, config, gamma, model, variational))
}

struct GroupUpdate<F> {
    means: Array2<F>,
    variances: Array2<F>,
    unconverged: usize,
}

fn run<F: Scalar>(
    dataset: &CountDataset<F>,
    hyper: &Hyperparameters<F>,
    config: &FitConfig<F>,
    gamma: F,
    mut model: ModelState<F>,
    mut var: VariationalState<F>,
) -> Result<FitOutput<F>> {
    let started = Instant::now();
    let counts: Vec<Array2<F>> = dataset.groups().iter().map(GroupData::counts_as_scalar).collect();
    let mut timings = PhaseTimings::default();
    let mut delta_trace = Vec::new();
    let mut converged = false;
    let mut admm_unconverged = 0usize;

    for t in 0..config.max_outer_iter {
        let clock = Instant::now();
        let inclusion = inclusion_state(&model.omegas, hyper);
        timings.inclusion_secs += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let updates = variational_step(dataset, &counts, &model, &var, config, t)?;
        for (k, u) in updates.into_iter().enumerate() {
            admm_unconverged += u.unconverged;
            var.means[k] = u.means;
            var.variances[k] = u.variances;
        }
        timings.variational_secs += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let scatters: Vec<(Array2<F>, ScatterMatrix<F>)> = (0..dataset.k())
            .into_par_iter()
            .map(|k| {
                let g = dataset.group(k);
                let beta = update_beta(var.means[k].view(), g.offsets.view(), g.covariates.view())
                    .map_err(|e| e.in_group(k + 1, t + 1))?;
                let lambda = g.means(beta.view());
                let s = scatter_matrix(var.means[k].view(), var.variances[k].view(), lambda.view());
                Ok((beta, s))
            })
            .collect::<Result<_>>()?;
        timings.beta_scatter_secs += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let omegas: Vec<Array2<F>> = scatters
            .par_iter()
            .enumerate()
            .map(|(k, (_, s))| {
                let problem = GlassoProblem {
                    scatter: s.value.clone(),
                    n: F::from_usize_lossy(s.n),
                    penalties: inclusion.penalties.clone(),
                    diag_rate: hyper.diag_rate(),
                    tol: config.glasso_tol,
                    max_sweeps: config.glasso_max_sweeps,
                };
                wglasso::solve(&problem, Some(&model.omegas[k]))
                    .map(|fit| fit.omega)
                    .map_err(|e| e.in_group(k + 1, t + 1))
            })
            .collect::<Result<_>>()?;
        timings.glasso_secs += clock.elapsed().as_secs_f64();

        let delta = model
            .omegas
            .iter()
            .zip(&omegas)
            .map(|(old, new)| max_abs_diff(old.view(), new.view()))
            .fold(F::zero(), |m, d| if d > m || d.is_nan() { d } else { m });
        model.omegas = omegas;
        model.betas = scatters.into_iter().map(|(b, _)| b).collect();
        delta_trace.push(delta.to_f64_lossy());
        if delta <= config.outer_tol {
            converged = true;
            break;
        }
    }

    let mut loglik = Vec::with_capacity(dataset.k());
    let mut ebic = Vec::with_capacity(dataset.k());
    let mut edges = Vec::with_capacity(dataset.k());
    for (k, g) in dataset.groups().iter().enumerate() {
        let ll = variational_loglik(
            g,
            model.omegas[k].view(),
            model.betas[k].view(),
            var.means[k].view(),
            var.variances[k].view(),
        )?;
        let e = edge_set(model.omegas[k].view(), F::lit(EDGE_THRESHOLD)).len();
        loglik.push(ll.to_f64_lossy());
        ebic.push(variational_ebic(ll, e, g.p(), g.d(), g.n(), gamma).to_f64_lossy());
        edges.push(e);
    }
    timings.total_secs = started.elapsed().as_secs_f64();
    let report = FitReport {
        hyperparameters: hyper.record(),
        outer_iterations: delta_trace.len(),
        converged,
        delta_trace,
        admm_unconverged,
        ebic_total: ebic.iter().sum(),
        loglik,
        ebic,
        edges,
        timings,
    };
    Ok(FitOutput {
        model,
        variational: var,
        report,
    })
}

/// Step 2 for every `(k, i)` pair: ADMM mean with the previous variances,
/// then the variances given the new mean.
fn variational_step<F: Scalar>(
    dataset: &CountDataset<F>,
    counts: &[Array2<F>],
    model: &ModelState<F>,
    var: &VariationalState<F>,
    config: &FitConfig<F>,
    t: usize,
) -> Result<Vec<GroupUpdate<F>>> {
    let solvers: Vec<MuSolver<'_, F>> = model
        .omegas
        .iter()
        .enumerate()
        .map(|(k, om)| MuSolver::new(om.view(), config.admm).map_err(|e| e.in_group(k + 1, t + 1)))
        .collect::<Result<_>>()?;
    let lambdas: Vec<Array2<F>> = dataset
        .groups()
        .iter()
        .zip(&model.betas)
        .map(|(g, b)| g.means(b.view()))
        .collect();
    let tasks: Vec<(usize, usize)> = dataset
        .groups()
        .iter()
        .enumerate()
        .flat_map(|(k, g)| (0..g.n()).map(move |i| (k, i)))
        .collect();

    let rows: Vec<(Array1<F>, Array1<F>, bool)> = tasks
        .par_iter()
        .map(|&(k, i)| {
            let fail = |e: Error| e.in_group(k + 1, t + 1);
            let state = solvers[k]
                .solve(
                    counts[k].row(i),
                    lambdas[k].row(i),
                    var.variances[k].row(i),
                    var.means[k].row(i),
                )
                .map_err(fail)?;
            let omega = &model.omegas[k];
            let mu = state.mu_m;
            let mut s2 = Array1::<F>::zeros(mu.len());
            for j in 0..mu.len() {
                s2[j] = solve_sigma2(mu[j], omega[[j, j]], &config.admm).map_err(fail)?;
            }
            Ok((mu, s2, state.converged))
        })
        .collect::<Result<_>>()?;

    let mut out: Vec<GroupUpdate<F>> = dataset
        .groups()
        .iter()
        .map(|g| GroupUpdate {
            means: Array2::zeros((g.n(), g.p())),
            variances: Array2::zeros((g.n(), g.p())),
            unconverged: 0,
        })
        .collect();
    for (&(k, i), (mu, s2, ok)) in tasks.iter().zip(rows) {
        out[k].means.row_mut(i).assign(&mu);
        out[k].variances.row_mut(i).assign(&s2);
        if !ok {
            out[k].unconverged += 1;
        }
    }
    Ok(out)
}

/// One evaluated grid point.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridPoint {
    pub hyperparameters: crate::model::HyperparameterRecord,
    pub ebic_total: Option<f64>,
    pub selected: bool,
    pub report: Option<FitReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridFit<F> {
    pub best_index: usize,
    pub best: FitOutput<F>,
    pub points: Vec<GridPoint>,
}

/// Fits every grid point and keeps the one with the smallest total EBIC;
/// ties go to the larger `v0`.
pub fn grid_fit<F: Scalar>(
    dataset: &CountDataset<F>,
    grid: &[Hyperparameters<F>],
    gamma: F,
    config: &FitConfig<F>,
) -> Result<GridFit<F>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("hyperparameter grid is empty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, FitOutput<F>)> = None;
    let mut failures = Vec::new();
    for (idx, hyper) in grid.iter().enumerate() {
        match fit(dataset, hyper, config, gamma) {
            Ok(out) => {
                let score = out.report.ebic_total;
                let better = match &best {
                    None => !score.is_nan(),
                    Some((b, prev)) => {
                        let prev_score = prev.report.ebic_total;
                        score < prev_score || (score == prev_score && hyper.v0 > grid[*b].v0)
                    }
                };
                points.push(GridPoint {
                    hyperparameters: hyper.record(),
                    ebic_total: Some(score),
                    selected: false,
                    report: Some(out.report.clone()),
                    error: None,
                });
                if better {
                    best = Some((idx, out));
                }
            }
            Err(e) => {
                failures.push(format!("v0 = {}: {e}", hyper.v0));
                points.push(GridPoint {
                    hyperparameters: hyper.record(),
                    ebic_total: None,
                    selected: false,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best_index, best) = best.ok_or(Error::GridFailed(failures))?;
    points[best_index].selected = true;
    Ok(GridFit {
        best_index,
        best,
        points,
    })
}

/// Each group on its own (`K = 1`) with its own default grid.
pub fn grid_fit_separately<F: Scalar>(
    dataset: &CountDataset<F>,
    ratio: F,
    gamma: F,
    config: &FitConfig<F>,
) -> Result<Vec<GridFit<F>>> {
    (0..dataset.k())
        .map(|k| {
            let single = dataset.single_group(k);
            let grid = default_grid(&single, ratio);
            grid_fit(&single, &grid, gamma, config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn hyper() -> Hyperparameters<f64> {
        Hyperparameters::new(0.5, 0.1, 1.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn inclusion_closed_forms() {
        assert_abs_diff_eq!(posterior_inclusion(0.0, 1, &hyper()), 1.0 / 11.0, epsilon = 1e-12);
        // 40-digit evaluation of the closed form.
        assert_abs_diff_eq!(posterior_inclusion(0.5, 2, &hyper()), 0.473_731_661_374_021_7, epsilon = 1e-12);
        let flat = Hyperparameters { p0: 0.3, v0: 0.4, v1: 0.4, tau: f64::INFINITY };
        for &(a, k) in &[(0.0, 1), (2.5, 3), (100.0, 7)] {
            assert_abs_diff_eq!(posterior_inclusion(a, k, &flat), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn penalty_boundaries() {
        let h = hyper();
        let pen = penalty_matrix(array![[0.0, 1.0, 0.5], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]].view(), &h);
        assert_abs_diff_eq!(pen[[0, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pen[[1, 2]], 10.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pen[[0, 2]], 5.5, epsilon = 1e-15);
        assert_eq!(pen[[0, 0]], 0.0);
    }

    #[test]
    fn beta_with_intercept_is_column_mean() {
        let mu = array![[1.0, 2.0], [3.0, -2.0], [5.0, 3.0]];
        let z = Array2::from_elem((3, 1), 1.0);
        let beta = update_beta(mu.view(), Array2::zeros((3, 2)).view(), z.view()).unwrap();
        assert_abs_diff_eq!(beta[[0, 0]], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(beta[[1, 0]], 1.0, epsilon = 1e-14);
        let zero = update_beta(mu.view(), mu.view(), z.view()).unwrap();
        assert!(zero.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn beta_matches_two_by_two_normal_equations() {
        let mu = array![[0.3, 1.2], [-0.7, 0.4], [1.1, -0.2], [0.0, 0.9], [2.2, 1.5], [-1.3, 0.1]];
        let o = array![[0.1, 0.0], [0.0, 0.2], [-0.1, 0.0], [0.3, 0.1], [0.0, 0.0], [0.2, -0.2]];
        let z = array![[1.0, 0.5], [1.0, -1.2], [1.0, 0.3], [1.0, 2.0], [1.0, -0.4], [1.0, 0.9]];
        let beta = update_beta(mu.view(), o.view(), z.view()).unwrap();
        // Explicit 2x2 inverse of the Gram matrix.
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for i in 0..6 {
            a += z[[i, 0]] * z[[i, 0]];
            b += z[[i, 0]] * z[[i, 1]];
            d += z[[i, 1]] * z[[i, 1]];
        }
        let det = a * d - b * b;
        for j in 0..2 {
            let (mut r0, mut r1) = (0.0, 0.0);
            for i in 0..6 {
                let r = mu[[i, j]] - o[[i, j]];
                r0 += r * z[[i, 0]];
                r1 += r * z[[i, 1]];
            }
            assert_abs_diff_eq!(beta[[j, 0]], (d * r0 - b * r1) / det, epsilon = 1e-10);
            assert_abs_diff_eq!(beta[[j, 1]], (a * r1 - b * r0) / det, epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_gram_is_rank_deficient() {
        let z = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let mu = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            update_beta(mu.view(), mu.view(), z.view()),
            Err(Error::RankDeficient { d: 2 })
        ));
    }

    #[test]
    fn scatter_special_cases() {
        let s = scatter_matrix(array![[1.0, 2.0]].view(), array![[0.3, 0.4]].view(), array![[1.0, 2.0]].view());
        assert_eq!(s.value, array![[0.3, 0.0], [0.0, 0.4]]);
        let s = scatter_matrix(array![[1.0, 0.0]].view(), array![[0.0, 0.0]].view(), array![[0.0, 0.0]].view());
        assert_eq!(s.value, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn scatter_matches_loop_summation() {
        let mu = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.5], [0.0, 2.0, 1.0]];
        let lam = array![[0.25, 0.0, 1.0], [1.0, 0.5, 0.0], [-0.5, 1.0, 0.5]];
        let s2 = array![[0.5, 0.25, 1.0], [0.125, 0.5, 0.25], [1.0, 1.0, 0.5]];
        let s = scatter_matrix(mu.view(), s2.view(), lam.view());
        let mut oracle = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    oracle[a][b] += (mu[[i, a]] - lam[[i, a]]) * (mu[[i, b]] - lam[[i, b]]);
                }
                oracle[a][a] += s2[[i, a]];
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(s.value[[a, b]], oracle[a][b]);
            }
        }
    }

    #[test]
    fn loglik_scalar_case() {
        let g = GroupData::new(array![[0u64]], array![[1.0]], array![[0.0]]).unwrap();
        let ll = variational_loglik(&g, array![[1.0]].view(), array![[0.0]].view(), array![[0.0]].view(), array![[1.0]].view()).unwrap();
        assert_abs_diff_eq!(ll, -3.067_659_803_904_800_9, epsilon = 1e-12);
    }

    #[test]
    fn loglik_quadratic_vanishes_when_mean_matches() {
        let z = array![[1.0], [1.0]];
        let o = array![[0.4, -0.2], [1.0, 0.3]];
        let beta = array![[0.5], [-0.5]];
        let counts = array![[2u64, 0], [1, 3]];
        let omega = array![[2.0, 0.3], [0.3, 1.0]];
        let var = array![[0.1, 0.2], [0.3, 0.4]];
        let value = |offsets: Array2<f64>| {
            let g = GroupData::new(counts.clone(), z.clone(), offsets).unwrap();
            let mu = g.means(beta.view());
            let ll = variational_loglik(&g, omega.view(), beta.view(), mu.view(), var.view()).unwrap();
            let mut poisson = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let y = counts[[i, j]] as f64;
                    poisson += y * mu[[i, j]] - (mu[[i, j]] + var[[i, j]] / 2.0).exp() - statrs::function::gamma::ln_gamma(y + 1.0);
                }
            }
            let trace: f64 = (0..2).map(|i| (0..2).map(|j| var[[i, j]] * omega[[j, j]]).sum::<f64>()).sum();
            (ll, poisson + Cholesky::new(omega.view()).unwrap().log_det() - 0.5 * trace - 2.0 * (2.0 * std::f64::consts::PI).ln())
        };
        let (ll, expect) = value(o.clone());
        assert_abs_diff_eq!(ll, expect, epsilon = 1e-12);
        let (ll, expect) = value(&o * 2.0);
        assert_abs_diff_eq!(ll, expect, epsilon = 1e-12);
    }

    #[test]
    fn log_det_term_of_scaled_identity() {
        let g = GroupData::new(array![[0u64, 0]], array![[1.0]], array![[0.0, 0.0]]).unwrap();
        let beta = Array2::zeros((2, 1));
        let mu = Array2::zeros((1, 2));
        let s2 = array![[1e-300, 1e-300]];
        let a = variational_loglik(&g, Array2::eye(2).view(), beta.view(), mu.view(), s2.view()).unwrap();
        let b = variational_loglik(&g, (Array2::eye(2) * 2.0).view(), beta.view(), mu.view(), s2.view()).unwrap();
        assert_abs_diff_eq!(b - a, 0.5 * 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ebic_cases() {
        assert_abs_diff_eq!(variational_ebic(0.0, 0, 2, 1, 10, 0.5), 2.0 * 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(variational_ebic(-100.0, 3, 4, 1, 50, 0.5), 229.777_906_909_388_05, epsilon = 1e-9);
        let bic = 2.0 * 12.5 + 5.0 * 30f64.ln();
        assert_abs_diff_eq!(variational_ebic(-12.5, 3, 2, 1, 30, 0.0), bic, epsilon = 1e-12);
    }

    #[test]
    fn default_v0_grid() {
        let v = default_v0_candidates(10, 20, 1000);
        let expect = [0.017_308_183_826_022_85, 0.043_270_459_565_057_13, 0.086_540_919_130_114_27, 0.173_081_838_260_228_5, 0.865_409_191_301_142_7];
        for (a, b) in v.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}
