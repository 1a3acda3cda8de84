//! Domain types shared by every stage: grouped count data, model and
//! variational parameters, hyperparameters, solver controls and reports.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::Scalar;

/// One group's observations: `n_k` rows of counts, covariates and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData<F> {
    /// `n_k × p` non-negative integer counts.
    pub counts: Array2<u64>,
    /// `n_k × d` covariates.
    pub covariates: Array2<F>,
    /// `n_k × p` log-scale offsets.
    pub offsets: Array2<F>,
}

impl<F: Scalar> GroupData<F> {
    pub fn new(counts: Array2<u64>, covariates: Array2<F>, offsets: Array2<F>) -> Result<Self> {
        let n = counts.nrows();
        if covariates.nrows() != n || offsets.nrows() != n {
            return Err(Error::Shape(format!(
                "counts have {} rows, covariates {}, offsets {}",
                n,
                covariates.nrows(),
                offsets.nrows()
            )));
        }
        if offsets.ncols() != counts.ncols() {
            return Err(Error::Shape(format!(
                "counts have {} columns but offsets have {}",
                counts.ncols(),
                offsets.ncols()
            )));
        }
        Ok(Self {
            counts,
            covariates,
            offsets,
        })
    }

    /// Intercept-only covariates and zero offsets.
    pub fn from_counts(counts: Array2<u64>) -> Self {
        let (n, p) = counts.dim();
        Self {
            counts,
            covariates: Array2::from_elem((n, 1), F::one()),
            offsets: Array2::zeros((n, p)),
        }
    }

    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    pub fn p(&self) -> usize {
        self.counts.ncols()
    }

    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn counts_as_scalar(&self) -> Array2<F> {
        self.counts.mapv(|c| F::lit(c as f64))
    }

    /// `λ = o + z βᵀ`, one row per observation.
    pub fn means(&self, beta: ArrayView2<'_, F>) -> Array2<F> {
        &self.offsets + &self.covariates.dot(&beta.t())
    }
}

/// K groups sharing the gene dimension `p` and covariate dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset<F> {
    groups: Vec<GroupData<F>>,
}

impl<F: Scalar> CountDataset<F> {
    pub fn new(groups: Vec<GroupData<F>>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidParameter("dataset needs at least one group".into()))?;
        let (p, d) = (first.p(), first.d());
        for (k, g) in groups.iter().enumerate() {
            if g.p() != p {
                return Err(Error::DimensionMismatch {
                    group: k + 1,
                    what: "p",
                    found: g.p(),
                    expected: p,
                });
            }
            if g.d() != d {
                return Err(Error::DimensionMismatch {
                    group: k + 1,
                    what: "d",
                    found: g.d(),
                    expected: d,
                });
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[GroupData<F>] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &GroupData<F> {
        &self.groups[k]
    }

    pub fn into_groups(self) -> Vec<GroupData<F>> {
        self.groups
    }

    /// Number of groups `K`.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.groups[0].p()
    }

    pub fn d(&self) -> usize {
        self.groups[0].d()
    }

    pub fn total_observations(&self) -> usize {
        self.groups.iter().map(GroupData::n).sum()
    }

    /// A single-group dataset holding a copy of group `k`.
    pub fn single_group(&self, k: usize) -> Self {
        Self {
            groups: vec![self.groups[k].clone()],
        }
    }
}

/// Per-group precision matrices `Ω⁽ᵏ⁾` (p × p) and coefficients `β⁽ᵏ⁾` (p × d).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<F> {
    pub omegas: Vec<Array2<F>>,
    pub betas: Vec<Array2<F>>,
}

impl<F: Scalar> ModelState<F> {
    /// Checks symmetry and positive definiteness of every precision matrix.
    pub fn validate(&self) -> Result<()> {
        for omega in &self.omegas {
            if crate::linalg::max_asymmetry(omega.view()) > F::lit(1e-10) {
                return Err(Error::InvalidParameter("precision matrix is not symmetric".into()));
            }
            Cholesky::new(omega.view())?;
        }
        Ok(())
    }
}

/// Mean-field Gaussian parameters of the latent log-rates, per group `n_k × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<F> {
    pub means: Vec<Array2<F>>,
    pub variances: Vec<Array2<F>>,
}

/// Spike-and-slab hyperparameters.
///
/// `tau = +∞` removes the diagonal penalty entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters<F> {
    pub p0: F,
    pub v0: F,
    pub v1: F,
    pub tau: F,
}

impl<F: Scalar> Hyperparameters<F> {
    pub fn new(p0: F, v0: F, v1: F, tau: F) -> Result<Self> {
        let h = Self { p0, v0, v1, tau };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > F::zero() && self.p0 < F::one()) {
            return Err(Error::InvalidParameter(format!("p0 = {} must lie in (0, 1)", self.p0)));
        }
        if !(self.v0 > F::zero() && self.v1 > self.v0) || !self.v1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < v0 < v1 < inf, got v0 = {}, v1 = {}",
                self.v0, self.v1
            )));
        }
        if !(self.tau > F::zero()) {
            return Err(Error::InvalidParameter(format!("tau = {} must be positive", self.tau)));
        }
        Ok(())
    }

    /// Rate `2/τ` on the diagonal of the M-step objective; zero when `τ = ∞`.
    pub fn diag_rate(&self) -> F {
        if self.tau.is_infinite() {
            F::zero()
        } else {
            F::lit(2.0) / self.tau
        }
    }

    pub fn record(&self) -> HyperparameterRecord {
        HyperparameterRecord {
            p0: self.p0.to_f64_lossy(),
            v0: self.v0.to_f64_lossy(),
            v1: self.v1.to_f64_lossy(),
            tau: if self.tau.is_infinite() {
                None
            } else {
                Some(self.tau.to_f64_lossy())
            },
        }
    }
}

/// Serializable view of [`Hyperparameters`]; `tau: null` means infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterRecord {
    pub p0: f64,
    pub v0: f64,
    pub v1: f64,
    pub tau: Option<f64>,
}

/// Controls for the outer variational EM loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<F> {
    /// Maximum number of outer iterations `T`; zero returns the initialization.
    pub max_outer_iter: usize,
    /// Stop once the largest elementwise change in any `Ω⁽ᵏ⁾` is at most this.
    pub outer_tol: F,
    pub admm: AdmmConfig<F>,
    pub glasso_tol: F,
    pub glasso_max_sweeps: usize,
    /// Worker threads; 0 uses every available core.
    pub thread_count: usize,
}

impl<F: Scalar> Default for FitConfig<F> {
    fn default() -> Self {
        Self {
            max_outer_iter: 100,
            outer_tol: F::lit(1e-4),
            admm: AdmmConfig::default(),
            glasso_tol: F::lit(1e-6),
            glasso_max_sweeps: 200,
            thread_count: 0,
        }
    }
}

impl<F: Scalar> FitConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > F::zero() && self.glasso_tol > F::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.glasso_max_sweeps == 0 {
            return Err(Error::InvalidParameter("glasso_max_sweeps must be at least 1".into()));
        }
        self.admm.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub inclusion_secs: f64,
    pub variational_secs: f64,
    pub beta_scatter_secs: f64,
    pub glasso_secs: f64,
    pub total_secs: f64,
}

/// Outcome of one fit: convergence trace and per-group model-selection scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub hyperparameters: HyperparameterRecord,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Largest elementwise change across all `Ω⁽ᵏ⁾`, one entry per outer iteration.
    pub delta_trace: Vec<f64>,
    /// Observations whose ADMM solve hit its iteration cap, summed over iterations.
    pub admm_unconverged: usize,
    pub loglik: Vec<f64>,
    pub ebic: Vec<f64>,
    pub ebic_total: f64,
    pub edges: Vec<usize>,
    pub timings: PhaseTimings,
}

/// Starting point for the EM iterations.
///
/// `μ = log(y + 0.5)`, `σ² = 1.1`, `Ω = (μᵀμ / n_k + 0.01 I)⁻¹` and `β = 0`.
pub fn initialize<F: Scalar>(dataset: &CountDataset<F>) -> Result<(ModelState<F>, VariationalState<F>)> {
    let half = F::lit(0.5);
    let ridge = F::lit(0.01);
    let mut omegas = Vec::with_capacity(dataset.k());
    let mut betas = Vec::with_capacity(dataset.k());
    let mut means = Vec::with_capacity(dataset.k());
    let mut variances = Vec::with_capacity(dataset.k());
    for g in dataset.groups() {
        let (n, p) = (g.n(), g.p());
        let mu = g.counts.mapv(|c| (F::lit(c as f64) + half).ln());
        let mut gram = mu.t().dot(&mu) / F::from_usize_lossy(n.max(1));
        for j in 0..p {
            gram[[j, j]] += ridge;
        }
        let omega = Cholesky::new(gram.view())?.inverse();
        omegas.push(omega);
        betas.push(Array2::zeros((p, g.d())));
        variances.push(Array2::from_elem((n, p), F::lit(1.1)));
        means.push(mu);
    }
    Ok((ModelState { omegas, betas }, VariationalState { means, variances }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn rejects_mismatched_p() {
        let a = GroupData::<f64>::from_counts(Array2::zeros((2, 3)));
        let b = GroupData::<f64>::from_counts(Array2::zeros((2, 4)));
        let err = CountDataset::new(vec![a, b]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { group: 2, what: "p", .. }));
    }

    #[test]
    fn rejects_empty_dataset() {
        assert!(CountDataset::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn zero_count_initializes_to_log_half() {
        let g = GroupData::<f64>::from_counts(array![[0u64, 3], [1, 0]]);
        let ds = CountDataset::new(vec![g]).unwrap();
        let (_, var) = initialize(&ds).unwrap();
        assert_abs_diff_eq!(var.means[0][[0, 0]], -0.693_147_180_559_945_3, epsilon = 1e-15);
        assert!(var.variances[0].iter().all(|&s| s == 1.1));
    }

    #[test]
    fn scalar_initial_precision() {
        // 1 / (log(0.5)^2 + 0.01), evaluated with a 50-digit oracle.
        let expected = 2.038_931_297_436_744_2;
        let g = GroupData::<f64>::from_counts(array![[0u64]]);
        let ds = CountDataset::new(vec![g]).unwrap();
        let (model, _) = initialize(&ds).unwrap();
        assert_abs_diff_eq!(model.omegas[0][[0, 0]], expected, epsilon = 1e-12);
        assert_eq!(model.betas[0], Array2::<f64>::zeros((1, 1)));
    }

    #[test]
    fn initial_precision_is_positive_definite_and_deterministic() {
        let g = GroupData::<f64>::from_counts(array![[0u64, 5, 2], [1, 0, 0], [7, 7, 7]]);
        let ds = CountDataset::new(vec![g.clone(), g]).unwrap();
        let (m1, v1) = initialize(&ds).unwrap();
        let (m2, v2) = initialize(&ds).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
        m1.validate().unwrap();
    }

    #[test]
    fn infinite_tau_means_no_diagonal_rate() {
        let h = Hyperparameters::new(0.5, 0.1, 1.0, f64::INFINITY).unwrap();
        assert_eq!(h.diag_rate(), 0.0);
        assert_eq!(h.record().tau, None);
        let h = Hyperparameters::new(0.5, 0.1, 1.0, 4.0).unwrap();
        assert_eq!(h.diag_rate(), 0.5);
    }

    #[test]
    fn hyperparameter_invariants() {
        assert!(Hyperparameters::new(0.5, 1.0, 0.1, f64::INFINITY).is_err());
        assert!(Hyperparameters::new(1.0, 0.1, 1.0, f64::INFINITY).is_err());
        assert!(Hyperparameters::new(0.5, 0.0, 1.0, f64::INFINITY).is_err());
    }
}
