//! Simultaneous estimation of sparse precision matrices for several groups
//! of count data under a Poisson log-normal model.
//!
//! Counts `y_ij ~ Poisson(exp X_ij)` with latent `Xᵢ ~ N(oᵢ + βzᵢ, Ω⁻¹)` per
//! group. A spike-and-slab Laplace prior on the off-diagonal entries ties the
//! groups' sparsity patterns together. Fitting alternates an ADMM variational
//! E-step with a weighted graphical lasso M-step; hyperparameters are chosen
//! by extended BIC over a grid.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod admm;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod simgen;
pub mod vem;
pub mod wglasso;

pub use admm::{AdmmConfig, AdmmState, MuSolver};
pub use error::{Error, Result};
pub use metrics::{Confusion, EdgeScores, EdgeSet, EDGE_THRESHOLD};
pub use model::{
    initialize, CountDataset, FitConfig, FitReport, GroupData, HyperparameterRecord, Hyperparameters, ModelState,
    PhaseTimings, VariationalState,
};
pub use scalar::Scalar;
pub use vem::{default_grid, fit, grid_fit, grid_fit_separately, FitOutput, GridFit, GridPoint};
pub use wglasso::{GlassoFit, GlassoProblem};

pub type Dataset = CountDataset<f64>;
pub type Group = GroupData<f64>;
pub type Model = ModelState<f64>;
pub type Variational = VariationalState<f64>;
pub type Hyper = Hyperparameters<f64>;
pub type Config = FitConfig<f64>;
pub type Admm = AdmmConfig<f64>;
pub type Fit = FitOutput<f64>;
pub type Grid = GridFit<f64>;
pub type Glasso = GlassoProblem<f64>;
