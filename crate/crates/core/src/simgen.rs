//! Synthetic multi-group networks, precision matrices and count data.
//!
//! Every random draw comes from a ChaCha8 stream selected by
//! `(purpose, group, index)` under the master seed, so outputs do not depend
//! on how work is split across threads.

use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Cholesky};
use crate::model::GroupData;

/// Latent log-rates are clamped here before exponentiation.
pub const LATENT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    SharedGraph = 1,
    GroupGraph = 2,
    Hubs = 3,
    Weights = 4,
    Beta = 5,
    Observation = 6,
    Derive = 7,
}

/// Independent RNG stream for `(purpose, group, index)`.
pub fn stream_rng(seed: u64, purpose: Purpose, group: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((purpose as u64) << 56) | ((group as u64 & 0xff_ffff) << 32) | (index as u64 & 0xffff_ffff);
    rng.set_stream(stream);
    rng
}

/// Per-group sub-seed, used when a lower-level generator is called once per
/// group.
pub fn group_seed(seed: u64, purpose: Purpose, group: usize) -> u64 {
    stream_rng(seed, Purpose::Derive, group, purpose as usize).random()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Shared Erdős–Rényi graph with probability `0.1/s` masked by per-group
    /// graphs with probability `s`.
    ErShared,
    Blocked,
    Hub,
    ScaleFree,
    SmallWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub blocks: usize,
    pub block_prob: f64,
    pub hub_fraction: f64,
    pub hub_prob: f64,
    /// Preferential-attachment counts as fractions of `p`.
    pub ba_shared: f64,
    pub ba_group: f64,
    /// Ring degrees as fractions of `p`.
    pub ws_shared: f64,
    pub ws_group: f64,
    pub rewire: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            blocks: 5,
            block_prob: 0.8,
            hub_fraction: 0.1,
            hub_prob: 0.8,
            ba_shared: 1.0 / 8.0,
            ba_group: 0.5,
            ws_shared: 0.2,
            ws_group: 0.25,
            rewire: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub p: usize,
    pub k: usize,
    /// Similarity for `ErShared`, signal strength otherwise.
    pub s: f64,
    pub params: GraphParams,
}

impl GraphSpec {
    pub fn new(kind: GraphKind, p: usize, k: usize, s: f64) -> Result<Self> {
        let spec = Self {
            kind,
            p,
            k,
            s,
            params: GraphParams::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidParameter(format!("p must be at least 2, got {}", self.p)));
        }
        if self.k < 1 {
            return Err(Error::InvalidParameter("number of groups must be at least 1".into()));
        }
        let ok = match self.kind {
            GraphKind::ErShared => self.s > 0.1 && self.s < 1.0,
            _ => self.s > 0.0 && self.s < 1.0,
        };
        if !ok {
            let range = if self.kind == GraphKind::ErShared { "(0.1, 1)" } else { "(0, 1)" };
            return Err(Error::InvalidParameter(format!("s = {} is outside {range}", self.s)));
        }
        let pr = &self.params;
        let probs = [pr.block_prob, pr.hub_fraction, pr.hub_prob, pr.rewire];
        if pr.blocks == 0 || probs.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidParameter("graph parameters out of range".into()));
        }
        Ok(())
    }
}

/// Distribution of the weight matrix `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSpec {
    pub diag_range: (f64, f64),
    /// Magnitude range; the sign is symmetric.
    pub offdiag_range: (f64, f64),
    pub strength: f64,
    pub ridge: f64,
}

impl PrecisionSpec {
    /// Diagonal `U(0.8, 1.2)`, off-diagonal `±U(0.2, 0.5)`.
    pub fn shared_sparsity() -> Self {
        Self {
            diag_range: (0.8, 1.2),
            offdiag_range: (0.2, 0.5),
            strength: 1.0,
            ridge: 0.01,
        }
    }

    /// Diagonal `U(1, 1.5)`, off-diagonal `±U(0.3, 0.8)·strength`.
    pub fn structured(strength: f64) -> Self {
        Self {
            diag_range: (1.0, 1.5),
            offdiag_range: (0.3, 0.8),
            strength,
            ridge: 0.01,
        }
    }

    pub fn for_graph(spec: &GraphSpec) -> Self {
        match spec.kind {
            GraphKind::ErShared => Self::shared_sparsity(),
            _ => Self::structured(spec.s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (dl, dh) = self.diag_range;
        let (ol, oh) = self.offdiag_range;
        if !(dl <= dh && ol <= oh && ol > 0.0 && self.strength > 0.0 && self.ridge > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid precision spec {self:?}")));
        }
        Ok(())
    }
}

fn empty(p: usize) -> Array2<u8> {
    Array2::zeros((p, p))
}

fn set_edge(a: &mut Array2<u8>, i: usize, j: usize) {
    a[[i, j]] = 1;
    a[[j, i]] = 1;
}

fn erdos_renyi(p: usize, prob: f64, rng: &mut ChaCha8Rng) -> Array2<u8> {
    let mut a = empty(p);
    for i in 0..p {
        for j in i + 1..p {
            if rng.random_bool(prob) {
                set_edge(&mut a, i, j);
            }
        }
    }
    a
}

fn random_subset(pool: &[usize], m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut picked = Vec::with_capacity(m);
    while picked.len() < m {
        let x = *pool.choose(rng).expect("non-empty pool");
        if !picked.contains(&x) {
            picked.push(x);
        }
    }
    picked
}

/// Barabási–Albert graph grown from a star on `m + 1` nodes.
pub fn barabasi_albert(p: usize, m: usize, rng: &mut ChaCha8Rng) -> Array2<u8> {
    let m = m.clamp(1, p - 1);
    let mut a = empty(p);
    let mut repeated = Vec::new();
    for leaf in 1..=m {
        set_edge(&mut a, 0, leaf);
        repeated.extend([0, leaf]);
    }
    for source in m + 1..p {
        let targets = random_subset(&repeated, m, rng);
        for &t in &targets {
            set_edge(&mut a, source, t);
        }
        repeated.extend(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
    }
    a
}

/// Watts–Strogatz ring with `k` nearest neighbours and rewiring
/// probability `beta`.
pub fn watts_strogatz(p: usize, k: usize, beta: f64, rng: &mut ChaCha8Rng) -> Array2<u8> {
    let mut a = empty(p);
    if k >= p {
        for i in 0..p {
            for j in i + 1..p {
                set_edge(&mut a, i, j);
            }
        }
        return a;
    }
    let half = k / 2;
    for u in 0..p {
        for j in 1..=half {
            set_edge(&mut a, u, (u + j) % p);
        }
    }
    let nodes: Vec<usize> = (0..p).collect();
    for j in 1..=half {
        for u in 0..p {
            let v = (u + j) % p;
            if rng.random::<f64>() < beta {
                let mut w = *nodes.choose(rng).expect("p >= 2");
                while w == u || a[[u, w]] == 1 {
                    w = *nodes.choose(rng).expect("p >= 2");
                    let degree = a.row(u).iter().filter(|&&x| x == 1).count();
                    if degree >= p - 1 {
                        break;
                    }
                }
                if w != u && a[[u, w]] == 0 {
                    a[[u, v]] = 0;
                    a[[v, u]] = 0;
                    set_edge(&mut a, u, w);
                }
            }
        }
    }
    a
}

fn positive_round(x: f64) -> usize {
    (x.round() as usize).max(1)
}

fn even_round(x: f64, p: usize) -> usize {
    let k = 2 * ((x / 2.0).round() as usize).max(1);
    let cap = if (p - 1).is_multiple_of(2) { p - 1 } else { p - 2 };
    k.min(cap.max(2))
}

fn hadamard(a: &Array2<u8>, b: &Array2<u8>) -> Array2<u8> {
    a * b
}

/// `K` symmetric binary adjacency matrices with zero diagonals.
pub fn gen_adjacency(spec: &GraphSpec, seed: u64) -> Result<Vec<Array2<u8>>> {
    spec.validate()?;
    let (p, pr) = (spec.p, &spec.params);
    let group_rng = |k: usize| stream_rng(seed, Purpose::GroupGraph, k, 0);
    let mut shared_rng = stream_rng(seed, Purpose::SharedGraph, 0, 0);
    let out = match spec.kind {
        GraphKind::ErShared => {
            let shared = erdos_renyi(p, 0.1 / spec.s, &mut shared_rng);
            (0..spec.k)
                .map(|k| hadamard(&shared, &erdos_renyi(p, spec.s, &mut group_rng(k))))
                .collect()
        }
        GraphKind::Blocked => {
            let block = |i: usize| i * pr.blocks / p;
            (0..spec.k)
                .map(|k| {
                    let mut rng = group_rng(k);
                    let mut a = empty(p);
                    for i in 0..p {
                        for j in i + 1..p {
                            if block(i) == block(j) && rng.random_bool(pr.block_prob) {
                                set_edge(&mut a, i, j);
                            }
                        }
                    }
                    a
                })
                .collect()
        }
        GraphKind::Hub => {
            let count = positive_round(pr.hub_fraction * p as f64).min(p);
            let mut is_hub = vec![false; p];
            for h in sample_indices(&mut stream_rng(seed, Purpose::Hubs, 0, 0), p, count) {
                is_hub[h] = true;
            }
            (0..spec.k)
                .map(|k| {
                    let mut rng = group_rng(k);
                    let mut a = empty(p);
                    for i in 0..p {
                        for j in i + 1..p {
                            if (is_hub[i] || is_hub[j]) && rng.random_bool(pr.hub_prob) {
                                set_edge(&mut a, i, j);
                            }
                        }
                    }
                    a
                })
                .collect()
        }
        GraphKind::ScaleFree => {
            let shared = barabasi_albert(p, positive_round(pr.ba_shared * p as f64), &mut shared_rng);
            let m = positive_round(pr.ba_group * p as f64);
            (0..spec.k)
                .map(|k| hadamard(&shared, &barabasi_albert(p, m, &mut group_rng(k))))
                .collect()
        }
        GraphKind::SmallWorld => {
            let shared = watts_strogatz(p, even_round(pr.ws_shared * p as f64, p), pr.rewire, &mut shared_rng);
            let kg = even_round(pr.ws_group * p as f64, p);
            (0..spec.k)
                .map(|k| hadamard(&shared, &watts_strogatz(p, kg, pr.rewire, &mut group_rng(k))))
                .collect()
        }
    };
    Ok(out)
}

/// Draws `B` from its stream: the diagonal first, then every `i < j` weight
/// in row-major order whether or not the pair is an edge.
pub fn draw_weights(p: usize, pspec: &PrecisionSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut b = Array2::<f64>::zeros((p, p));
    let (dl, dh) = pspec.diag_range;
    let (ol, oh) = pspec.offdiag_range;
    for i in 0..p {
        b[[i, i]] = dl + (dh - dl) * rng.random::<f64>();
    }
    for i in 0..p {
        for j in i + 1..p {
            let magnitude = ol + (oh - ol) * rng.random::<f64>();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let w = sign * magnitude * pspec.strength;
            b[[i, j]] = w;
            b[[j, i]] = w;
        }
    }
    b
}

/// `Ω = (A + I) ⊙ B + εI` with `ε = max(−λ_min((A + I) ⊙ B), 0) + ridge`.
pub fn precision_from_adjacency(adjacency: &Array2<u8>, pspec: &PrecisionSpec, seed: u64) -> Result<Array2<f64>> {
    pspec.validate()?;
    let p = adjacency.nrows();
    if adjacency.ncols() != p {
        return Err(Error::Shape(format!("adjacency is {:?}", adjacency.dim())));
    }
    let b = draw_weights(p, pspec, &mut stream_rng(seed, Purpose::Weights, 0, 0));
    let mut omega = Array2::<f64>::zeros((p, p));
    for ((i, j), o) in omega.indexed_iter_mut() {
        if i == j || adjacency[[i, j]] != 0 {
            *o = b[[i, j]];
        }
    }
    let eps = (-min_eigenvalue(omega.view())).max(0.0) + pspec.ridge;
    for i in 0..p {
        omega[[i, i]] += eps;
    }
    Ok(omega)
}

/// `p × d` coefficients with i.i.d. standard normal entries.
pub fn sample_beta(p: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, Purpose::Beta, 0, 0);
    Array2::from_shape_simple_fn((p, d), || rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountModel {
    Poisson,
    /// Multinomial with size `2p` and softmax probabilities of the latent row.
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub n: usize,
    pub d: usize,
    /// `n × p`; zeros when absent.
    pub offsets: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct PlnSample {
    pub data: GroupData<f64>,
    pub latent: Array2<f64>,
    /// Latent entries that hit [`LATENT_CLAMP`].
    pub clamped: usize,
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// One draw from `Multinomial(size, q)` by sequential conditional binomials.
pub fn multinomial(size: u64, q: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0u64; q.len()];
    let mut remaining = size;
    let mut mass = 1.0f64;
    for (j, &qj) in q.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == q.len() {
            out[j] = remaining;
            break;
        }
        let prob = if mass > 0.0 { (qj / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = Binomial::new(remaining, prob).expect("probability in [0, 1]").sample(rng);
        out[j] = draw;
        remaining -= draw;
        mass -= qj;
    }
    out
}

fn sample_counts(
    omega: &Array2<f64>,
    beta: &Array2<f64>,
    spec: &SampleSpec,
    seed: u64,
    model: CountModel,
) -> Result<PlnSample> {
    let p = omega.nrows();
    let (n, d) = (spec.n, spec.d);
    if beta.dim() != (p, d) {
        return Err(Error::Shape(format!("beta is {:?}, expected ({p}, {d})", beta.dim())));
    }
    let offsets = match &spec.offsets {
        Some(o) if o.dim() != (n, p) => {
            return Err(Error::Shape(format!("offsets are {:?}, expected ({n}, {p})", o.dim())))
        }
        Some(o) => o.clone(),
        None => Array2::zeros((n, p)),
    };
    let covariance = Cholesky::new(omega.view())?.inverse();
    let chol = Cholesky::new(covariance.view())?;
    let lower = chol.lower();

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<u64>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, Purpose::Observation, 0, i);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let e: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let mut clamped = 0;
            let x: Vec<f64> = (0..p)
                .map(|j| {
                    let mean = offsets[[i, j]] + (0..d).map(|c| beta[[j, c]] * z[c]).sum::<f64>();
                    let noise: f64 = (0..=j).map(|l| lower[[j, l]] * e[l]).sum();
                    let v = mean + noise;
                    if v > LATENT_CLAMP {
                        clamped += 1;
                        LATENT_CLAMP
                    } else {
                        v
                    }
                })
                .collect();
            let y = match model {
                CountModel::Poisson => x
                    .iter()
                    .map(|&v| Poisson::new(v.exp()).expect("finite positive rate").sample(&mut rng) as u64)
                    .collect(),
                CountModel::Multinomial => multinomial(2 * p as u64, &softmax(&x), &mut rng),
            };
            (z, x, y, clamped)
        })
        .collect();

    let mut counts = Array2::<u64>::zeros((n, p));
    let mut covariates = Array2::<f64>::zeros((n, d));
    let mut latent = Array2::<f64>::zeros((n, p));
    let mut clamped = 0;
    for (i, (z, x, y, c)) in rows.into_iter().enumerate() {
        covariates.row_mut(i).assign(&Array1::from(z));
        latent.row_mut(i).assign(&Array1::from(x));
        counts.row_mut(i).assign(&Array1::from(y));
        clamped += c;
    }
    Ok(PlnSample {
        data: GroupData::new(counts, covariates, offsets)?,
        latent,
        clamped,
    })
}

/// `X ~ N(o + zβᵀ, Ω⁻¹)`, `y ~ Poisson(exp X)`, `z` i.i.d. standard normal.
pub fn sample_pln(omega: &Array2<f64>, beta: &Array2<f64>, spec: &SampleSpec, seed: u64) -> Result<PlnSample> {
    sample_counts(omega, beta, spec, seed, CountModel::Poisson)
}

/// Same latent draw as [`sample_pln`], but each row of counts is
/// `Multinomial(2p, softmax(Xᵢ))`.
pub fn sample_multinomial_misspec(
    omega: &Array2<f64>,
    beta: &Array2<f64>,
    spec: &SampleSpec,
    seed: u64,
) -> Result<PlnSample> {
    sample_counts(omega, beta, spec, seed, CountModel::Multinomial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub graph: GraphSpec,
    pub precision: PrecisionSpec,
    pub n: usize,
    pub d: usize,
    pub model: CountModel,
}

impl SimulationSpec {
    pub fn new(graph: GraphSpec, n: usize) -> Self {
        Self {
            precision: PrecisionSpec::for_graph(&graph),
            graph,
            n,
            d: 1,
            model: CountModel::Poisson,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub groups: Vec<GroupData<f64>>,
    pub adjacency: Vec<Array2<u8>>,
    pub omegas: Vec<Array2<f64>>,
    pub betas: Vec<Array2<f64>>,
    pub clamped: usize,
}

/// Full pipeline: graphs, precision matrices, coefficients and counts.
pub fn simulate(spec: &SimulationSpec, seed: u64) -> Result<Simulation> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    let adjacency = gen_adjacency(&spec.graph, seed)?;
    let per_group: Vec<(Array2<f64>, Array2<f64>, PlnSample)> = adjacency
        .par_iter()
        .enumerate()
        .map(|(k, a)| {
            let omega = precision_from_adjacency(a, &spec.precision, group_seed(seed, Purpose::Weights, k))?;
            let beta = sample_beta(spec.graph.p, spec.d, group_seed(seed, Purpose::Beta, k));
            let sample_spec = SampleSpec {
                n: spec.n,
                d: spec.d,
                offsets: None,
            };
            let s = sample_counts(&omega, &beta, &sample_spec, group_seed(seed, Purpose::Observation, k), spec.model)?;
            Ok((omega, beta, s))
        })
        .collect::<Result<_>>()?;
    let mut sim = Simulation {
        groups: Vec::new(),
        adjacency,
        omegas: Vec::new(),
        betas: Vec::new(),
        clamped: 0,
    };
    for (omega, beta, s) in per_group {
        sim.omegas.push(omega);
        sim.betas.push(beta);
        sim.clamped += s.clamped;
        sim.groups.push(s.data);
    }
    Ok(sim)
}
