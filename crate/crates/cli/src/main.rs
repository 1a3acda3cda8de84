use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use plnet::io::{self, count_group_files};
use plnet::metrics::{self, EdgeScores};
use plnet::simgen::{self, CountModel, GraphKind, GraphSpec, SimulationSpec};
use plnet::vem::{self, grid_fit, FitOutput, GridPoint};
use plnet::{Config, Dataset, FitReport, Hyper, HyperparameterRecord};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "plnet", version, about = "Sparse multi-group networks from count data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a grouped count dataset with known precision matrices.
    Simulate(SimulateArgs),
    /// Fit precision matrices to a dataset directory.
    Fit(FitArgs),
    /// Score estimates against truth files.
    Eval(EvalArgs),
    #[command(hide = true)]
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Er,
    Blocked,
    Hub,
    ScaleFree,
    SmallWorld,
}

impl From<Kind> for GraphKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Er => GraphKind::ErShared,
            Kind::Blocked => GraphKind::Blocked,
            Kind::Hub => GraphKind::Hub,
            Kind::ScaleFree => GraphKind::ScaleFree,
            Kind::SmallWorld => GraphKind::SmallWorld,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Counts {
    Poisson,
    Multinomial,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of variables.
    #[arg(long)]
    p: usize,
    #[arg(long = "k-groups")]
    k_groups: usize,
    /// Observations per group.
    #[arg(long)]
    n: usize,
    /// Similarity for `er` (in (0.1, 1)), signal strength otherwise (in (0, 1)).
    #[arg(long)]
    s: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Covariate columns per group.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, value_enum, default_value = "poisson")]
    counts: Counts,
    #[arg(long, env = "PLNET_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Spike scale; required unless --grid.
    #[arg(long, conflicts_with = "grid", requires = "v1")]
    v0: Option<f64>,
    /// Slab scale.
    #[arg(long, conflicts_with = "grid", requires = "v0")]
    v1: Option<f64>,
    /// Search v0 over {0.1, 0.25, 0.5, 1, 5}·sqrt(K log p / N) and pick by EBIC.
    #[arg(long)]
    grid: bool,
    /// v1 / v0 on the grid.
    #[arg(long, default_value_t = 10.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    p0: f64,
    /// Diagonal prior scale; `inf` leaves the diagonal unpenalized.
    #[arg(long, default_value_t = f64::INFINITY)]
    tau: f64,
    /// EBIC model-space weight.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Worker threads, 0 for all cores.
    #[arg(long, env = "PLNET_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
    /// Outer convergence threshold on max |ΔΩ|.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// ADMM step size.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Fit every group on its own instead of jointly.
    #[arg(long)]
    separate: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Directory with truth_edges_<k>.tsv (and truth_omega_<k>.csv for MOFE).
    #[arg(long)]
    truth: PathBuf,
    /// Second estimates directory; reports per-group MCC differences.
    #[arg(long)]
    against: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 40)]
    p: usize,
    #[arg(long = "k-groups", default_value_t = 10)]
    k_groups: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.6)]
    s: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    threads: Vec<usize>,
    #[arg(long = "max-iter", default_value_t = 10)]
    max_iter: usize,
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let graph = GraphSpec::new(a.kind.into(), a.p, a.k_groups, a.s).map_err(usage)?;
    if a.n == 0 || a.d == 0 {
        return Err(usage(anyhow::anyhow!("--n and --d must be positive")));
    }
    let mut spec = SimulationSpec::new(graph, a.n);
    spec.d = a.d;
    spec.model = match a.counts {
        Counts::Poisson => CountModel::Poisson,
        Counts::Multinomial => CountModel::Multinomial,
    };
    let sim = pool(a.threads)?.install(|| simgen::simulate(&spec, a.seed))?;
    let dataset = Dataset::new(sim.groups)?;
    io::save_dataset(&a.out, &dataset)?;
    for (idx, omega) in sim.omegas.iter().enumerate() {
        let k = idx + 1;
        io::write_matrix(&a.out.join(format!("truth_omega_{k}.csv")), omega.view())?;
        io::write_edges(&a.out.join(format!("truth_edges_{k}.tsv")), omega.view())?;
        io::write_matrix(&a.out.join(format!("truth_beta_{k}.csv")), sim.betas[idx].view())?;
    }
    let manifest = json!({
        "kind": spec.graph.kind,
        "p": a.p,
        "k_groups": a.k_groups,
        "n": a.n,
        "d": a.d,
        "s": a.s,
        "seed": a.seed,
        "counts": spec.model,
        "clamped": sim.clamped,
        "out": a.out,
    });
    println!("{manifest}");
    Ok(())
}

#[derive(Serialize)]
struct FitEntry {
    /// 1-based groups covered by this fit.
    groups: Vec<usize>,
    selected: HyperparameterRecord,
    report: FitReport,
    grid: Option<Vec<GridPoint>>,
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let dataset: Dataset = io::load_dataset(&a.data).map_err(usage)?;
    let mut config = Config {
        max_outer_iter: a.max_iter,
        outer_tol: a.tol,
        thread_count: a.threads,
        ..Config::default()
    };
    config.admm.rho = a.rho;
    config.validate().map_err(usage)?;
    if !(a.gamma >= 0.0) || !(a.ratio > 1.0) {
        return Err(usage(anyhow::anyhow!("need --gamma >= 0 and --ratio > 1")));
    }
    let fixed = match (a.v0, a.v1, a.grid) {
        (Some(v0), Some(v1), false) => Some(Hyper::new(a.p0, v0, v1, a.tau).map_err(usage)?),
        (None, None, true) => {
            Hyper::new(a.p0, 1.0, a.ratio, a.tau).map_err(usage)?;
            None
        }
        _ => return Err(usage(anyhow::anyhow!("pass either --v0 and --v1, or --grid"))),
    };

    let run = |data: &Dataset| -> plnet::Result<(FitOutput<f64>, Option<Vec<GridPoint>>)> {
        match &fixed {
            Some(h) => Ok((vem::fit(data, h, &config, a.gamma)?, None)),
            None => {
                let grid: Vec<Hyper> = vem::default_grid(data, a.ratio)
                    .into_iter()
                    .map(|h| Hyper { p0: a.p0, tau: a.tau, ..h })
                    .collect();
                let g = grid_fit(data, &grid, a.gamma, &config)?;
                Ok((g.best, Some(g.points)))
            }
        }
    };

    let mut omegas: Vec<Array2<f64>> = Vec::new();
    let mut betas: Vec<Array2<f64>> = Vec::new();
    let mut entries = Vec::new();
    let units: Vec<(Vec<usize>, Dataset)> = if a.separate {
        (0..dataset.k()).map(|k| (vec![k + 1], dataset.single_group(k))).collect()
    } else {
        vec![((1..=dataset.k()).collect(), dataset.clone())]
    };
    for (groups, data) in units {
        let (out, grid) = run(&data)?;
        omegas.extend(out.model.omegas);
        betas.extend(out.model.betas);
        entries.push(FitEntry {
            groups,
            selected: out.report.hyperparameters,
            report: out.report,
            grid,
        });
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (idx, (omega, beta)) in omegas.iter().zip(&betas).enumerate() {
        let k = idx + 1;
        io::write_matrix(&a.out.join(format!("omega_{k}.csv")), omega.view())?;
        io::write_matrix(&a.out.join(format!("beta_{k}.csv")), beta.view())?;
        io::write_edges(&a.out.join(format!("edges_{k}.tsv")), omega.view())?;
    }

    // Wall-clock figures vary run to run; they go to their own file so that
    // report.json is reproducible.
    let mut report = serde_json::to_value(json!({
        "mode": if a.separate { "separate" } else { "joint" },
        "k_groups": dataset.k(),
        "p": dataset.p(),
        "fits": entries,
    }))?;
    let mut timings = Vec::new();
    for entry in report["fits"].as_array_mut().into_iter().flatten() {
        timings.push(json!({
            "groups": entry["groups"].clone(),
            "selected": entry["report"]["timings"].take(),
            "grid": entry["grid"]
                .as_array_mut()
                .map(|pts| pts.iter_mut().map(|pt| pt["report"]["timings"].take()).collect::<Vec<_>>()),
        }));
        strip_timings(&mut entry["report"]);
        if let Some(pts) = entry["grid"].as_array_mut() {
            for pt in pts {
                strip_timings(&mut pt["report"]);
            }
        }
    }
    write_json(&a.out.join("report.json"), &report)?;
    write_json(&a.out.join("timings.json"), &json!({ "threads": a.threads, "fits": timings }))?;
    Ok(())
}

fn strip_timings(report: &mut serde_json::Value) {
    if let Some(obj) = report.as_object_mut() {
        obj.remove("timings");
    }
}

#[derive(Serialize)]
struct GroupScore {
    group: usize,
    #[serde(flatten)]
    scores: EdgeScores,
}

#[derive(Serialize, Default)]
struct MeanScore {
    mcc: f64,
    precision: f64,
    recall: f64,
    mofe: Option<f64>,
}

fn score_dir(estimates: &Path, truth: &Path, k: usize) -> Result<Vec<GroupScore>, Failure> {
    let mut out = Vec::with_capacity(k);
    for g in 1..=k {
        let truth_edges = truth.join(format!("truth_edges_{g}.tsv"));
        if !truth_edges.is_file() {
            return Err(usage(anyhow::anyhow!("missing truth file {}", truth_edges.display())));
        }
        let est_path = estimates.join(format!("omega_{g}.csv"));
        if !est_path.is_file() {
            return Err(usage(anyhow::anyhow!("missing estimate {}", est_path.display())));
        }
        let est: Array2<f64> = io::read_matrix(&est_path)?;
        let p = est.nrows();
        let truth_set = io::read_edges(&truth_edges)?;
        let est_set = metrics::edge_set(est.view(), metrics::EDGE_THRESHOLD);
        let confusion = metrics::confusion(&est_set, &truth_set, p);
        let (precision, recall) = metrics::precision_recall(&confusion);
        let truth_omega = truth.join(format!("truth_omega_{g}.csv"));
        let mofe = if truth_omega.is_file() {
            let t: Array2<f64> = io::read_matrix(&truth_omega)?;
            if t.dim() != est.dim() {
                return Err(usage(anyhow::anyhow!("group {g}: estimate and truth shapes differ")));
            }
            metrics::mofe(est.view(), t.view())
        } else {
            f64::NAN
        };
        out.push(GroupScore {
            group: g,
            scores: EdgeScores {
                mcc: metrics::mcc(&confusion),
                precision,
                recall,
                mofe,
                confusion,
            },
        });
    }
    Ok(out)
}

fn mean_of(scores: &[GroupScore]) -> MeanScore {
    let n = scores.len() as f64;
    let avg = |f: fn(&EdgeScores) -> f64| scores.iter().map(|s| f(&s.scores)).sum::<f64>() / n;
    let mofe = avg(|s| s.mofe);
    MeanScore {
        mcc: avg(|s| s.mcc),
        precision: avg(|s| s.precision),
        recall: avg(|s| s.recall),
        mofe: mofe.is_finite().then_some(mofe),
    }
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let k = count_group_files(&a.truth, "truth_edges_", ".tsv");
    if k == 0 {
        return Err(usage(anyhow::anyhow!("no truth_edges_<k>.tsv files in {}", a.truth.display())));
    }
    let groups = score_dir(&a.estimates, &a.truth, k)?;
    let mut out = json!({
        "groups": groups,
        "mean": mean_of(&groups),
    });
    if let Some(other) = &a.against {
        let base = score_dir(other, &a.truth, k)?;
        let deltas: Vec<f64> = groups.iter().zip(&base).map(|(x, y)| x.scores.mcc - y.scores.mcc).collect();
        let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
        out["against"] = json!({
            "groups": base,
            "mean": mean_of(&base),
            "mcc_delta": deltas,
            "mean_mcc_delta": mean_delta,
            "positive_deltas": deltas.iter().filter(|&&d| d > 0.0).count(),
        });
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let graph = GraphSpec::new(GraphKind::ErShared, a.p, a.k_groups, a.s).map_err(usage)?;
    let sim = simgen::simulate(&SimulationSpec::new(graph, a.n), a.seed)?;
    let dataset = Dataset::new(sim.groups)?;
    let v0 = vem::default_v0_candidates(dataset.k(), dataset.p(), dataset.total_observations())[2];
    let hyper = Hyper::new(0.5, v0, 10.0 * v0, f64::INFINITY)?;
    let mut runs = Vec::new();
    for &threads in &a.threads {
        let config = Config {
            max_outer_iter: a.max_iter,
            thread_count: threads,
            ..Config::default()
        };
        let start = Instant::now();
        let out = vem::fit(&dataset, &hyper, &config, 0.5)?;
        runs.push(json!({
            "threads": threads,
            "wall_secs": start.elapsed().as_secs_f64(),
            "outer_iterations": out.report.outer_iterations,
            "timings": out.report.timings,
        }));
    }
    println!("{}", json!({ "p": a.p, "k_groups": a.k_groups, "n": a.n, "runs": runs }));
    Ok(())
}
