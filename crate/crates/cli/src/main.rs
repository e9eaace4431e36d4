//! `linabs` command-line tool.
//!
//! Exit codes: 0 success (or abstraction holds), 1 abstraction does not hold,
//! 2 usage, input or IO error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use linabs::abstraction::{brute_force_consistency, check_block_abstraction, ConsistencyGrid};
use linabs::concretize::{sample_concretization, BlockLayout, ConcretizeConfig};
use linabs::discovery::direct_lingam;
use linabs::evaluate::{mean_std, run_benchmark, write_results_csv, BenchGrid, CellRun, Method};
use linabs::pipeline::abs_lingam;
use linabs::scenario::generate;
use linabs::{io, par, AbstractionMap, DiscoveryConfig, LinearScm, PipelineConfig, PriorKnowledge, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] linabs::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "linabs", version, about = "Linear causal abstraction: verify, sample, discover")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// RNG seed; overrides the seed in the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file for the command (fields not given keep their defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (bench: parallel cells; others: parallel pair scoring)
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Residual tolerance for `verify`
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario (manifest.json plus dataset CSVs)
    Generate,
    /// Check whether T abstracts the concrete model into the abstract model
    Verify {
        concrete: PathBuf,
        abstract_model: PathBuf,
        t: PathBuf,
        /// Also run the interventional brute-force check
        #[arg(long)]
        brute_force: bool,
    },
    /// Sample a concrete model abstracted by (abstract model, T)
    Concretize {
        abstract_model: PathBuf,
        t: PathBuf,
        /// Where to write T extended to the emitted model's variables
        #[arg(long)]
        t_out: Option<PathBuf>,
    },
    /// Run DirectLiNGAM on a CSV dataset
    Discover {
        data: PathBuf,
        /// Forbidden-path prior knowledge (JSON)
        #[arg(long)]
        knowledge: Option<PathBuf>,
    },
    /// Run Abs-LiNGAM on a concrete dataset and a paired joint dataset
    Abslingam {
        d_l: PathBuf,
        d_j_concrete: PathBuf,
        d_j_abstract: PathBuf,
    },
    /// Run a benchmark grid and write the results CSV
    Bench { grid: PathBuf },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("no such file: {}", path.display())));
    }
    Ok(io::read_matrix_csv(path)?.1)
}

fn config_or_default<T: DeserializeOwned + Default>(g: &Global) -> CliResult<T> {
    g.config.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

fn out_path(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(io::write_json(path, value)?)
}

fn cmd_generate(g: &Global) -> CliResult<ExitCode> {
    let mut cfg: ScenarioConfig = config_or_default(g)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = out_path(g, "scenario");
    let sc = generate(&cfg)?;
    sc.write(&out)?;
    println!(
        "scenario seed {}: d = {}, b = {}, |D_L| = {}, |D_J| = {}, {} forbidden pairs -> {}",
        cfg.seed,
        sc.d(),
        sc.b(),
        sc.d_l.nrows(),
        sc.d_j.0.nrows(),
        sc.ground_truth.k_true.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(g: &Global, concrete: &Path, abstract_model: &Path, t: &Path, brute_force: bool) -> CliResult<ExitCode> {
    let l: LinearScm = read_json(concrete)?;
    let h: LinearScm = read_json(abstract_model)?;
    let t: AbstractionMap = read_json(t)?;
    if !(g.tol >= 0.0) {
        return Err(CliError::Usage("--tol must be >= 0".into()));
    }
    let check = check_block_abstraction(&l, &h, &t, g.tol)?;
    println!("max residual: {:e}", check.max_residual);
    println!("block ordering consistent: {}", check.ordering_ok);
    for v in &check.violations {
        println!(
            "connectivity violation: X{} reaches Y{} only through X{} (abstract edge Y{} -> Y{} missing)",
            v.source_var, v.target_abstract, v.witness_var, v.source_abstract, v.target_abstract
        );
    }
    if let Some(reason) = &check.failure {
        println!("failure: {reason}");
    }
    let mut ok = check.ok;
    if brute_force {
        let mut grid = ConsistencyGrid::for_abstract_size(h.n_vars());
        if let Some(s) = g.seed {
            grid.seed = s;
        }
        let dev = brute_force_consistency(&l, &h, &t, &grid)?;
        println!("max interventional deviation: {dev:e}");
        ok &= dev <= g.tol;
    }
    println!("{}", if ok { "abstraction holds" } else { "abstraction does not hold" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_concretize(g: &Global, abstract_model: &Path, t: &Path, t_out: Option<&Path>) -> CliResult<ExitCode> {
    let m: LinearScm = read_json(abstract_model)?;
    let t: AbstractionMap = read_json(t)?;
    let mut cfg: ConcretizeConfig = config_or_default(g)?;
    if let Some(s) = g.seed {
        cfg.rng_seed = s;
    }
    let c = sample_concretization(&m, &t, &BlockLayout::from_abstraction(&t), &cfg)?;
    let out = out_path(g, "concrete.json");
    write_json(&out, &c.l)?;
    if let Some(p) = t_out {
        write_json(p, &c.t)?;
    } else if c.t.d() != t.d() {
        log::warn!("T was extended by {} ignored variables; pass --t-out to save it", c.t.d() - t.d());
    }
    println!("concrete model with {} variables -> {}", c.l.n_vars(), out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DiscoverSummary<'a> {
    order: &'a [usize],
    pair_evals: u64,
    n_edges: usize,
    ridge_used: bool,
    n_forbidden: usize,
}

fn cmd_discover(g: &Global, data: &Path, knowledge: Option<&Path>) -> CliResult<ExitCode> {
    let x = read_matrix(data)?;
    let mut cfg: DiscoveryConfig = config_or_default(g)?;
    if let Some(s) = g.seed {
        cfg.rng_seed = s;
    }
    cfg.parallel = g.jobs != 1;
    let k = match knowledge {
        Some(p) => read_json::<PriorKnowledge>(p)?,
        None => PriorKnowledge::empty(x.ncols()),
    };
    let run = par::with_threads(g.jobs, || direct_lingam(&x, &k, &cfg))?;
    let out = out_path(g, "discovery");
    fs::create_dir_all(&out)?;
    write_json(&out.join("model.json"), &run.model)?;
    io::write_matrix_csv(&out.join("scores.csv"), "x", &run.scores)?;
    let n_edges = run.model.weights().iter().filter(|w| **w != 0.0).count();
    write_json(
        &out.join("report.json"),
        &DiscoverSummary {
            order: &run.order,
            pair_evals: run.pair_evals,
            n_edges,
            ridge_used: run.ridge_used,
            n_forbidden: k.len(),
        },
    )?;
    println!("variables        {}", x.ncols());
    println!("samples          {}", x.nrows());
    println!("edges            {n_edges}");
    println!("pair evaluations {}", run.pair_evals);
    println!("time order (s)   {:.3}", run.time_order_s);
    println!("time prune (s)   {:.3}", run.time_prune_s);
    println!("-> {}", out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AbsSummary {
    pair_evals_abstract: u64,
    pair_evals_concrete: u64,
    n_forbidden: usize,
    overlap_resolved: bool,
    ridge_used: bool,
    abstract_edges: usize,
    concrete_edges: usize,
}

fn cmd_abslingam(g: &Global, d_l: &Path, xj: &Path, yj: &Path) -> CliResult<ExitCode> {
    let d_l = read_matrix(d_l)?;
    let x_j = read_matrix(xj)?;
    let y_j = read_matrix(yj)?;
    let mut cfg: PipelineConfig = config_or_default(g)?;
    if let Some(s) = g.seed {
        cfg.discovery.rng_seed = s;
    }
    cfg.discovery.parallel = g.jobs != 1;
    let run = par::with_threads(g.jobs, || abs_lingam(&d_l, &x_j, &y_j, &cfg))?;
    let out = out_path(g, "abslingam");
    fs::create_dir_all(&out)?;
    write_json(&out.join("t_hat.json"), &run.t_hat)?;
    write_json(&out.join("m_hat.json"), &run.m_hat)?;
    write_json(&out.join("w_hat.json"), &run.w_hat)?;
    write_json(&out.join("knowledge.json"), &run.knowledge)?;
    io::write_matrix_csv(&out.join("w_scores.csv"), "x", &run.w_scores)?;
    let count = |m: &LinearScm| m.weights().iter().filter(|w| **w != 0.0).count();
    let r = &run.report;
    write_json(
        &out.join("report.json"),
        &AbsSummary {
            pair_evals_abstract: r.pair_evals_abstract,
            pair_evals_concrete: r.pair_evals_concrete,
            n_forbidden: r.n_forbidden,
            overlap_resolved: r.overlap_resolved,
            ridge_used: r.ridge_used,
            abstract_edges: count(&run.m_hat),
            concrete_edges: count(&run.w_hat),
        },
    )?;
    println!("stage                 time (s)");
    println!("fit T                 {:.3}", r.time_fit_t_s);
    println!("abstract discovery    {:.3}", r.time_abstract_s);
    println!("constraints           {:.3}", r.time_constraints_s);
    println!("concrete discovery    {:.3}", r.time_concrete_s);
    println!("total                 {:.3}", r.time_total_s);
    println!("forbidden pairs {}, concrete pair evaluations {}", r.n_forbidden, r.pair_evals_concrete);
    println!("-> {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(grid: &BenchGrid, runs: &[CellRun]) {
    println!(
        "{:>4}  {:<14} {:>15} {:>15} {:>15} {:>13}",
        "cell", "method", "roc_auc", "pk_precision", "pk_recall", "time_s"
    );
    let fmt = |v: Option<(f64, f64)>| v.map_or("-".to_owned(), |(m, s)| format!("{m:.3}±{s:.3}"));
    for cell in 0..grid.cells.len() {
        for &method in &grid.methods {
            let reports: Vec<_> = runs
                .iter()
                .filter(|r| r.cell == cell)
                .flat_map(|r| r.reports.iter().filter(|x| x.method == method && x.error.is_none()))
                .collect();
            let stat = |f: fn(&linabs::evaluate::RunReport) -> Option<f64>| mean_std(reports.iter().filter_map(|r| f(r)));
            println!(
                "{:>4}  {:<14} {:>15} {:>15} {:>15} {:>13}",
                cell,
                method.name(),
                fmt(stat(|r| r.roc_auc)),
                fmt(stat(|r| r.pk_precision)),
                fmt(stat(|r| r.pk_recall)),
                fmt(stat(|r| Some(r.time_total_s))),
            );
        }
    }
}

fn cmd_bench(g: &Global, grid_path: &Path) -> CliResult<ExitCode> {
    if g.config.is_some() {
        return Err(CliError::Usage("bench reads its configuration from the grid file; --config is not used".into()));
    }
    let mut grid: BenchGrid = read_json(grid_path)?;
    if let Some(s) = g.seed {
        grid.seed = s;
    }
    if grid.methods.contains(&Method::AbsLingamGt) || grid.methods.contains(&Method::AbsLingam) {
        for c in &grid.cells {
            c.pipeline.validate()?;
        }
    }
    for c in &grid.cells {
        c.scenario.validate()?;
    }
    let runs = par::with_threads(g.jobs, || run_benchmark(&grid, g.jobs != 1));
    let out = out_path(g, "results.csv");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(&out)?;
    write_results_csv(&mut file, &grid, &runs)?;
    file.flush()?;
    print_summary(&grid, &runs);
    let failures: usize = runs.iter().flat_map(|r| &r.reports).filter(|r| r.error.is_some()).count();
    if failures > 0 {
        println!("{failures} method runs failed; see the error column");
    }
    println!("-> {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> CliResult<ExitCode> {
    if cli.global.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let g = &cli.global;
    match &cli.command {
        Command::Generate => cmd_generate(g),
        Command::Verify {
            concrete,
            abstract_model,
            t,
            brute_force,
        } => cmd_verify(g, concrete, abstract_model, t, *brute_force),
        Command::Concretize { abstract_model, t, t_out } => cmd_concretize(g, abstract_model, t, t_out.as_deref()),
        Command::Discover { data, knowledge } => cmd_discover(g, data, knowledge.as_deref()),
        Command::Abslingam {
            d_l,
            d_j_concrete,
            d_j_abstract,
        } => cmd_abslingam(g, d_l, d_j_concrete, d_j_abstract),
        Command::Bench { grid } => cmd_bench(g, grid),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
