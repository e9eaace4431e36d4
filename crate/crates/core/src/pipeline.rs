//! Abs-LiNGAM: fit `T` from paired samples, discover the abstract model on
//! the abstracted concrete data, turn abstract non-ancestry into forbidden
//! concrete paths and run constrained concrete discovery.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::abstraction::{relevant_sets, AbstractionMap, RelevantSets};
use crate::discovery::{direct_lingam, Discovery, DiscoveryConfig, PriorKnowledge};
use crate::error::{Error, Result};
use crate::graph::{self, Adjacency};
use crate::linalg;
use crate::par;
use crate::rng;
use crate::scenario::forbidden_pairs;
use crate::scm::{LinearScm, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStrategy {
    /// Least squares, then mask small entries.
    #[default]
    Plain,
    /// Keep only the largest entry of each row.
    Top1,
    /// Top-1 support, then refit every column on its support.
    Top1Refit,
}

impl std::fmt::Display for TStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TStrategy::Plain => "plain",
            TStrategy::Top1 => "top1",
            TStrategy::Top1Refit => "top1_refit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub t_threshold: f64,
    pub t_strategy: TStrategy,
    /// Number of subsampled abstract discoveries; 0 means a single fit.
    pub n_bootstrap: usize,
    pub bootstrap_fraction: f64,
    /// Minimum fraction of runs an abstract edge must appear in.
    pub abstract_edge_vote: f64,
    pub discovery: DiscoveryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_threshold: 0.05,
            t_strategy: TStrategy::Plain,
            n_bootstrap: 0,
            bootstrap_fraction: 0.5,
            abstract_edge_vote: 0.5,
            discovery: DiscoveryConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_threshold >= 0.0) {
            return Err(Error::InvalidConfig("t_threshold must be >= 0".into()));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(Error::InvalidConfig("bootstrap_fraction must lie in (0, 1]".into()));
        }
        if !(self.abstract_edge_vote > 0.0 && self.abstract_edge_vote <= 1.0) {
            return Err(Error::InvalidConfig("abstract_edge_vote must lie in (0, 1]".into()));
        }
        self.discovery.validate()
    }
}

/// Fitted abstraction map with the relevant sets used to build constraints.
#[derive(Debug, Clone)]
pub struct FittedAbstraction {
    pub t_hat: AbstractionMap,
    /// Disjoint relevant sets (overlaps resolved by the largest entry).
    pub relevant: RelevantSets,
    /// Whether the masked fit had overlapping relevant sets.
    pub overlap_resolved: bool,
}

/// Largest-magnitude entry of each row if it exceeds `threshold`.
fn top1_support(t: &DMatrix<f64>, threshold: f64) -> Vec<Option<usize>> {
    (0..t.nrows())
        .map(|i| {
            let (j, v) = t
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.abs()))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            (v > threshold).then_some(j)
        })
        .collect()
}

fn sets_from_owners(owners: &[Option<usize>], b: usize) -> RelevantSets {
    let mut sets = vec![Vec::new(); b];
    let mut irrelevant = Vec::new();
    for (i, o) in owners.iter().enumerate() {
        match o {
            Some(j) => sets[*j].push(i),
            None => irrelevant.push(i),
        }
    }
    let valid = sets.iter().all(|s| !s.is_empty());
    RelevantSets {
        sets,
        irrelevant,
        valid,
    }
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Least-squares fit of `T` from paired samples `x_j T ~ y_j`. Both sides
/// are centered first, which is the same as fitting an intercept.
pub fn fit_abstraction(x_j: &DMatrix<f64>, y_j: &DMatrix<f64>, cfg: &PipelineConfig) -> Result<FittedAbstraction> {
    let (n, d) = x_j.shape();
    let b = y_j.ncols();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if y_j.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} concrete rows, {} abstract rows",
            y_j.nrows()
        )));
    }
    if n < d {
        log::warn!("{n} paired samples for {d} concrete variables; using the minimum-norm solution");
    }
    for (j, col) in x_j.column_iter().enumerate() {
        if col.iter().all(|v| *v == col[0]) {
            return Err(Error::DegenerateColumn(j));
        }
    }
    let th = cfg.t_threshold;
    let (x_j, y_j) = (&centered(x_j), &centered(y_j));
    let raw = linalg::lstsq(x_j, y_j)?;
    let mask = |v: f64| if v.abs() > th { v } else { 0.0 };
    let t = match cfg.t_strategy {
        TStrategy::Plain => raw.map(mask),
        TStrategy::Top1 => {
            let owners = top1_support(&raw, th);
            DMatrix::from_fn(d, b, |i, j| if owners[i] == Some(j) { raw[(i, j)] } else { 0.0 })
        }
        TStrategy::Top1Refit => {
            let owners = top1_support(&raw, th);
            let mut t = DMatrix::zeros(d, b);
            for j in 0..b {
                let support: Vec<usize> = (0..d).filter(|&i| owners[i] == Some(j)).collect();
                if support.is_empty() {
                    continue;
                }
                let xs = linalg::permute_cols(x_j, &support);
                let coef = linalg::lstsq(&xs, &y_j.columns(j, 1).into_owned())?;
                for (a, &i) in support.iter().enumerate() {
                    t[(i, j)] = mask(coef[(a, 0)]);
                }
            }
            t
        }
    };
    let t_hat = AbstractionMap::new(t, th)?;
    let masked_sets = relevant_sets(&t_hat);
    let overlap = (0..d).any(|i| (0..b).filter(|&j| t_hat.is_relevant(i, j)).count() > 1);
    let relevant = if overlap {
        sets_from_owners(&top1_support(t_hat.matrix(), th), b)
    } else {
        masked_sets
    };
    Ok(FittedAbstraction {
        t_hat,
        relevant,
        overlap_resolved: overlap,
    })
}

/// `D_H = D_L T`.
pub fn abstract_dataset(d_l: &DMatrix<f64>, t_hat: &AbstractionMap) -> Result<DMatrix<f64>> {
    if d_l.ncols() != t_hat.d() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, T has {} rows",
            d_l.ncols(),
            t_hat.d()
        )));
    }
    Ok(d_l * t_hat.matrix())
}

/// Abstract model with the bootstrap vote fractions behind it.
#[derive(Debug, Clone)]
pub struct AbstractDiscovery {
    pub model: LinearScm,
    pub votes: DMatrix<f64>,
    pub pair_evals: u64,
}

/// Abstract discovery, optionally aggregated over subsamples drawn without
/// replacement.
pub fn discover_abstract(d_h: &DMatrix<f64>, cfg: &PipelineConfig) -> Result<AbstractDiscovery> {
    cfg.validate()?;
    let b = d_h.ncols();
    let empty = PriorKnowledge::empty(b);
    if cfg.n_bootstrap == 0 {
        let run = direct_lingam(d_h, &empty, &cfg.discovery)?;
        let votes = run.model.weights().map(|w| if w != 0.0 { 1.0 } else { 0.0 });
        return Ok(AbstractDiscovery {
            model: run.model,
            votes,
            pair_evals: run.pair_evals,
        });
    }
    let n = d_h.nrows();
    let m = ((n as f64 * cfg.bootstrap_fraction).round() as usize).clamp(1, n);
    let rounds: Vec<u64> = (0..cfg.n_bootstrap as u64).collect();
    let runs: Vec<Result<Discovery>> = par::map_collect(&rounds, cfg.discovery.parallel, |&r| {
        let mut rng = rng::substream(cfg.discovery.rng_seed, r);
        let mut rows = index::sample(&mut rng, n, m).into_vec();
        rows.sort_unstable();
        let sub = linalg::permute_rows(d_h, &rows);
        direct_lingam(&sub, &empty, &cfg.discovery)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    aggregate_runs(
        &runs.iter().map(|r| r.model.weights().clone()).collect::<Vec<_>>(),
        cfg.abstract_edge_vote,
        runs.iter().map(|r| r.pair_evals).sum(),
    )
}

/// Keeps edges whose vote fraction reaches `vote`, adding them by decreasing
/// vote (ties by index) and skipping any that would close a cycle. Weights
/// are averaged over the runs containing the edge.
pub fn aggregate_runs(weights: &[DMatrix<f64>], vote: f64, pair_evals: u64) -> Result<AbstractDiscovery> {
    let runs = weights.len();
    let b = weights.first().map_or(0, |w| w.nrows());
    let mut votes = DMatrix::<f64>::zeros(b, b);
    let mut sums = DMatrix::<f64>::zeros(b, b);
    for w in weights {
        for ((v, s), x) in votes.iter_mut().zip(sums.iter_mut()).zip(w.iter()) {
            if *x != 0.0 {
                *v += 1.0;
                *s += *x;
            }
        }
    }
    let mut candidates: Vec<(usize, usize)> = (0..b)
        .flat_map(|i| (0..b).map(move |j| (i, j)))
        .filter(|&(i, j)| votes[(i, j)] > 0.0 && votes[(i, j)] / runs as f64 >= vote)
        .collect();
    candidates.sort_by(|a, c| votes[*c].total_cmp(&votes[*a]).then(a.cmp(c)));
    let mut w = DMatrix::zeros(b, b);
    let mut adj: Adjacency = vec![vec![false; b]; b];
    for (i, j) in candidates {
        if graph::creates_cycle(&adj, i, j) {
            continue;
        }
        adj[i][j] = true;
        w[(i, j)] = sums[(i, j)] / votes[(i, j)];
    }
    Ok(AbstractDiscovery {
        model: LinearScm::with_uniform_noise(w, NoiseSpec::Gaussian { mean: 0.0, variance: 1.0 })?,
        votes: votes / runs.max(1) as f64,
        pair_evals,
    })
}

/// Forbidden concrete paths implied by the abstract graph and relevant sets.
pub fn derive_constraints(m_hat: &Adjacency, relevant: &RelevantSets, d: usize) -> Result<PriorKnowledge> {
    PriorKnowledge::new(d, forbidden_pairs(m_hat, relevant))
}

/// Stage timings (seconds) and counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub time_fit_t_s: f64,
    pub time_abstract_s: f64,
    pub time_constraints_s: f64,
    pub time_concrete_s: f64,
    pub time_total_s: f64,
    pub pair_evals_abstract: u64,
    pub pair_evals_concrete: u64,
    pub n_forbidden: usize,
    pub overlap_resolved: bool,
    pub ridge_used: bool,
}

#[derive(Debug, Clone)]
pub struct AbsLingam {
    pub t_hat: AbstractionMap,
    pub m_hat: LinearScm,
    pub w_hat: LinearScm,
    /// Edge scores of the concrete stage (unthresholded coefficients).
    pub w_scores: DMatrix<f64>,
    pub knowledge: PriorKnowledge,
    pub report: PipelineReport,
}

/// The four stages in order; a failure names its stage.
pub fn abs_lingam(
    d_l: &DMatrix<f64>,
    x_j: &DMatrix<f64>,
    y_j: &DMatrix<f64>,
    cfg: &PipelineConfig,
) -> Result<AbsLingam> {
    cfg.validate()?;
    if x_j.ncols() != d_l.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "D_L has {} columns, joint concrete side has {}",
            d_l.ncols(),
            x_j.ncols()
        )));
    }
    let total = Instant::now();
    let mut report = PipelineReport::default();

    let start = Instant::now();
    let fit = fit_abstraction(x_j, y_j, cfg).map_err(|e| e.in_stage("fit_abstraction"))?;
    report.time_fit_t_s = start.elapsed().as_secs_f64();
    report.overlap_resolved = fit.overlap_resolved;

    let start = Instant::now();
    let abstract_run = abstract_dataset(d_l, &fit.t_hat)
        .and_then(|d_h| discover_abstract(&d_h, cfg))
        .map_err(|e| e.in_stage("abstract_discovery"))?;
    report.time_abstract_s = start.elapsed().as_secs_f64();
    report.pair_evals_abstract = abstract_run.pair_evals;

    let start = Instant::now();
    let knowledge = derive_constraints(&abstract_run.model.adjacency(), &fit.relevant, d_l.ncols())
        .map_err(|e| e.in_stage("derive_constraints"))?;
    report.time_constraints_s = start.elapsed().as_secs_f64();
    report.n_forbidden = knowledge.len();

    let start = Instant::now();
    let concrete = direct_lingam(d_l, &knowledge, &cfg.discovery).map_err(|e| e.in_stage("concrete_discovery"))?;
    report.time_concrete_s = start.elapsed().as_secs_f64();
    report.pair_evals_concrete = concrete.pair_evals;
    report.ridge_used = concrete.ridge_used;
    report.time_total_s = total.elapsed().as_secs_f64();

    Ok(AbsLingam {
        t_hat: fit.t_hat,
        m_hat: abstract_run.model,
        w_hat: concrete.model,
        w_scores: concrete.scores,
        knowledge,
        report,
    })
}

/// Concrete discovery constrained by ground-truth `T` and abstract graph.
pub fn abs_lingam_oracle(
    d_l: &DMatrix<f64>,
    t: &AbstractionMap,
    m: &LinearScm,
    cfg: &PipelineConfig,
) -> Result<AbsLingam> {
    cfg.validate()?;
    let total = Instant::now();
    let mut report = PipelineReport::default();
    let start = Instant::now();
    let knowledge = derive_constraints(&m.adjacency(), &relevant_sets(t), d_l.ncols())?;
    report.time_constraints_s = start.elapsed().as_secs_f64();
    report.n_forbidden = knowledge.len();
    let start = Instant::now();
    let concrete = direct_lingam(d_l, &knowledge, &cfg.discovery).map_err(|e| e.in_stage("concrete_discovery"))?;
    report.time_concrete_s = start.elapsed().as_secs_f64();
    report.pair_evals_concrete = concrete.pair_evals;
    report.ridge_used = concrete.ridge_used;
    report.time_total_s = total.elapsed().as_secs_f64();
    Ok(AbsLingam {
        t_hat: t.clone(),
        m_hat: m.clone(),
        w_hat: concrete.model,
        w_scores: concrete.scores,
        knowledge,
        report,
    })
}
