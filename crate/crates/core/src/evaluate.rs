//! Metrics and the benchmark harness.
//!
//! All comparisons happen in the permuted coordinates of the scenario's
//! datasets: the generator records both permutations, and the abstract
//! columns of `D_J` are observed, so the fitted `T` is already aligned with
//! the true one.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::abstraction::AbstractionMap;
use crate::discovery::{direct_lingam, PriorKnowledge};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{abs_lingam, abs_lingam_oracle, PipelineConfig};
use crate::rng;
use crate::scenario::{generate, ScenarioConfig};

/// Edge ROC-AUC over ordered off-diagonal pairs with score `|w_hat|` and
/// label `w_true != 0`. Ties get midranks. The harness passes the
/// unthresholded coefficients as `w_hat`, so the ranking is not collapsed by
/// the pruning threshold.
pub fn roc_auc_edges(w_true: &DMatrix<f64>, w_hat: &DMatrix<f64>) -> Result<f64> {
    if w_true.shape() != w_hat.shape() || w_true.nrows() != w_true.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "true {:?} vs estimated {:?}",
            w_true.shape(),
            w_hat.shape()
        )));
    }
    let d = w_true.nrows();
    let mut items: Vec<(f64, bool)> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                items.push((w_hat[(i, j)].abs(), w_true[(i, j)] != 0.0));
            }
        }
    }
    roc_auc(&items)
}

/// Mann-Whitney AUC of `(score, label)` pairs.
pub fn roc_auc(items: &[(f64, bool)]) -> Result<f64> {
    let n_pos = items.iter().filter(|x| x.1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("no positive labels"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedMetric("no negative labels"));
    }
    let mut sorted: Vec<&(f64, bool)> = items.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end + 1 < sorted.len() && sorted[end + 1].0 == sorted[start].0 {
            end += 1;
        }
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * sorted[start..=end].iter().filter(|x| x.1).count() as f64;
        start = end + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Precision and recall of estimated forbidden pairs. An empty estimate has
/// precision 1; an empty truth has recall 1.
pub fn pk_scores(k_hat: &PriorKnowledge, k_true: &PriorKnowledge) -> (f64, f64) {
    let hat: BTreeSet<_> = k_hat.pairs().collect();
    let truth: BTreeSet<_> = k_true.pairs().collect();
    let tp = hat.intersection(&truth).count() as f64;
    let precision = if hat.is_empty() { 1.0 } else { tp / hat.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { tp / truth.len() as f64 };
    (precision, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TSupportMetrics {
    /// Hamming distance of supports divided by `d * b`.
    pub nhd: f64,
    pub f1: f64,
    /// Mean number of abstract variables per concrete variable in `t_hat`.
    pub abstract_per_concrete: f64,
}

/// Support comparison after thresholding both maps at `threshold`.
pub fn t_support_metrics(t_hat: &DMatrix<f64>, t_true: &DMatrix<f64>, threshold: f64) -> Result<TSupportMetrics> {
    if t_hat.shape() != t_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimated T {:?} vs true T {:?}",
            t_hat.shape(),
            t_true.shape()
        )));
    }
    let (d, b) = t_hat.shape();
    let (mut tp, mut fp, mut fn_, mut hat_count) = (0usize, 0usize, 0usize, 0usize);
    for (h, t) in t_hat.iter().zip(t_true.iter()) {
        let (h, t) = (h.abs() > threshold, t.abs() > threshold);
        hat_count += h as usize;
        match (h, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let f1 = if tp == 0 {
        if fp == 0 && fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(TSupportMetrics {
        nhd: (fp + fn_) as f64 / (d * b).max(1) as f64,
        f1,
        abstract_per_concrete: hat_count as f64 / d.max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DirectLingam,
    AbsLingam,
    AbsLingamGt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DirectLingam, Method::AbsLingam, Method::AbsLingamGt];

    pub fn name(self) -> &'static str {
        match self {
            Method::DirectLingam => "direct_lingam",
            Method::AbsLingam => "abs_lingam",
            Method::AbsLingamGt => "abs_lingam_gt",
        }
    }
}

/// Metrics of one method on one scenario. `None` marks a metric that does
/// not apply to the method or could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub roc_auc: Option<f64>,
    pub pk_precision: Option<f64>,
    pub pk_recall: Option<f64>,
    pub t_support_f1: Option<f64>,
    pub t_support_nhd: Option<f64>,
    pub abstract_per_concrete: Option<f64>,
    pub time_total_s: f64,
    pub time_concrete_s: f64,
    pub pair_evals: u64,
    /// `w_hat` contains a path forbidden by the knowledge it was fitted with.
    pub knowledge_violated: bool,
    pub error: Option<String>,
}

impl RunReport {
    fn failed(method: Method, err: &Error) -> Self {
        Self {
            method,
            roc_auc: None,
            pk_precision: None,
            pk_recall: None,
            t_support_f1: None,
            t_support_nhd: None,
            abstract_per_concrete: None,
            time_total_s: 0.0,
            time_concrete_s: 0.0,
            pair_evals: 0,
            knowledge_violated: false,
            error: Some(err.to_string()),
        }
    }
}

/// One grid cell: a scenario family and a pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCell {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGrid {
    pub cells: Vec<BenchCell>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
}

fn default_repetitions() -> usize {
    1
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Reports of every requested method on one generated scenario.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell: usize,
    pub repetition: usize,
    pub scenario_seed: u64,
    pub reports: Vec<RunReport>,
}

/// Seed of repetition `rep` of cell `cell`, independent of scheduling.
pub fn scenario_seed(base: u64, cell: usize, rep: usize) -> u64 {
    rng::substream(base, ((cell as u64) << 32) | rep as u64).random()
}

/// Generates the scenario and runs the requested methods on it.
pub fn run_scenario(scenario_cfg: &ScenarioConfig, pipeline: &PipelineConfig, methods: &[Method]) -> Result<Vec<RunReport>> {
    let sc = generate(scenario_cfg)?;
    let truth = sc.permuted_truth()?;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let report = match m {
            Method::DirectLingam => {
                let empty = PriorKnowledge::empty(sc.d());
                direct_lingam(&sc.d_l, &empty, &pipeline.discovery).map(|run| RunReport {
                    method: m,
                    roc_auc: roc_auc_edges(&truth.w, &run.scores).ok(),
                    pk_precision: None,
                    pk_recall: None,
                    t_support_f1: None,
                    t_support_nhd: None,
                    abstract_per_concrete: None,
                    time_total_s: run.time_total_s(),
                    time_concrete_s: run.time_total_s(),
                    pair_evals: run.pair_evals,
                    knowledge_violated: false,
                    error: None,
                })
            }
            Method::AbsLingam | Method::AbsLingamGt => {
                let run = if m == Method::AbsLingam {
                    abs_lingam(&sc.d_l, &sc.d_j.0, &sc.d_j.1, pipeline)
                } else {
                    let m_true = crate::scm::LinearScm::with_uniform_noise(truth.m.clone(), sc.h.noise()[0])?;
                    abs_lingam_oracle(&sc.d_l, &truth.t, &m_true, pipeline)
                };
                run.and_then(|r| pipeline_report(m, &r, &truth.w, &truth.t, &truth.k_true))
            }
        };
        out.push(report.unwrap_or_else(|e| RunReport::failed(m, &e)));
    }
    Ok(out)
}

fn pipeline_report(
    method: Method,
    run: &crate::pipeline::AbsLingam,
    w_true: &DMatrix<f64>,
    t_true: &AbstractionMap,
    k_true: &PriorKnowledge,
) -> Result<RunReport> {
    let (p, r) = pk_scores(&run.knowledge, k_true);
    let tm = t_support_metrics(run.t_hat.matrix(), t_true.matrix(), run.t_hat.threshold().max(t_true.threshold()))?;
    Ok(RunReport {
        method,
        roc_auc: roc_auc_edges(w_true, &run.w_scores).ok(),
        pk_precision: Some(p),
        pk_recall: Some(r),
        t_support_f1: Some(tm.f1),
        t_support_nhd: Some(tm.nhd),
        abstract_per_concrete: Some(tm.abstract_per_concrete),
        time_total_s: run.report.time_total_s,
        time_concrete_s: run.report.time_concrete_s,
        pair_evals: run.report.pair_evals_concrete,
        knowledge_violated: !run.knowledge.violations(&run.w_hat.adjacency()).is_empty(),
        error: None,
    })
}

/// Runs every (cell, repetition); cells run on the rayon pool when
/// `parallel` is set. A failing scenario is recorded and the run continues.
pub fn run_benchmark(grid: &BenchGrid, parallel: bool) -> Vec<CellRun> {
    let jobs: Vec<(usize, usize)> = (0..grid.cells.len())
        .flat_map(|c| (0..grid.repetitions).map(move |r| (c, r)))
        .collect();
    par::map_collect(&jobs, parallel, |&(c, rep)| {
        let cell = &grid.cells[c];
        let seed = scenario_seed(grid.seed, c, rep);
        let scfg = ScenarioConfig {
            seed,
            ..cell.scenario.clone()
        };
        let mut pcfg = cell.pipeline.clone();
        pcfg.discovery.rng_seed = seed;
        let reports = run_scenario(&scfg, &pcfg, &grid.methods).unwrap_or_else(|e| {
            grid.methods.iter().map(|&m| RunReport::failed(m, &e)).collect()
        });
        CellRun {
            cell: c,
            repetition: rep,
            scenario_seed: seed,
            reports,
        }
    })
}

/// Mean and population standard deviation of the present values.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    cell: usize,
    rep: String,
    agg: bool,
    seed: Option<u64>,
    b: usize,
    abstract_edges: usize,
    block_min: usize,
    block_max: usize,
    n_concrete: usize,
    n_joint: usize,
    sigma2: f64,
    t_strategy: String,
    n_bootstrap: usize,
    method: &'a str,
    roc_auc: Option<f64>,
    pk_precision: Option<f64>,
    pk_recall: Option<f64>,
    t_f1: Option<f64>,
    t_nhd: Option<f64>,
    abstract_per_concrete: Option<f64>,
    time_total_s: Option<f64>,
    time_concrete_s: Option<f64>,
    pair_evals: Option<f64>,
    error: String,
}

pub const CSV_HEADER: &[&str] = &[
    "cell",
    "rep",
    "agg",
    "seed",
    "b",
    "abstract_edges",
    "block_min",
    "block_max",
    "n_concrete",
    "n_joint",
    "sigma2",
    "t_strategy",
    "n_bootstrap",
    "method",
    "roc_auc",
    "pk_precision",
    "pk_recall",
    "t_f1",
    "t_nhd",
    "abstract_per_concrete",
    "time_total_s",
    "time_concrete_s",
    "pair_evals",
    "error",
];

/// Writes one row per (cell, repetition, method), then `mean` and `std`
/// rows (`agg=true`) per (cell, method). Rows are written by one writer in
/// grid order.
pub fn write_results_csv<W: Write>(out: W, grid: &BenchGrid, runs: &[CellRun]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    let base = |cell: usize, rep: String, agg: bool, seed: Option<u64>, method: Method| {
        let c = &grid.cells[cell];
        CsvRow {
            cell,
            rep,
            agg,
            seed,
            b: c.scenario.b,
            abstract_edges: c.scenario.abstract_edges,
            block_min: c.scenario.block_size_range[0],
            block_max: c.scenario.block_size_range[1],
            n_concrete: c.scenario.n_concrete_samples,
            n_joint: c.scenario.n_joint_samples,
            sigma2: c.scenario.abstract_obs_noise_variance,
            t_strategy: c.pipeline.t_strategy.to_string(),
            n_bootstrap: c.pipeline.n_bootstrap,
            method: method.name(),
            roc_auc: None,
            pk_precision: None,
            pk_recall: None,
            t_f1: None,
            t_nhd: None,
            abstract_per_concrete: None,
            time_total_s: None,
            time_concrete_s: None,
            pair_evals: None,
            error: String::new(),
        }
    };
    for run in runs {
        for r in &run.reports {
            let mut row = base(run.cell, run.repetition.to_string(), false, Some(run.scenario_seed), r.method);
            row.roc_auc = r.roc_auc;
            row.pk_precision = r.pk_precision;
            row.pk_recall = r.pk_recall;
            row.t_f1 = r.t_support_f1;
            row.t_nhd = r.t_support_nhd;
            row.abstract_per_concrete = r.abstract_per_concrete;
            if r.error.is_none() {
                row.time_total_s = Some(r.time_total_s);
                row.time_concrete_s = Some(r.time_concrete_s);
                row.pair_evals = Some(r.pair_evals as f64);
            }
            row.error = r.error.clone().unwrap_or_default();
            w.serialize(row)?;
        }
    }
    for cell in 0..grid.cells.len() {
        for &method in &grid.methods {
            let reports: Vec<&RunReport> = runs
                .iter()
                .filter(|r| r.cell == cell)
                .flat_map(|r| r.reports.iter())
                .filter(|r| r.method == method && r.error.is_none())
                .collect();
            let stat = |f: &dyn Fn(&RunReport) -> Option<f64>| mean_std(reports.iter().filter_map(|r| f(r)));
            let columns = [
                stat(&|r| r.roc_auc),
                stat(&|r| r.pk_precision),
                stat(&|r| r.pk_recall),
                stat(&|r| r.t_support_f1),
                stat(&|r| r.t_support_nhd),
                stat(&|r| r.abstract_per_concrete),
                stat(&|r| Some(r.time_total_s)),
                stat(&|r| Some(r.time_concrete_s)),
                stat(&|r| Some(r.pair_evals as f64)),
            ];
            for (label, pick) in [("mean", 0usize), ("std", 1)] {
                let get = |i: usize| columns[i].map(|ms| if pick == 0 { ms.0 } else { ms.1 });
                let mut row = base(cell, label.into(), true, None, method);
                row.roc_auc = get(0);
                row.pk_precision = get(1);
                row.pk_recall = get(2);
                row.t_f1 = get(3);
                row.t_nhd = get(4);
                row.abstract_per_concrete = get(5);
                row.time_total_s = get(6);
                row.time_concrete_s = get(7);
                row.pair_evals = get(8);
                w.serialize(row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
