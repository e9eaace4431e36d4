//! DirectLiNGAM with forbidden-path prior knowledge.
//!
//! Ordering: at every round the remaining variable `i` minimizing
//! `sum_j min(0, stat(i, j))^2` becomes the next root and is regressed out
//! of the others. The term for `(i, j)` is skipped when `j` is known not to
//! be an ancestor of `i`, i.e. when the path `j -> ... -> i` is forbidden.
//!
//! Pruning: every variable is regressed on its order predecessors, minus the
//! ones forbidden from reaching it, and small coefficients are zeroed. A
//! closure pass then removes indirect forbidden paths.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;
use crate::linalg;
use crate::par;
use crate::scm::{LinearScm, NoiseSpec};

/// Forbidden directed paths: `(k, h)` means no path `k -> ... -> h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorKnowledge {
    n_vars: usize,
    forbidden: BTreeSet<(usize, usize)>,
    dense: Vec<Vec<bool>>,
}

impl PriorKnowledge {
    pub fn new(n_vars: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pk = Self::empty(n_vars);
        for (k, h) in pairs {
            for idx in [k, h] {
                if idx >= n_vars {
                    return Err(Error::IndexOutOfRange { index: idx, n_vars });
                }
            }
            if k == h {
                return Err(Error::InvalidConfig(format!(
                    "forbidden path from {k} to itself"
                )));
            }
            pk.forbidden.insert((k, h));
            pk.dense[k][h] = true;
        }
        Ok(pk)
    }

    pub fn empty(n_vars: usize) -> Self {
        Self {
            n_vars,
            forbidden: BTreeSet::new(),
            dense: vec![vec![false; n_vars]; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.forbidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forbidden.is_empty()
    }

    pub fn is_forbidden(&self, from: usize, to: usize) -> bool {
        self.dense[from][to]
    }

    /// Pairs in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.forbidden.iter().copied()
    }

    pub fn contains_pair(&self, pair: (usize, usize)) -> bool {
        self.forbidden.contains(&pair)
    }

    /// `(k, h)` pairs of `self` with an actual path `k -> ... -> h` in `adj`.
    pub fn violations(&self, adj: &graph::Adjacency) -> Vec<(usize, usize)> {
        let reach = graph::transitive_closure(adj);
        self.pairs().filter(|&(k, h)| reach[k][h]).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PriorKnowledgeRepr {
    n_vars: usize,
    forbidden_paths: Vec<(usize, usize)>,
}

impl Serialize for PriorKnowledge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PriorKnowledgeRepr {
            n_vars: self.n_vars,
            forbidden_paths: self.pairs().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriorKnowledge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PriorKnowledgeRepr::deserialize(d)?;
        PriorKnowledge::new(repr.n_vars, repr.forbidden_paths).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Entropy-approximation likelihood ratio.
    #[default]
    EntropyLr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub prune_threshold: f64,
    pub measure: Measure,
    pub rng_seed: u64,
    /// Evaluate candidates of a round on the rayon pool.
    pub parallel: bool,
    /// Compute each unordered pair once per round and reuse it for both
    /// directed terms. Off by default, so the counter reflects one
    /// evaluation per directed term.
    pub reuse_pair_statistics: bool,
    /// Ridge used when a regression Gram matrix is singular.
    pub ridge: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            prune_threshold: 0.05,
            measure: Measure::EntropyLr,
            rng_seed: 0,
            parallel: true,
            reuse_pair_statistics: false,
            ridge: 1e-8,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::InvalidConfig("prune_threshold must be >= 0".into()));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::InvalidConfig("ridge must be > 0".into()));
        }
        Ok(())
    }
}

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;
/// Entropy of a standard Gaussian, `(1 + ln 2 pi) / 2`.
const H_GAUSS: f64 = 1.418_938_533_204_672_7;
/// Below this residual variance two columns count as collinear.
const COLLINEAR: f64 = 1e-12;

#[inline]
fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (1.0 + (-2.0 * a).exp()).ln() - std::f64::consts::LN_2
}

fn entropy_from_moments(mean_log_cosh: f64, mean_u_gauss: f64) -> f64 {
    H_GAUSS - K1 * (mean_log_cosh - GAMMA).powi(2) - K2 * mean_u_gauss.powi(2)
}

/// Maximum-entropy approximation of the differential entropy of a
/// standardized sample.
pub fn entropy(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for &x in u {
        a += log_cosh(x);
        b += x * (-0.5 * x * x).exp();
    }
    entropy_from_moments(a / n, b / n)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Likelihood-ratio statistic for standardized columns with cached marginal
/// entropies. Positive favors `xi -> xj`.
fn lr_statistic(xi: &[f64], xj: &[f64], h_i: f64, h_j: f64, i: usize, j: usize) -> Result<f64> {
    let n = xi.len() as f64;
    let rho = dot(xi, xj) / n;
    let var = 1.0 - rho * rho;
    if !(var > COLLINEAR) {
        return Err(Error::DegenerateColumn(if i < j { j } else { i }));
    }
    let inv_sd = 1.0 / var.sqrt();
    let (mut a_ij, mut b_ij, mut a_ji, mut b_ji) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &q) in xi.iter().zip(xj) {
        let r = (p - rho * q) * inv_sd;
        a_ij += log_cosh(r);
        b_ij += r * (-0.5 * r * r).exp();
        let r = (q - rho * p) * inv_sd;
        a_ji += log_cosh(r);
        b_ji += r * (-0.5 * r * r).exp();
    }
    let h_rij = entropy_from_moments(a_ij / n, b_ij / n);
    let h_rji = entropy_from_moments(a_ji / n, b_ji / n);
    Ok((h_j + h_rij) - (h_i + h_rji))
}

fn standardize_in_place(col: &mut [f64], idx: usize) -> Result<()> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(var > COLLINEAR) {
        return Err(Error::DegenerateColumn(idx));
    }
    let sd = var.sqrt();
    for x in col.iter_mut() {
        *x = (*x - mean) / sd;
    }
    Ok(())
}

/// Pairwise statistic between two raw columns; positive favors `x -> y`.
pub fn pairwise_statistic(x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "columns of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut a = x.as_slice().to_vec();
    let mut b = y.as_slice().to_vec();
    standardize_in_place(&mut a, 0)?;
    standardize_in_place(&mut b, 1)?;
    let (ha, hb) = (entropy(&a), entropy(&b));
    lr_statistic(&a, &b, ha, hb, 0, 1)
}

/// Causal order together with the number of pairwise evaluations spent.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalOrder {
    pub order: Vec<usize>,
    pub pair_evals: u64,
}

fn columns_of(data: &DMatrix<f64>) -> Vec<Vec<f64>> {
    data.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn check_data(data: &DMatrix<f64>, k: &PriorKnowledge) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    if k.n_vars() != data.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "prior knowledge over {} variables, data has {}",
            k.n_vars(),
            data.ncols()
        )));
    }
    if data.nrows() <= data.ncols() {
        log::warn!(
            "{} samples for {} variables; the causal order is unreliable",
            data.nrows(),
            data.ncols()
        );
    }
    Ok(())
}

/// Greedy root extraction.
pub fn causal_order(data: &DMatrix<f64>, k: &PriorKnowledge, cfg: &DiscoveryConfig) -> Result<CausalOrder> {
    check_data(data, k)?;
    let d = data.ncols();
    let mut cols = columns_of(data);
    for (j, c) in cols.iter_mut().enumerate() {
        standardize_in_place(c, j)?;
    }
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    let mut pair_evals = 0u64;
    while remaining.len() > 1 {
        let h: Vec<f64> = par::map_collect(&remaining, cfg.parallel, |&j| entropy(&cols[j]));
        let pos: Vec<usize> = (0..remaining.len()).collect();
        let scores: Vec<Result<(f64, u64)>> = if cfg.reuse_pair_statistics {
            score_with_reuse(&cols, &remaining, &h, k, cfg.parallel)
        } else {
            par::map_collect(&pos, cfg.parallel, |&a| {
                let i = remaining[a];
                let mut score = 0.0;
                let mut evals = 0u64;
                for (b, &j) in remaining.iter().enumerate() {
                    if a == b || k.is_forbidden(j, i) {
                        continue;
                    }
                    let s = lr_statistic(&cols[i], &cols[j], h[a], h[b], i, j)?;
                    evals += 1;
                    score += s.min(0.0).powi(2);
                }
                Ok((score, evals))
            })
        };
        let mut best = (f64::INFINITY, usize::MAX);
        for (a, s) in scores.into_iter().enumerate() {
            let (score, evals) = s?;
            pair_evals += evals;
            if score < best.0 {
                best = (score, a);
            }
        }
        let root = remaining.remove(best.1);
        order.push(root);
        let root_col = std::mem::take(&mut cols[root]);
        let n = root_col.len() as f64;
        for &j in &remaining {
            let col = &mut cols[j];
            let beta = dot(col, &root_col) / n;
            for (x, r) in col.iter_mut().zip(&root_col) {
                *x -= beta * r;
            }
            standardize_in_place(col, j)?;
        }
    }
    order.extend(remaining);
    Ok(CausalOrder { order, pair_evals })
}

/// Variant computing every needed unordered pair once; `stat(j, i) =
/// -stat(i, j)` exactly under the fused computation.
fn score_with_reuse(
    cols: &[Vec<f64>],
    remaining: &[usize],
    h: &[f64],
    k: &PriorKnowledge,
    parallel: bool,
) -> Vec<Result<(f64, u64)>> {
    let m = remaining.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| ((a + 1)..m).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            let (i, j) = (remaining[a], remaining[b]);
            !(k.is_forbidden(j, i) && k.is_forbidden(i, j))
        })
        .collect();
    let stats = par::map_collect(&pairs, parallel, |&(a, b)| {
        lr_statistic(&cols[remaining[a]], &cols[remaining[b]], h[a], h[b], remaining[a], remaining[b])
    });
    let mut scores = vec![0.0; m];
    let mut evals = vec![0u64; m];
    for (&(a, b), s) in pairs.iter().zip(stats) {
        let s = match s {
            Ok(s) => s,
            Err(e) => return vec![Err(e)],
        };
        let (i, j) = (remaining[a], remaining[b]);
        evals[a] += 1;
        if !k.is_forbidden(j, i) {
            scores[a] += s.min(0.0).powi(2);
        }
        if !k.is_forbidden(i, j) {
            scores[b] += (-s).min(0.0).powi(2);
        }
    }
    scores.into_iter().zip(evals).map(Ok).collect()
}

/// Output of [`prune_edges`].
#[derive(Debug, Clone)]
pub struct Pruned {
    pub model: LinearScm,
    /// Regression coefficients before thresholding, zero where the edge is
    /// inadmissible or was cut by the closure pass. Used as edge scores.
    pub scores: DMatrix<f64>,
    /// Some regression needed the ridge fallback.
    pub ridge_used: bool,
    /// Edges removed by the forbidden-path closure pass.
    pub closure_removed: usize,
}

/// Regression of each variable on its admissible predecessors, hard
/// thresholding, then removal of forbidden indirect paths.
pub fn prune_edges(
    data: &DMatrix<f64>,
    order: &[usize],
    k: &PriorKnowledge,
    cfg: &DiscoveryConfig,
) -> Result<Pruned> {
    check_data(data, k)?;
    let d = data.ncols();
    if order.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "order has {} entries for {d} variables",
            order.len()
        )));
    }
    let (z, _) = linalg::standardize(data)?;
    let n = z.nrows() as f64;
    let cov = z.tr_mul(&z) / n;
    let mut w = DMatrix::zeros(d, d);
    let mut scores = DMatrix::zeros(d, d);
    let mut residual_var = vec![1.0; d];
    let mut ridge_used = false;
    for (p, &t) in order.iter().enumerate() {
        let preds: Vec<usize> = order[..p]
            .iter()
            .copied()
            .filter(|&q| !k.is_forbidden(q, t))
            .collect();
        if preds.is_empty() {
            continue;
        }
        let gram = DMatrix::from_fn(preds.len(), preds.len(), |a, b| cov[(preds[a], preds[b])]);
        let rhs = DVector::from_iterator(preds.len(), preds.iter().map(|&q| cov[(q, t)]));
        let (beta, ridged) = linalg::solve_normal_equations(&gram, &rhs, cfg.ridge);
        if ridged {
            log::warn!("collinear predecessors for variable {t}; ridge fallback used");
            ridge_used = true;
        }
        residual_var[t] = (cov[(t, t)] - beta.dot(&rhs)).max(0.0);
        for (a, &q) in preds.iter().enumerate() {
            scores[(q, t)] = beta[a];
            if beta[a].abs() >= cfg.prune_threshold {
                w[(q, t)] = beta[a];
            }
        }
    }
    let before = w.clone();
    let closure_removed = enforce_forbidden_paths(&mut w, k);
    for (s, (b, a)) in scores.iter_mut().zip(before.iter().zip(w.iter())) {
        if *b != 0.0 && *a == 0.0 {
            *s = 0.0;
        }
    }
    let noise = residual_var
        .into_iter()
        .map(|variance| NoiseSpec::Gaussian { mean: 0.0, variance })
        .collect();
    Ok(Pruned {
        model: LinearScm::new(w, noise)?,
        scores,
        ridge_used,
        closure_removed,
    })
}

/// Removes the weakest edge of a violating path until no forbidden path
/// remains. Returns the number of removed edges.
pub fn enforce_forbidden_paths(w: &mut DMatrix<f64>, k: &PriorKnowledge) -> usize {
    let mut removed = 0;
    loop {
        let adj = graph::support(w);
        let reach = graph::transitive_closure(&adj);
        let Some((from, to)) = k.pairs().find(|&(a, c)| reach[a][c]) else {
            return removed;
        };
        let path = graph::find_path(&adj, from, to).expect("reachable pair has a path");
        let (a, c) = path
            .windows(2)
            .map(|e| (e[0], e[1]))
            .min_by(|x, y| w[*x].abs().total_cmp(&w[*y].abs()))
            .expect("path has an edge");
        w[(a, c)] = 0.0;
        removed += 1;
    }
}

/// Result of a full DirectLiNGAM run.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub model: LinearScm,
    pub scores: DMatrix<f64>,
    pub order: Vec<usize>,
    pub pair_evals: u64,
    pub ridge_used: bool,
    pub time_order_s: f64,
    pub time_prune_s: f64,
}

impl Discovery {
    pub fn time_total_s(&self) -> f64 {
        self.time_order_s + self.time_prune_s
    }
}

pub fn direct_lingam(data: &DMatrix<f64>, k: &PriorKnowledge, cfg: &DiscoveryConfig) -> Result<Discovery> {
    cfg.validate()?;
    check_data(data, k)?;
    let d = data.ncols();
    if d == 1 {
        return Ok(Discovery {
            model: LinearScm::with_uniform_noise(
                DMatrix::zeros(1, 1),
                NoiseSpec::Gaussian { mean: 0.0, variance: 1.0 },
            )?,
            scores: DMatrix::zeros(1, 1),
            order: vec![0],
            pair_evals: 0,
            ridge_used: false,
            time_order_s: 0.0,
            time_prune_s: 0.0,
        });
    }
    let start = Instant::now();
    let CausalOrder { order, pair_evals } = causal_order(data, k, cfg)?;
    let time_order_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let pruned = prune_edges(data, &order, k, cfg)?;
    let time_prune_s = start.elapsed().as_secs_f64();
    Ok(Discovery {
        model: pruned.model,
        scores: pruned.scores,
        order,
        pair_evals,
        ridge_used: pruned.ridge_used,
        time_order_s,
        time_prune_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scm::NoiseSpec;
    use proptest::prelude::*;

    fn exp_column(n: usize, rng: &mut rng::Rng) -> DVector<f64> {
        let spec = NoiseSpec::Exponential { rate: 1.0 };
        DVector::from_fn(n, |_, _| spec.sample(rng))
    }

    /// Direct evaluation of the statistic from its definition, with explicit
    /// residual vectors and sample standard deviations.
    fn naive_statistic(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let std = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n;
            let s = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
            v.iter().map(|a| (a - m) / s).collect::<Vec<_>>()
        };
        let h = |u: &[f64]| {
            let lc = u.iter().map(|a| a.cosh().ln()).sum::<f64>() / n;
            let g = u.iter().map(|a| a * (-a * a / 2.0).exp()).sum::<f64>() / n;
            (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0
                - 79.047 * (lc - 0.37457).powi(2)
                - 7.4129 * g * g
        };
        let (xs, ys) = (std(x), std(y));
        let cov = xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / n;
        let rxy: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a - cov * b).collect();
        let ryx: Vec<f64> = ys.iter().zip(&xs).map(|(a, b)| a - cov * b).collect();
        (h(&ys) + h(&std(&rxy))) - (h(&xs) + h(&std(&ryx)))
    }

    #[test]
    fn statistic_matches_naive_definition() {
        let mut r = rng::seeded(3);
        let x = exp_column(500, &mut r);
        let e = exp_column(500, &mut r);
        let y = &x * 1.5 + &e;
        let fast = pairwise_statistic(&x, &y).unwrap();
        let slow = naive_statistic(x.as_slice(), y.as_slice());
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn statistic_favors_true_direction() {
        let mut wins = 0;
        for seed in 0..100 {
            let mut r = rng::seeded(seed);
            let x = exp_column(10_000, &mut r);
            let e = exp_column(10_000, &mut r);
            let y = &x * 2.0 + &e;
            if pairwise_statistic(&x, &y).unwrap() > 0.0 {
                wins += 1;
            }
        }
        assert!(wins >= 95, "{wins}/100");
    }

    #[test]
    fn statistic_is_antisymmetric() {
        let mut r = rng::seeded(9);
        let x = exp_column(2000, &mut r);
        let y = &x * -0.7 + exp_column(2000, &mut r);
        let a = pairwise_statistic(&x, &y).unwrap();
        let b = pairwise_statistic(&y, &x).unwrap();
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn identical_columns_are_degenerate() {
        let mut r = rng::seeded(1);
        let x = exp_column(100, &mut r);
        assert!(matches!(
            pairwise_statistic(&x, &x.clone()),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn independent_columns_stay_below_permutation_null() {
        use rand::seq::SliceRandom;
        // Null quantile from pairs whose dependence was destroyed by
        // shuffling, then fresh independent pairs checked against it.
        let n = 2000;
        let mut null = Vec::new();
        for seed in 0..100 {
            let mut r = rng::seeded(1000 + seed);
            let x = exp_column(n, &mut r);
            let mut y: Vec<f64> = (&x * 2.0 + exp_column(n, &mut r)).as_slice().to_vec();
            y.shuffle(&mut r);
            null.push(pairwise_statistic(&x, &DVector::from_vec(y)).unwrap().abs());
        }
        null.sort_by(f64::total_cmp);
        let q99 = null[98];
        let mut exceed = 0;
        for seed in 0..100 {
            let mut r = rng::seeded(5000 + seed);
            let x = exp_column(n, &mut r);
            let y = exp_column(n, &mut r);
            if pairwise_statistic(&x, &y).unwrap().abs() > q99 {
                exceed += 1;
            }
        }
        assert!(exceed <= 5, "{exceed} exceedances of the 0.99 null quantile");
    }

    fn chain_data(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        let x = exp_column(n, &mut r);
        let y = &x * 0.8 + exp_column(n, &mut r);
        DMatrix::from_columns(&[y, x])
    }

    #[test]
    fn two_variable_root_is_source() {
        let mut ok = 0;
        for seed in 0..100 {
            let data = chain_data(5000, seed);
            let o = causal_order(&data, &PriorKnowledge::empty(2), &DiscoveryConfig::default()).unwrap();
            if o.order[0] == 1 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}/100");
    }

    #[test]
    fn empty_data_is_an_error() {
        let data = DMatrix::<f64>::zeros(0, 3);
        assert!(matches!(
            causal_order(&data, &PriorKnowledge::empty(3), &DiscoveryConfig::default()),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn single_variable_gives_empty_model() {
        let data = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.5, 3.0]);
        let out = direct_lingam(&data, &PriorKnowledge::empty(1), &DiscoveryConfig::default()).unwrap();
        assert_eq!(out.model.n_vars(), 1);
        assert_eq!(out.model.weights()[(0, 0)], 0.0);
        assert_eq!(out.pair_evals, 0);
    }

    #[test]
    fn block_knowledge_reduces_pair_count() {
        // Two blocks of three; every cross-block pair forbidden both ways.
        let scm = LinearScm::with_uniform_noise(
            DMatrix::from_fn(6, 6, |i, j| if j == i + 1 && i != 2 { 0.9 } else { 0.0 }),
            NoiseSpec::Exponential { rate: 1.0 },
        )
        .unwrap();
        let data = scm.simulate(2000, 4, None).unwrap();
        let block = |i: usize| i / 3;
        let pairs = (0..6).flat_map(|a| (0..6).map(move |c| (a, c))).filter(|&(a, c)| block(a) != block(c));
        let k = PriorKnowledge::new(6, pairs).unwrap();
        let cfg = DiscoveryConfig::default();
        let free = causal_order(&data, &PriorKnowledge::empty(6), &cfg).unwrap();
        let constrained = causal_order(&data, &k, &cfg).unwrap();
        // Unconstrained: sum over rounds of m(m-1) for m = 6..2.
        assert_eq!(free.pair_evals, 30 + 20 + 12 + 6 + 2);
        // Constrained: only same-block terms, counted from the rounds the
        // returned order implies.
        let mut expected = 0u64;
        for r in 0..5 {
            let rest = &constrained.order[r..];
            for &a in rest {
                expected += rest.iter().filter(|&&c| c != a && block(c) == block(a)).count() as u64;
            }
        }
        assert_eq!(constrained.pair_evals, expected);
        assert!(constrained.pair_evals < free.pair_evals);
    }

    #[test]
    fn reuse_flag_keeps_the_order() {
        let scm = LinearScm::with_uniform_noise(
            DMatrix::from_row_slice(4, 4, &[
                0.0, 0.8, 0.0, 0.5, //
                0.0, 0.0, -0.9, 0.0, //
                0.0, 0.0, 0.0, 0.7, //
                0.0, 0.0, 0.0, 0.0,
            ]),
            NoiseSpec::Exponential { rate: 1.0 },
        )
        .unwrap();
        let data = scm.simulate(3000, 8, None).unwrap();
        let k = PriorKnowledge::new(4, [(3, 0), (2, 1)]).unwrap();
        let a = causal_order(&data, &k, &DiscoveryConfig::default()).unwrap();
        let b = causal_order(
            &data,
            &k,
            &DiscoveryConfig {
                reuse_pair_statistics: true,
                ..DiscoveryConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a.order, b.order);
        assert!(b.pair_evals <= a.pair_evals);
    }

    #[test]
    fn all_pairs_forbidden_gives_empty_graph() {
        let data = chain_data(1000, 2);
        let k = PriorKnowledge::new(2, [(0, 1), (1, 0)]).unwrap();
        let out = direct_lingam(&data, &k, &DiscoveryConfig::default()).unwrap();
        assert!(out.model.weights().iter().all(|&w| w == 0.0));
        assert_eq!(out.pair_evals, 0);
    }

    #[test]
    fn closure_pass_breaks_indirect_paths() {
        let mut w = DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0]);
        let k = PriorKnowledge::new(3, [(0, 2)]).unwrap();
        assert_eq!(enforce_forbidden_paths(&mut w, &k), 1);
        assert_eq!(w[(1, 2)], 0.0);
        assert_eq!(w[(0, 1)], 0.9);
    }

    #[test]
    fn knowledge_rejects_bad_pairs() {
        assert!(PriorKnowledge::new(3, [(1, 1)]).is_err());
        assert!(matches!(
            PriorKnowledge::new(3, [(0, 3)]),
            Err(Error::IndexOutOfRange { index: 3, n_vars: 3 })
        ));
    }

    #[test]
    fn knowledge_json_round_trip() {
        let k = PriorKnowledge::new(4, [(0, 1), (3, 2)]).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        let back: PriorKnowledge = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
    }

    fn random_scm(d: usize, density: f64, seed: u64) -> LinearScm {
        use rand::Rng as _;
        let mut r = rng::seeded(seed);
        let w = DMatrix::from_fn(d, d, |i, j| {
            if i < j && r.random_bool(density) {
                crate::scm::signed_uniform(&mut r, 0.5, 2.0)
            } else {
                0.0
            }
        });
        LinearScm::with_uniform_noise(w, NoiseSpec::Exponential { rate: 1.0 }).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn output_is_acyclic_and_respects_knowledge(seed in 0u64..10_000, n_pairs in 0usize..12) {
            use rand::Rng as _;
            let scm = random_scm(5, 0.4, seed);
            let data = scm.simulate(400, seed, None).unwrap();
            let mut r = rng::seeded(seed ^ 0xabc);
            let pairs: Vec<(usize, usize)> = (0..n_pairs)
                .map(|_| (r.random_range(0..5), r.random_range(0..5)))
                .filter(|(a, c)| a != c)
                .collect();
            let k = PriorKnowledge::new(5, pairs).unwrap();
            let out = direct_lingam(&data, &k, &DiscoveryConfig::default()).unwrap();
            prop_assert!(graph::kahn_order(&out.model.adjacency()).is_some());
            prop_assert!(k.violations(&out.model.adjacency()).is_empty());
        }

        #[test]
        fn rescaling_a_column_keeps_the_order(seed in 0u64..10_000, col in 0usize..4) {
            let scm = random_scm(4, 0.5, seed);
            let data = scm.simulate(500, seed, None).unwrap();
            let mut scaled = data.clone();
            scaled.column_mut(col).scale_mut(2.0);
            let k = PriorKnowledge::empty(4);
            let cfg = DiscoveryConfig { parallel: false, ..DiscoveryConfig::default() };
            let a = causal_order(&data, &k, &cfg).unwrap();
            let b = causal_order(&scaled, &k, &cfg).unwrap();
            prop_assert_eq!(a.order, b.order);
        }

        #[test]
        fn parallel_and_sequential_agree(seed in 0u64..10_000) {
            let scm = random_scm(5, 0.4, seed);
            let data = scm.simulate(300, seed, None).unwrap();
            let k = PriorKnowledge::empty(5);
            let par = direct_lingam(&data, &k, &DiscoveryConfig::default()).unwrap();
            let seq = direct_lingam(&data, &k, &DiscoveryConfig { parallel: false, ..DiscoveryConfig::default() }).unwrap();
            prop_assert_eq!(par.order, seq.order);
            prop_assert_eq!(par.model.weights(), seq.model.weights());
        }
    }
}
