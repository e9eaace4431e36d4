//! Sampling concrete models that a given abstract model abstracts.
//!
//! For each abstract target `Y_j` the inner block `W_jj` is a random DAG in
//! which every irrelevant variable reaches a relevant one, giving
//! `s_j = (I - W_jj)^{-1} t_j`. Every source row `k` of block `i` then gets
//! `[W_ij]_k = m_ij [t_i]_k c^T` where `c = v / s_j` (elementwise) for a draw
//! `v` from the probability simplex, so `c^T s_j = 1` and hence
//! `W_ij s_j = m_ij t_i` holds by construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::abstraction::{relevant_sets, AbstractionMap};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scm::{LinearScm, NoiseSpec};

/// How simplex vectors `v` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimplexDraw {
    /// Symmetric Dirichlet with concentration `alpha`.
    Dirichlet { alpha: f64 },
    /// Always `(1/N, ..., 1/N)`.
    Barycenter,
}

impl SimplexDraw {
    pub fn sample(&self, n: usize, rng: &mut Rng) -> DVector<f64> {
        match *self {
            SimplexDraw::Barycenter => DVector::from_element(n, 1.0 / n as f64),
            SimplexDraw::Dirichlet { alpha } => {
                let gamma = Gamma::new(alpha, 1.0).expect("validated alpha");
                loop {
                    let g = DVector::from_fn(n, |_, _| gamma.sample(rng));
                    let total = g.sum();
                    if total > 0.0 && total.is_finite() {
                        return g / total;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcretizeConfig {
    /// Edge probability inside a block.
    pub inner_edge_prob: f64,
    /// Distribution of inner-block and ignored-variable weights.
    pub inner_weight: NoiseSpec,
    pub simplex: SimplexDraw,
    /// Extra ignored variables appended after the given ones.
    pub ignored_block_size: usize,
    /// Exogenous noise of the emitted concrete model.
    pub noise: NoiseSpec,
    pub rng_seed: u64,
    pub max_resample: usize,
    /// Smallest admissible `|s_i|`.
    pub min_exogenous: f64,
}

impl Default for ConcretizeConfig {
    fn default() -> Self {
        Self {
            inner_edge_prob: 0.5,
            inner_weight: NoiseSpec::Gaussian {
                mean: 0.0,
                variance: 1.0,
            },
            simplex: SimplexDraw::Dirichlet { alpha: 1.0 },
            ignored_block_size: 0,
            noise: NoiseSpec::Exponential { rate: 1.0 },
            rng_seed: 0,
            max_resample: 100,
            min_exogenous: 1e-3,
        }
    }
}

impl ConcretizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.inner_edge_prob) {
            return Err(Error::InvalidConfig("inner_edge_prob must lie in [0, 1]".into()));
        }
        if self.max_resample == 0 {
            return Err(Error::InvalidConfig("max_resample must be >= 1".into()));
        }
        if let SimplexDraw::Dirichlet { alpha } = self.simplex {
            if !(alpha > 0.0) {
                return Err(Error::InvalidConfig("dirichlet alpha must be > 0".into()));
            }
        }
        self.inner_weight.validate()?;
        self.noise.validate()
    }
}

/// Block membership of every concrete variable (`None` = ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub membership: Vec<Option<usize>>,
}

impl BlockLayout {
    /// Relevant variables join their abstract variable's block; every other
    /// variable is ignored.
    pub fn from_abstraction(t: &AbstractionMap) -> Self {
        Self {
            membership: relevant_sets(t).owners(t.d()),
        }
    }

    pub fn members(&self, block: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&i| self.membership[i] == Some(block))
            .collect()
    }

    pub fn ignored(&self) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&i| self.membership[i].is_none())
            .collect()
    }
}

/// A sampled concretization together with the (possibly extended) `T` and
/// layout it is consistent with.
#[derive(Debug, Clone)]
pub struct Concretization {
    pub l: LinearScm,
    pub t: AbstractionMap,
    pub layout: BlockLayout,
    /// `s_j` per abstract variable, aligned with `layout.members(j)` in local
    /// order (irrelevant members first).
    pub exogenous: Vec<DVector<f64>>,
}

fn draw_weight(spec: &NoiseSpec, rng: &mut Rng) -> f64 {
    loop {
        let w = spec.sample(rng);
        if w != 0.0 {
            return w;
        }
    }
}

/// Random strictly upper-triangular inner block for a block whose relevant
/// variables come last in local order. Every irrelevant variable gets a path
/// to a relevant one, and the draw is rejected until every entry of
/// `s = (I - W)^{-1} t` has magnitude at least `cfg.min_exogenous`.
pub fn sample_inner_block(
    relevant: &[bool],
    t_block: &DVector<f64>,
    cfg: &ConcretizeConfig,
    rng: &mut Rng,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = relevant.len();
    let first_relevant = relevant
        .iter()
        .position(|&r| r)
        .ok_or_else(|| Error::InvalidConfig("block without relevant variables".into()))?;
    if relevant[first_relevant..].iter().any(|&r| !r) {
        return Err(Error::InvalidConfig(
            "relevant variables must come last in block-local order".into(),
        ));
    }
    if t_block.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "t block has {} entries for {n} variables",
            t_block.len()
        )));
    }
    for _ in 0..cfg.max_resample {
        let mut w = DMatrix::zeros(n, n);
        for a in 0..n {
            for c in (a + 1)..n {
                if rng.random_bool(cfg.inner_edge_prob) {
                    w[(a, c)] = draw_weight(&cfg.inner_weight, rng);
                }
            }
        }
        let mut reaches = relevant.to_vec();
        for a in (0..first_relevant).rev() {
            reaches[a] = ((a + 1)..n).any(|c| w[(a, c)] != 0.0 && reaches[c]);
            if !reaches[a] {
                let c = rng.random_range(first_relevant..n);
                w[(a, c)] = draw_weight(&cfg.inner_weight, rng);
                reaches[a] = true;
            }
        }
        let s = exogenous_column(&w, t_block)?;
        if s.iter().all(|v| v.abs() >= cfg.min_exogenous) {
            return Ok((w, s));
        }
    }
    Err(Error::ResampleExhausted(cfg.max_resample))
}

/// `(I - W)^{-1} t` for a strictly upper-triangular block.
pub fn exogenous_column(w: &DMatrix<f64>, t: &DVector<f64>) -> Result<DVector<f64>> {
    let n = w.nrows();
    let a = DMatrix::identity(n, n) - w;
    a.lu().solve(t).ok_or(Error::SingularBlock(0))
}

/// `c = v / s` elementwise; `c^T s = sum(v) = 1`.
pub fn right_inverse(v: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
    v.component_div(s)
}

/// Samples a concrete model abstracted by `(m, t)`.
pub fn sample_concretization(
    m: &LinearScm,
    t: &AbstractionMap,
    layout: &BlockLayout,
    cfg: &ConcretizeConfig,
) -> Result<Concretization> {
    cfg.validate()?;
    check_inputs(m, t, layout)?;
    let mut rng = rng::seeded(cfg.rng_seed);
    let b = t.b();
    let mut inner = Vec::with_capacity(b);
    for j in 0..b {
        let members = local_order(t, layout, j);
        let mask: Vec<bool> = members.iter().map(|&i| t.is_relevant(i, j)).collect();
        let t_j = DVector::from_iterator(members.len(), members.iter().map(|&i| t.matrix()[(i, j)]));
        let (w_jj, _) = sample_inner_block(&mask, &t_j, cfg, &mut rng)?;
        inner.push(w_jj);
    }
    assemble(m, t, layout, inner, cfg, &mut rng)
}

/// Same as [`sample_concretization`] but with caller-supplied inner blocks
/// (in local order, irrelevant members first).
pub fn concretize_with_inner_blocks(
    m: &LinearScm,
    t: &AbstractionMap,
    layout: &BlockLayout,
    inner: Vec<DMatrix<f64>>,
    cfg: &ConcretizeConfig,
) -> Result<Concretization> {
    cfg.validate()?;
    check_inputs(m, t, layout)?;
    if inner.len() != t.b() {
        return Err(Error::DimensionMismatch(format!(
            "{} inner blocks for {} abstract variables",
            inner.len(),
            t.b()
        )));
    }
    let mut rng = rng::seeded(cfg.rng_seed);
    assemble(m, t, layout, inner, cfg, &mut rng)
}

fn check_inputs(m: &LinearScm, t: &AbstractionMap, layout: &BlockLayout) -> Result<()> {
    t.validate()?;
    if m.n_vars() != t.b() {
        return Err(Error::DimensionMismatch(format!(
            "abstract model has {} variables, T has {} columns",
            m.n_vars(),
            t.b()
        )));
    }
    if layout.membership.len() != t.d() {
        return Err(Error::DimensionMismatch(format!(
            "layout covers {} variables, T has {} rows",
            layout.membership.len(),
            t.d()
        )));
    }
    let owners = relevant_sets(t).owners(t.d());
    for (i, owner) in owners.iter().enumerate() {
        if owner.is_some() && layout.membership[i] != *owner {
            return Err(Error::InvalidAbstraction(format!(
                "relevant variable {i} is placed outside its abstract block"
            )));
        }
        if let Some(j) = layout.membership[i] {
            if j >= t.b() {
                return Err(Error::IndexOutOfRange { index: j, n_vars: t.b() });
            }
        }
    }
    Ok(())
}

/// Block members with irrelevant variables first, each group by index.
fn local_order(t: &AbstractionMap, layout: &BlockLayout, j: usize) -> Vec<usize> {
    let members = layout.members(j);
    let (mut irr, rel): (Vec<usize>, Vec<usize>) =
        members.into_iter().partition(|&i| !t.is_relevant(i, j));
    irr.extend(rel);
    irr
}

fn assemble(
    m: &LinearScm,
    t: &AbstractionMap,
    layout: &BlockLayout,
    inner: Vec<DMatrix<f64>>,
    cfg: &ConcretizeConfig,
    rng: &mut Rng,
) -> Result<Concretization> {
    let b = t.b();
    let d0 = t.d();
    let extra = cfg.ignored_block_size;
    let d = d0 + extra;
    let tm = t.matrix();
    let mw = m.weights();
    let locals: Vec<Vec<usize>> = (0..b).map(|j| local_order(t, layout, j)).collect();
    let mut w = DMatrix::zeros(d, d);
    let mut exogenous = Vec::with_capacity(b);
    for (j, members) in locals.iter().enumerate() {
        let w_jj = &inner[j];
        if w_jj.nrows() != members.len() || w_jj.ncols() != members.len() {
            return Err(Error::DimensionMismatch(format!(
                "inner block {j} is {}x{}, block has {} members",
                w_jj.nrows(),
                w_jj.ncols(),
                members.len()
            )));
        }
        for (a, &ia) in members.iter().enumerate() {
            for (c, &ic) in members.iter().enumerate() {
                w[(ia, ic)] = w_jj[(a, c)];
            }
        }
        let t_j = DVector::from_iterator(members.len(), members.iter().map(|&i| tm[(i, j)]));
        let s_j = exogenous_column(w_jj, &t_j)?;
        if s_j.iter().any(|v| *v == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "exogenous coefficients of block {j} contain zeros"
            )));
        }
        exogenous.push(s_j);
    }
    for (j, target) in locals.iter().enumerate() {
        let s_j = &exogenous[j];
        for (i, source) in locals.iter().enumerate() {
            let m_ij = mw[(i, j)];
            if i == j || m_ij == 0.0 {
                continue;
            }
            for &k in source {
                let t_ik = tm[(k, i)];
                if t_ik == 0.0 {
                    continue;
                }
                let v = cfg.simplex.sample(target.len(), rng);
                let c = right_inverse(&v, s_j);
                for (h, &col) in target.iter().enumerate() {
                    w[(k, col)] = m_ij * t_ik * c[h];
                }
            }
        }
    }
    let mut membership = layout.membership.clone();
    membership.extend(std::iter::repeat_n(None, extra));
    let block_vars: Vec<usize> = (0..d).filter(|&i| membership[i].is_some()).collect();
    for v in (0..d).filter(|&i| membership[i].is_none()) {
        for &u in &block_vars {
            if rng.random_bool(cfg.inner_edge_prob) {
                w[(u, v)] = draw_weight(&cfg.inner_weight, rng);
            }
        }
    }
    let t_ext = DMatrix::from_fn(d, b, |i, j| if i < d0 { tm[(i, j)] } else { 0.0 });
    Ok(Concretization {
        l: LinearScm::with_uniform_noise(w, cfg.noise)?,
        t: AbstractionMap::new(t_ext, t.threshold())?,
        layout: BlockLayout { membership },
        exogenous,
    })
}
