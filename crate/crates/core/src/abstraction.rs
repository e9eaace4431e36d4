//! Linear abstraction maps and their verification.
//!
//! A `d x b` matrix `T` maps concrete values to abstract ones, `y = T^T x`.
//! Column `j` selects the *relevant* concrete variables of abstract variable
//! `Y_j`. Given a concrete model `L` and abstract model `H`, this module
//! derives the concrete blocks and the exogenous map `S` and decides whether
//! `H` is a `T`-abstraction of `L` in two independent ways:
//!
//! * [`check_block_abstraction`] works on parameters: block ordering plus
//!   `W_ij s_j = m_ij t_i` for every pair of distinct blocks;
//! * [`brute_force_consistency`] evaluates both sides of interventional
//!   consistency, `T^T L^i(e) = H^{w(i)}(S^T e)`, over a finite protocol of
//!   hard interventions and exogenous configurations.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Adjacency};
use crate::rng;
use crate::scm::{Intervention, LinearScm};

/// Support threshold for exact or synthetic matrices.
pub const EXACT_THRESHOLD: f64 = 1e-9;
/// Support threshold for matrices estimated from data.
pub const DATA_THRESHOLD: f64 = 0.05;
/// Total effects below this magnitude are flagged as potential cancellations.
pub const CANCELLATION_TOLERANCE: f64 = 1e-3;

/// A linear abstraction `tau(x) = T^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionMap {
    t: DMatrix<f64>,
    threshold: f64,
}

impl AbstractionMap {
    pub fn new(t: DMatrix<f64>, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidConfig(format!("threshold {threshold} must be >= 0")));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite entry in T".into()));
        }
        Ok(Self { t, threshold })
    }

    /// Map with the exact-support threshold.
    pub fn exact(t: DMatrix<f64>) -> Result<Self> {
        Self::new(t, EXACT_THRESHOLD)
    }

    pub fn d(&self) -> usize {
        self.t.nrows()
    }

    pub fn b(&self) -> usize {
        self.t.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.t.column(j).into_owned()
    }

    pub fn is_relevant(&self, i: usize, j: usize) -> bool {
        self.t[(i, j)].abs() > self.threshold
    }

    /// Copy with every entry at or below the threshold set to zero.
    pub fn masked(&self) -> AbstractionMap {
        let th = self.threshold;
        AbstractionMap {
            t: self.t.map(|v| if v.abs() > th { v } else { 0.0 }),
            threshold: th,
        }
    }

    /// Numerical column rank.
    pub fn column_rank(&self) -> usize {
        if self.b() == 0 || self.d() == 0 {
            return 0;
        }
        let sv = self.t.clone().svd(false, false).singular_values;
        let tol = sv.max() * (self.d().max(self.b()) as f64) * f64::EPSILON;
        sv.iter().filter(|&&s| s > tol).count()
    }

    /// Full column rank, nonempty and pairwise disjoint relevant sets.
    pub fn validate(&self) -> Result<()> {
        if self.b() == 0 || self.b() > self.d() {
            return Err(Error::InvalidAbstraction(format!(
                "T is {}x{}, need 0 < b <= d",
                self.d(),
                self.b()
            )));
        }
        if self.column_rank() < self.b() {
            return Err(Error::InvalidAbstraction("T is not full column rank".into()));
        }
        let rs = relevant_sets(self);
        if !rs.valid {
            return Err(Error::InvalidAbstraction(
                "relevant sets are empty or overlapping".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AbstractionRepr {
    d: usize,
    b: usize,
    t: Vec<f64>,
    threshold: f64,
}

impl Serialize for AbstractionMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (d, b) = (self.d(), self.b());
        AbstractionRepr {
            d,
            b,
            t: (0..d).flat_map(|i| (0..b).map(move |j| (i, j))).map(|ij| self.t[ij]).collect(),
            threshold: self.threshold,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AbstractionMap {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = AbstractionRepr::deserialize(de)?;
        if r.t.len() != r.d * r.b {
            return Err(serde::de::Error::custom("t length is not d*b"));
        }
        AbstractionMap::new(DMatrix::from_row_slice(r.d, r.b, &r.t), r.threshold)
            .map_err(serde::de::Error::custom)
    }
}

/// Relevant sets `Pi_R(Y_j) = { i : |t_ij| > threshold }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantSets {
    pub sets: Vec<Vec<usize>>,
    /// Concrete variables in no relevant set.
    pub irrelevant: Vec<usize>,
    /// False iff some set is empty or two sets intersect.
    pub valid: bool,
}

impl RelevantSets {
    /// Abstract owner of every concrete variable (first owner when sets
    /// overlap).
    pub fn owners(&self, d: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; d];
        for (j, set) in self.sets.iter().enumerate() {
            for &i in set {
                owner[i].get_or_insert(j);
            }
        }
        owner
    }

    pub fn relevant_mask(&self, d: usize) -> Vec<bool> {
        let mut mask = vec![false; d];
        for &i in self.sets.iter().flatten() {
            mask[i] = true;
        }
        mask
    }
}

pub fn relevant_sets(t: &AbstractionMap) -> RelevantSets {
    let (d, b) = (t.d(), t.b());
    let sets: Vec<Vec<usize>> = (0..b)
        .map(|j| (0..d).filter(|&i| t.is_relevant(i, j)).collect())
        .collect();
    let mut count = vec![0usize; d];
    for &i in sets.iter().flatten() {
        count[i] += 1;
    }
    let valid = sets.iter().all(|s| !s.is_empty()) && count.iter().all(|&c| c <= 1);
    let irrelevant = (0..d).filter(|&i| count[i] == 0).collect();
    RelevantSets {
        sets,
        irrelevant,
        valid,
    }
}

/// `reach[a][b]` iff a directed path `a -> ... -> b` exists whose interior
/// vertices are all irrelevant.
pub fn t_direct_reachability(adj: &Adjacency, relevant: &[bool]) -> Adjacency {
    let n = adj.len();
    let mut reach = vec![vec![false; n]; n];
    for (src, row) in reach.iter_mut().enumerate() {
        let mut expanded = vec![false; n];
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if adj[v][w] && !row[w] {
                    row[w] = true;
                    if !relevant[w] && !expanded[w] {
                        expanded[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
    }
    reach
}

/// Concrete blocks of every abstract variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub relevant: RelevantSets,
    /// `blocks[j]`: variables of `Pi(Y_j)` in concrete topological order.
    pub blocks: Vec<Vec<usize>>,
    /// Variables in no block, in concrete topological order.
    pub ignored: Vec<usize>,
    /// Abstract variables in the order their blocks appear in `block_order`.
    pub abstract_order: Vec<usize>,
    /// Concrete permutation: blocks in `abstract_order`, ignored last.
    pub block_order: Vec<usize>,
}

impl BlockStructure {
    pub fn block_of(&self, d: usize) -> Vec<Option<usize>> {
        let mut of = vec![None; d];
        for (j, blk) in self.blocks.iter().enumerate() {
            for &i in blk {
                of[i] = Some(j);
            }
        }
        of
    }

    /// Block sizes following `abstract_order`, with a trailing entry for the
    /// ignored variables when there are any.
    pub fn ordered_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.abstract_order.iter().map(|&j| self.blocks[j].len()).collect();
        if !self.ignored.is_empty() {
            sizes.push(self.ignored.len());
        }
        sizes
    }

    /// Concrete permutation with blocks placed in the given abstract order.
    pub fn order_for(&self, abstract_order: &[usize]) -> Vec<usize> {
        abstract_order
            .iter()
            .flat_map(|&j| self.blocks[j].iter().copied())
            .chain(self.ignored.iter().copied())
            .collect()
    }
}

/// Blocks `Pi(Y) = Pi_R(Y) U { irrelevant X : X T-direct to some X' in Pi_R(Y) }`.
pub fn concrete_blocks(l: &LinearScm, t: &AbstractionMap) -> Result<BlockStructure> {
    let d = l.n_vars();
    if t.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "T has {} rows, concrete model has {d} variables",
            t.d()
        )));
    }
    let rel = relevant_sets(t);
    if !rel.valid {
        return Err(Error::InvalidAbstraction(
            "relevant sets are empty or overlapping".into(),
        ));
    }
    let adj = l.adjacency();
    let mask = rel.relevant_mask(d);
    let reach = t_direct_reachability(&adj, &mask);
    let topo = l.topological_order()?;
    let mut member: Vec<Option<usize>> = vec![None; d];
    for (j, set) in rel.sets.iter().enumerate() {
        for &i in set {
            member[i] = Some(j);
        }
    }
    for &x in &rel.irrelevant {
        for (j, set) in rel.sets.iter().enumerate() {
            if set.iter().any(|&r| reach[x][r]) {
                match member[x] {
                    Some(first) if first != j => {
                        return Err(Error::OverlappingBlocks {
                            first,
                            second: j,
                            var: x,
                        })
                    }
                    _ => member[x] = Some(j),
                }
            }
        }
    }
    let b = t.b();
    let mut blocks = vec![Vec::new(); b];
    let mut ignored = Vec::new();
    for &x in &topo {
        match member[x] {
            Some(j) => blocks[j].push(x),
            None => ignored.push(x),
        }
    }
    // Quotient graph on blocks; fall back to index order if it is cyclic,
    // which the ordering check then reports.
    let mut quotient = vec![vec![false; b]; b];
    for u in 0..d {
        for v in 0..d {
            if adj[u][v] {
                if let (Some(a), Some(c)) = (member[u], member[v]) {
                    if a != c {
                        quotient[a][c] = true;
                    }
                }
            }
        }
    }
    let abstract_order = graph::kahn_order(&quotient).unwrap_or_else(|| (0..b).collect());
    let block_order = abstract_order
        .iter()
        .flat_map(|&j| blocks[j].iter().copied())
        .chain(ignored.iter().copied())
        .collect();
    Ok(BlockStructure {
        relevant: rel,
        blocks,
        ignored,
        abstract_order,
        block_order,
    })
}

/// Exogenous map `gamma(e) = S^T e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousMap {
    pub matrix_s: DMatrix<f64>,
}

/// Blockwise `s_k = (I - W_kk)^{-1} t_k`, zero outside block `k`.
pub fn exogenous_map(
    l: &LinearScm,
    t: &AbstractionMap,
    blocks: &BlockStructure,
) -> Result<ExogenousMap> {
    let d = l.n_vars();
    let w = l.weights();
    let mut s = DMatrix::zeros(d, t.b());
    for (k, blk) in blocks.blocks.iter().enumerate() {
        let n = blk.len();
        let w_kk = DMatrix::from_fn(n, n, |a, c| w[(blk[a], blk[c])]);
        let t_k = DVector::from_fn(n, |a, _| t.matrix()[(blk[a], k)]);
        let a = DMatrix::identity(n, n) - w_kk;
        let s_k = a.lu().solve(&t_k).ok_or(Error::SingularBlock(k))?;
        for (a, &i) in blk.iter().enumerate() {
            s[(i, k)] = s_k[a];
        }
    }
    Ok(ExogenousMap { matrix_s: s })
}

/// `S = F T G^{-1}` from the two reduced forms.
pub fn exogenous_map_dense(l: &LinearScm, h: &LinearScm, t: &AbstractionMap) -> Result<ExogenousMap> {
    check_dims(l, h, t)?;
    let f = l.reduced_form()?;
    let g = h.reduced_form()?;
    // G^{-1} = I - M.
    let g_inv = DMatrix::identity(h.n_vars(), h.n_vars()) - h.weights();
    debug_assert!(((&g * &g_inv) - DMatrix::identity(g.nrows(), g.nrows())).amax() < 1e-8);
    Ok(ExogenousMap {
        matrix_s: f * t.matrix() * g_inv,
    })
}

/// Witness that no abstract model can `T`-abstract the concrete one: `witness`
/// reaches `Pi_R(target)` through a `T`-direct path but `source`, from the same
/// relevant set, does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityViolation {
    pub source_var: usize,
    pub witness_var: usize,
    pub source_abstract: usize,
    pub target_abstract: usize,
}

/// Abstract graph forced by the concrete graph and the relevant sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedGraph {
    pub adjacency: Adjacency,
    pub violations: Vec<ConnectivityViolation>,
    /// Relevant pairs `(x1, x2)` in different relevant sets joined by a
    /// `T`-direct path whose total effect nearly vanishes. The graph above is
    /// only guaranteed to match an abstraction when this list is empty.
    pub potential_cancellations: Vec<(usize, usize)>,
    /// `adjacency` without edges whose every `T`-direct pair is a potential
    /// cancellation.
    pub faithful_adjacency: Adjacency,
}

/// Edge `Y1 -> Y2` iff every relevant variable of `Y1` has a `T`-direct path
/// into `Pi_R(Y2)`; partial coverage is reported as a violation.
pub fn implied_abstract_graph(l: &LinearScm, t: &AbstractionMap) -> Result<ImpliedGraph> {
    let d = l.n_vars();
    if t.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "T has {} rows, concrete model has {d} variables",
            t.d()
        )));
    }
    let rel = relevant_sets(t);
    let mask = rel.relevant_mask(d);
    let reach = t_direct_reachability(&l.adjacency(), &mask);
    let f = l.reduced_form()?;
    let b = t.b();
    let mut adjacency = vec![vec![false; b]; b];
    let mut violations = Vec::new();
    let mut potential_cancellations = Vec::new();
    let mut faithful_adjacency = vec![vec![false; b]; b];
    for y1 in 0..b {
        for y2 in 0..b {
            if y1 == y2 {
                continue;
            }
            let target = &rel.sets[y2];
            let reaches: Vec<bool> = rel.sets[y1]
                .iter()
                .map(|&x1| target.iter().any(|&x2| reach[x1][x2]))
                .collect();
            let hits = reaches.iter().filter(|&&r| r).count();
            if hits == 0 {
                continue;
            }
            if hits == reaches.len() {
                adjacency[y1][y2] = true;
            } else {
                let witness = rel.sets[y1][reaches.iter().position(|&r| r).unwrap()];
                for (k, &x) in rel.sets[y1].iter().enumerate() {
                    if !reaches[k] {
                        violations.push(ConnectivityViolation {
                            source_var: x,
                            witness_var: witness,
                            source_abstract: y1,
                            target_abstract: y2,
                        });
                    }
                }
            }
            let mut effective = false;
            for &x1 in &rel.sets[y1] {
                for &x2 in target {
                    if !reach[x1][x2] {
                        continue;
                    }
                    if f[(x1, x2)].abs() < CANCELLATION_TOLERANCE {
                        potential_cancellations.push((x1, x2));
                    } else {
                        effective = true;
                    }
                }
            }
            faithful_adjacency[y1][y2] = adjacency[y1][y2] && effective;
        }
    }
    Ok(ImpliedGraph {
        adjacency,
        violations,
        potential_cancellations,
        faithful_adjacency,
    })
}

/// Outcome of the parametric abstraction check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionCheck {
    pub ok: bool,
    /// `max_{i != j} ||W_ij s_j - m_ij t_i||_inf` (infinite when blocks could
    /// not be formed).
    pub max_residual: f64,
    /// Some abstract topological order makes the concrete weights block
    /// upper triangular, with ignored variables last.
    pub ordering_ok: bool,
    /// Why blocks could not be formed, if they could not.
    pub failure: Option<String>,
    pub violations: Vec<ConnectivityViolation>,
}

fn check_dims(l: &LinearScm, h: &LinearScm, t: &AbstractionMap) -> Result<()> {
    if t.d() != l.n_vars() || t.b() != h.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "T is {}x{}, models have {} and {} variables",
            t.d(),
            t.b(),
            l.n_vars(),
            h.n_vars()
        )));
    }
    Ok(())
}

/// Decides whether `h` is a `T`-abstraction of `l` from the model parameters.
pub fn check_block_abstraction(
    l: &LinearScm,
    h: &LinearScm,
    t: &AbstractionMap,
    tol: f64,
) -> Result<AbstractionCheck> {
    check_dims(l, h, t)?;
    let violations = implied_abstract_graph(l, t)?.violations;
    let fail = |msg: String, violations: Vec<ConnectivityViolation>| AbstractionCheck {
        ok: false,
        max_residual: f64::INFINITY,
        ordering_ok: false,
        failure: Some(msg),
        violations,
    };
    if t.column_rank() < t.b() {
        return Ok(fail("T is not full column rank".into(), violations));
    }
    let blocks = match concrete_blocks(l, t) {
        Ok(b) => b,
        Err(e @ (Error::InvalidAbstraction(_) | Error::OverlappingBlocks { .. })) => {
            return Ok(fail(e.to_string(), violations))
        }
        Err(e) => return Err(e),
    };
    let s = exogenous_map(l, t, &blocks)?.matrix_s;
    let d = l.n_vars();
    let block_of = blocks.block_of(d);
    let w = l.weights();
    // Blocks must admit an order compatible with both the concrete
    // cross-block edges and the abstract graph: the union of the quotient
    // graph and `h` has to be acyclic. Ignored variables never feed a block;
    // `concrete_blocks` would have absorbed them otherwise.
    let mut union = h.adjacency();
    let mut ordering_ok = true;
    for u in 0..d {
        for v in 0..d {
            if w[(u, v)] == 0.0 {
                continue;
            }
            match (block_of[u], block_of[v]) {
                (Some(a), Some(c)) if a != c => union[a][c] = true,
                (None, Some(_)) => ordering_ok = false,
                _ => {}
            }
        }
    }
    ordering_ok &= graph::kahn_order(&union).is_some();
    let m = h.weights();
    let tm = t.matrix();
    let mut max_residual: f64 = 0.0;
    for (i, bi) in blocks.blocks.iter().enumerate() {
        for (j, bj) in blocks.blocks.iter().enumerate() {
            if i == j {
                continue;
            }
            for &k in bi {
                let lhs: f64 = bj.iter().map(|&c| w[(k, c)] * s[(c, j)]).sum();
                let rhs = m[(i, j)] * tm[(k, i)];
                max_residual = max_residual.max((lhs - rhs).abs());
            }
        }
    }
    Ok(AbstractionCheck {
        ok: ordering_ok && max_residual <= tol,
        max_residual,
        ordering_ok,
        failure: None,
        violations,
    })
}

/// Maps a concrete hard intervention to the abstract one it induces.
///
/// Defined iff the targets are exactly the union of the relevant sets of some
/// abstract variables; then `Y <- t_Y^T v`. Interventions touching irrelevant
/// variables, or fixing only part of a relevant set, map to `None`.
pub fn map_intervention(t: &AbstractionMap, iv: &Intervention) -> Option<Intervention> {
    if iv.is_empty() {
        return Some(Intervention::empty());
    }
    let rel = relevant_sets(t);
    if !rel.valid {
        return None;
    }
    let owners = rel.owners(t.d());
    let mut covered = std::collections::BTreeSet::new();
    for x in iv.targets() {
        covered.insert(owners.get(x).copied().flatten()?);
    }
    let mut out = Intervention::empty();
    for &y in &covered {
        let mut value = 0.0;
        for &r in &rel.sets[y] {
            value += t.matrix()[(r, y)] * iv.assignments.get(&r)?;
        }
        out.assignments.insert(y, value);
    }
    Some(out)
}

/// Finite intervention protocol for [`brute_force_consistency`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyGrid {
    /// Largest abstract subset intervened on jointly.
    pub max_subset: usize,
    /// Random exogenous configurations on top of the canonical basis.
    pub random_draws: usize,
    pub seed: u64,
}

impl ConsistencyGrid {
    pub fn for_abstract_size(b: usize) -> Self {
        Self {
            max_subset: b.min(3),
            random_draws: 8,
            seed: 0,
        }
    }
}

/// Largest deviation `|T^T L^i(e) - H^{w(i)}(S^T e)|` over the protocol.
///
/// For every abstract subset up to `max_subset`, every sign pattern and every
/// pivot position, the concrete intervention fixes the whole relevant set of
/// each chosen abstract variable, putting the target value on the pivot
/// variable and zero on the rest. The empty intervention is included. Each
/// intervention is evaluated on the canonical basis of the exogenous space,
/// the zero vector and `random_draws` Gaussian draws. `S = F T G^{-1}` is the
/// only exogenous map compatible with observational consistency. Returns
/// `f64::INFINITY` when the relevant sets are empty or overlap, in which case
/// the intervention map is not well defined.
pub fn brute_force_consistency(
    l: &LinearScm,
    h: &LinearScm,
    t: &AbstractionMap,
    grid: &ConsistencyGrid,
) -> Result<f64> {
    check_dims(l, h, t)?;
    let rel = relevant_sets(t);
    if !rel.valid {
        return Ok(f64::INFINITY);
    }
    let d = l.n_vars();
    let b = h.n_vars();
    let s = exogenous_map_dense(l, h, t)?.matrix_s;

    let mut rng = rng::seeded(grid.seed);
    let n_eval = d + 1 + grid.random_draws;
    let mut e = DMatrix::zeros(n_eval, d);
    for i in 0..d {
        e[(i, i)] = 1.0;
    }
    for r in (d + 1)..n_eval {
        for c in 0..d {
            e[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    let u = &e * &s;

    let max_pivot = rel.sets.iter().map(Vec::len).max().unwrap_or(1);
    let mut worst: f64 = 0.0;
    let mut evaluate = |concrete: &Intervention| -> Result<()> {
        let Some(abstract_iv) = map_intervention(t, concrete) else {
            return Ok(());
        };
        let f_i = l.intervene(concrete)?.reduced_form()?;
        let mut e_i = e.clone();
        for (&v, &val) in &concrete.assignments {
            e_i.column_mut(v).fill(val);
        }
        let y_concrete = e_i * f_i * t.matrix();
        let g_i = h.intervene(&abstract_iv)?.reduced_form()?;
        let mut u_i = u.clone();
        for (&y, &val) in &abstract_iv.assignments {
            u_i.column_mut(y).fill(val);
        }
        let y_abstract = u_i * g_i;
        worst = worst.max((y_concrete - y_abstract).amax());
        Ok(())
    };

    evaluate(&Intervention::empty())?;
    for size in 1..=grid.max_subset.min(b) {
        for subset in subsets_of_size(b, size) {
            for signs in 0..(1u32 << size) {
                for pivot in 0..max_pivot {
                    let mut iv = Intervention::empty();
                    for (pos, &y) in subset.iter().enumerate() {
                        let target = if signs >> pos & 1 == 1 { 1.0 } else { -1.0 };
                        let set = &rel.sets[y];
                        let p = set[pivot % set.len()];
                        for &r in set {
                            let v = if r == p { target / t.matrix()[(r, y)] } else { 0.0 };
                            iv.assignments.insert(r, v);
                        }
                    }
                    evaluate(&iv)?;
                }
            }
        }
    }
    Ok(worst)
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Deletes the given concrete variables from a model (and the matching rows
/// of `T`).
pub fn submodel(l: &LinearScm, t: &AbstractionMap, drop: &[usize]) -> Result<(LinearScm, AbstractionMap)> {
    let keep: Vec<usize> = (0..l.n_vars()).filter(|i| !drop.contains(i)).collect();
    let w = DMatrix::from_fn(keep.len(), keep.len(), |a, c| l.weights()[(keep[a], keep[c])]);
    let noise = keep.iter().map(|&i| l.noise()[i]).collect();
    let tm = DMatrix::from_fn(keep.len(), t.b(), |a, j| t.matrix()[(keep[a], j)]);
    Ok((LinearScm::new(w, noise)?, AbstractionMap::new(tm, t.threshold())?))
}
