//! Linear structural causal models `X = W^T X + E`.
//!
//! `weights[(i, j)]` is the direct effect of variable `i` on variable `j`, so
//! column `j` holds the parents of `j`. The reduced form is
//! `F = (I - W)^{-1}` and a sample is `x = F^T e`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;
use crate::linalg;
use crate::rng::{self, Rng};

/// Distribution of one exogenous term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// Dirac mass; what a hard intervention leaves behind.
    Constant { value: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Exponential { rate: 1.0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            NoiseSpec::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            NoiseSpec::Gaussian { mean, variance } => variance >= 0.0 && mean.is_finite(),
            NoiseSpec::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid noise spec {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Exponential { rate } => 1.0 / rate,
            NoiseSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Exponential { rate } => 1.0 / (rate * rate),
            NoiseSpec::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            NoiseSpec::Gaussian { variance, .. } => variance,
            NoiseSpec::Constant { .. } => 0.0,
        }
    }

    /// One draw. Constants consume no randomness.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            NoiseSpec::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            NoiseSpec::Uniform { lo, hi } => {
                Uniform::new(lo, hi).expect("validated range").sample(rng)
            }
            NoiseSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    Normal::new(mean, variance.sqrt())
                        .expect("validated variance")
                        .sample(rng)
                }
            }
            NoiseSpec::Constant { value } => value,
        }
    }
}

/// A hard intervention `V <- v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub assignments: BTreeMap<usize, f64>,
}

impl Intervention {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(assignments: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self {
            assignments: assignments.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.keys().copied()
    }
}

/// A linear SCM over `n_vars` endogenous variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScm {
    weights: DMatrix<f64>,
    noise: Vec<NoiseSpec>,
}

impl LinearScm {
    /// Builds and validates a model: square weights, zero diagonal, acyclic
    /// support and one valid noise spec per variable.
    pub fn new(weights: DMatrix<f64>, noise: Vec<NoiseSpec>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "weights are {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if noise.len() != weights.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} noise specs for {} variables",
                noise.len(),
                weights.nrows()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
        for spec in &noise {
            spec.validate()?;
        }
        let scm = Self { weights, noise };
        scm.topological_order()?;
        Ok(scm)
    }

    /// Model with the same noise spec on every variable.
    pub fn with_uniform_noise(weights: DMatrix<f64>, noise: NoiseSpec) -> Result<Self> {
        let n = weights.nrows();
        Self::new(weights, vec![noise; n])
    }

    pub fn n_vars(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn adjacency(&self) -> graph::Adjacency {
        graph::support(&self.weights)
    }

    /// Deterministic Kahn order of the support; ties go to the smallest index.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        graph::kahn_order(&self.adjacency()).ok_or(Error::NotADag)
    }

    /// `F = (I - W)^{-1}`, computed by permuting to upper-triangular form and
    /// back-substituting.
    pub fn reduced_form(&self) -> Result<DMatrix<f64>> {
        reduced_form_of(&self.weights)
    }

    /// The model after a hard intervention: intervened columns of `W` are
    /// zeroed and their noise becomes the assigned constant.
    pub fn intervene(&self, iv: &Intervention) -> Result<LinearScm> {
        let n = self.n_vars();
        let mut weights = self.weights.clone();
        let mut noise = self.noise.clone();
        for (&var, &value) in &iv.assignments {
            if var >= n {
                return Err(Error::IndexOutOfRange { index: var, n_vars: n });
            }
            weights.column_mut(var).fill(0.0);
            noise[var] = NoiseSpec::Constant { value };
        }
        Ok(LinearScm { weights, noise })
    }

    /// Draws an `n_samples x n_vars` matrix of exogenous values, row by row.
    pub fn sample_noise(&self, n_samples: usize, rng: &mut Rng) -> DMatrix<f64> {
        sample_noise(&self.noise, n_samples, rng)
    }

    /// `n_samples` i.i.d. rows `x = F^T e`, optionally under an intervention.
    pub fn simulate(
        &self,
        n_samples: usize,
        seed: u64,
        iv: Option<&Intervention>,
    ) -> Result<DMatrix<f64>> {
        let model = match iv {
            Some(iv) => self.intervene(iv)?,
            None => self.clone(),
        };
        let f = model.reduced_form()?;
        let mut rng = rng::seeded(seed);
        let e = model.sample_noise(n_samples, &mut rng);
        Ok(e * f)
    }
}

/// Exogenous draws, one row per sample, consuming the generator row-major.
pub fn sample_noise(noise: &[NoiseSpec], n_samples: usize, rng: &mut Rng) -> DMatrix<f64> {
    let d = noise.len();
    let mut e = DMatrix::zeros(n_samples, d);
    for r in 0..n_samples {
        for (c, spec) in noise.iter().enumerate() {
            e[(r, c)] = spec.sample(rng);
        }
    }
    e
}

/// Reduced form of a raw weight matrix.
pub fn reduced_form_of(weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = weights.nrows();
    let order = graph::kahn_order(&graph::support(weights)).ok_or(Error::NotADag)?;
    let w_perm = linalg::permute_square(weights, &order);
    let a = DMatrix::identity(n, n) - w_perm;
    let f_perm = linalg::invert_unit_upper(&a);
    let inv = linalg::invert_permutation(&order);
    Ok(linalg::permute_square(&f_perm, &inv))
}

/// Reduced form of a block upper-triangular `W`, assembled block by block.
///
/// `diag[k] = (I - W_kk)^{-1}`; for `i < j`,
/// `off_diag[i][j] = F_ii (W_ij + R_ij) F_jj` with
/// `R_ij = sum_{i<k<j} W_ik F_kk (W_kj + R_kj)`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub block_sizes: Vec<usize>,
    pub diag: Vec<DMatrix<f64>>,
    /// `off_diag[i][j]` for `i < j`; entries with `i >= j` are empty matrices.
    pub off_diag: Vec<Vec<DMatrix<f64>>>,
    /// `remainder[i][j]` for `i < j`.
    pub remainder: Vec<Vec<DMatrix<f64>>>,
}

impl BlockDecomposition {
    pub fn offsets(&self) -> Vec<usize> {
        block_offsets(&self.block_sizes)
    }

    /// The dense `F` (lower blocks are zero).
    pub fn assemble(&self) -> DMatrix<f64> {
        let off = self.offsets();
        let n: usize = self.block_sizes.iter().sum();
        let b = self.block_sizes.len();
        let mut f = DMatrix::zeros(n, n);
        for i in 0..b {
            f.view_mut((off[i], off[i]), (self.block_sizes[i], self.block_sizes[i]))
                .copy_from(&self.diag[i]);
            for j in (i + 1)..b {
                f.view_mut((off[i], off[j]), (self.block_sizes[i], self.block_sizes[j]))
                    .copy_from(&self.off_diag[i][j]);
            }
        }
        f
    }
}

pub(crate) fn block_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    for &s in sizes {
        off.push(acc);
        acc += s;
    }
    off.push(acc);
    off
}

/// Blockwise reduced form of a model whose weights are already in block
/// order.
pub fn blockwise_reduced_form(scm: &LinearScm, block_sizes: &[usize]) -> Result<BlockDecomposition> {
    blockwise_reduced_form_of(scm.weights(), block_sizes)
}

pub fn blockwise_reduced_form_of(
    weights: &DMatrix<f64>,
    block_sizes: &[usize],
) -> Result<BlockDecomposition> {
    let n = weights.nrows();
    if block_sizes.iter().sum::<usize>() != n || block_sizes.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "block sizes {block_sizes:?} do not partition {n} variables"
        )));
    }
    let b = block_sizes.len();
    let off = block_offsets(block_sizes);
    let block = |i: usize, j: usize| -> DMatrix<f64> {
        weights
            .view((off[i], off[j]), (block_sizes[i], block_sizes[j]))
            .into_owned()
    };
    for i in 0..b {
        for j in 0..i {
            if block(i, j).iter().any(|&w| w != 0.0) {
                return Err(Error::NotBlockTriangular { row: i, col: j });
            }
        }
    }
    let mut diag = Vec::with_capacity(b);
    for k in 0..b {
        let a = DMatrix::identity(block_sizes[k], block_sizes[k]) - block(k, k);
        diag.push(a.lu().try_inverse().ok_or(Error::SingularBlock(k))?);
    }
    let empty = || DMatrix::<f64>::zeros(0, 0);
    let mut off_diag: Vec<Vec<DMatrix<f64>>> = (0..b).map(|_| (0..b).map(|_| empty()).collect()).collect();
    let mut remainder = off_diag.clone();
    for j in 1..b {
        for i in (0..j).rev() {
            let mut r = DMatrix::zeros(block_sizes[i], block_sizes[j]);
            for k in (i + 1)..j {
                r += block(i, k) * &diag[k] * (block(k, j) + &remainder[k][j]);
            }
            off_diag[i][j] = &diag[i] * (block(i, j) + &r) * &diag[j];
            remainder[i][j] = r;
        }
    }
    Ok(BlockDecomposition {
        block_sizes: block_sizes.to_vec(),
        diag,
        off_diag,
        remainder,
    })
}

/// JSON form: `{"n_vars": d, "weights": [row-major], "noise": [...]}`.
#[derive(Serialize, Deserialize)]
struct ScmRepr {
    n_vars: usize,
    weights: Vec<f64>,
    noise: Vec<NoiseSpec>,
}

impl Serialize for LinearScm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n_vars();
        let weights = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.weights[(i, j)])
            .collect();
        ScmRepr {
            n_vars: n,
            weights,
            noise: self.noise.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearScm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ScmRepr::deserialize(d)?;
        if repr.weights.len() != repr.n_vars * repr.n_vars {
            return Err(serde::de::Error::custom("weights length is not n_vars^2"));
        }
        let w = DMatrix::from_row_slice(repr.n_vars, repr.n_vars, &repr.weights);
        LinearScm::new(w, repr.noise).map_err(serde::de::Error::custom)
    }
}

/// Uniform draw from `[-hi, -lo] U [lo, hi]`.
pub fn signed_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    let mag = rng.random_range(lo..=hi);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}
