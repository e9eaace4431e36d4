//! Synthetic benchmark scenarios: an abstract model `H`, an abstraction map
//! `T`, a concretization `L`, a large concrete dataset `D_L` and a small
//! joint dataset `D_J` of paired concrete/abstract samples.
//!
//! Concrete variables are laid out block by block (abstract index order,
//! irrelevant members first) with the ignored block last. Concrete columns of
//! both datasets are standardized with the `D_L` statistics, abstract columns
//! with their own. Columns are then permuted; the permutations are recorded
//! as `perm[new] = old`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::abstraction::{exogenous_map_dense, relevant_sets, AbstractionMap, RelevantSets};
use crate::concretize::{sample_concretization, BlockLayout, ConcretizeConfig, SimplexDraw};
use crate::discovery::PriorKnowledge;
use crate::error::{Error, Result};
use crate::graph;
use crate::io;
use crate::linalg::{self, Standardization};
use crate::rng::{self, Rng};
use crate::scm::{signed_uniform, LinearScm, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub b: usize,
    pub abstract_edges: usize,
    pub block_size_range: [usize; 2],
    pub ignored_block_size_range: [usize; 2],
    pub n_concrete_samples: usize,
    pub n_joint_samples: usize,
    pub noise_kind: NoiseSpec,
    /// Variance of Gaussian noise added to the abstract side of `D_J`.
    pub abstract_obs_noise_variance: f64,
    pub seed: u64,
    pub inner_edge_prob: f64,
    pub simplex: SimplexDraw,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            b: 5,
            abstract_edges: 8,
            block_size_range: [5, 10],
            ignored_block_size_range: [5, 10],
            n_concrete_samples: 15000,
            n_joint_samples: 150,
            noise_kind: NoiseSpec::Exponential { rate: 1.0 },
            abstract_obs_noise_variance: 0.0,
            seed: 0,
            inner_edge_prob: 0.5,
            simplex: SimplexDraw::Dirichlet { alpha: 1.0 },
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.b == 0 {
            return bad("b must be >= 1");
        }
        let max_edges = self.b * (self.b - 1) / 2;
        if self.abstract_edges > max_edges {
            return Err(Error::TooManyEdges {
                edges: self.abstract_edges,
                nodes: self.b,
                max: max_edges,
            });
        }
        let [lo, hi] = self.block_size_range;
        if lo == 0 || lo > hi {
            return bad("block_size_range must satisfy 1 <= min <= max");
        }
        let [lo, hi] = self.ignored_block_size_range;
        if lo > hi {
            return bad("ignored_block_size_range must satisfy min <= max");
        }
        if self.n_joint_samples > self.n_concrete_samples {
            return bad("n_joint_samples must not exceed n_concrete_samples");
        }
        if self.n_joint_samples < 2 {
            return bad("n_joint_samples must be >= 2");
        }
        if !(self.abstract_obs_noise_variance >= 0.0) {
            return bad("abstract_obs_noise_variance must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.inner_edge_prob) {
            return bad("inner_edge_prob must lie in [0, 1]");
        }
        self.noise_kind.validate()
    }
}

/// Ground truth in the generator's (unpermuted) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub relevant: RelevantSets,
    pub layout: BlockLayout,
    /// Forbidden paths implied by `(T, H)`.
    pub k_true: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub h: LinearScm,
    pub l: LinearScm,
    pub t: AbstractionMap,
    pub perm_concrete: Vec<usize>,
    pub perm_abstract: Vec<usize>,
    /// Standardized, permuted concrete samples.
    pub d_l: DMatrix<f64>,
    /// Standardized, permuted joint samples (concrete, abstract).
    pub d_j: (DMatrix<f64>, DMatrix<f64>),
    /// Standardization statistics, in unpermuted coordinates.
    pub scale_l: Standardization,
    pub scale_j: (Standardization, Standardization),
    pub ground_truth: GroundTruth,
}

/// Random DAG with exactly `n_edges` edges: a uniform random ordering and a
/// uniform random edge subset consistent with it. Weights are
/// signed-uniform on `[0.5, 2]`.
pub fn sample_abstract_model(b: usize, n_edges: usize, noise: NoiseSpec, rng: &mut Rng) -> Result<LinearScm> {
    let max = b * b.saturating_sub(1) / 2;
    if n_edges > max {
        return Err(Error::TooManyEdges {
            edges: n_edges,
            nodes: b,
            max,
        });
    }
    let mut order: Vec<usize> = (0..b).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = (0..b)
        .flat_map(|a| ((a + 1)..b).map(move |c| (a, c)))
        .collect();
    pairs.shuffle(rng);
    let mut w = DMatrix::zeros(b, b);
    for &(a, c) in pairs.iter().take(n_edges) {
        w[(order[a], order[c])] = signed_uniform(rng, 0.5, 2.0);
    }
    LinearScm::with_uniform_noise(w, noise)
}

/// Block-structured abstraction map. Each abstract variable gets a block of
/// uniform size; at least half of its members are relevant and each other
/// member is relevant with probability 1/2. An ignored block of size drawn
/// from `ignored_range` is appended.
pub fn sample_abstraction_map(
    b: usize,
    block_size_range: [usize; 2],
    ignored_range: [usize; 2],
    rng: &mut Rng,
) -> Result<(AbstractionMap, BlockLayout)> {
    let mut membership = Vec::new();
    let mut coeffs: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..b {
        let size = rng.random_range(block_size_range[0]..=block_size_range[1]);
        let half = size.div_ceil(2);
        let n_rel = half + (half..size).filter(|_| rng.random_bool(0.5)).count();
        for k in 0..size {
            let i = membership.len();
            membership.push(Some(j));
            if k >= size - n_rel {
                coeffs.push((i, j, signed_uniform(rng, 0.5, 2.0)));
            }
        }
    }
    let ignored = rng.random_range(ignored_range[0]..=ignored_range[1]);
    membership.extend(std::iter::repeat_n(None, ignored));
    let mut t = DMatrix::zeros(membership.len(), b);
    for (i, j, v) in coeffs {
        t[(i, j)] = v;
    }
    Ok((AbstractionMap::exact(t)?, BlockLayout { membership }))
}

/// `{(k, h) : k in Pi_R(Y_i), h in Pi_R(Y_j), i != j, no path Y_i -> Y_j}`.
pub fn forbidden_pairs(m_adj: &graph::Adjacency, relevant: &RelevantSets) -> Vec<(usize, usize)> {
    let reach = graph::transitive_closure(m_adj);
    let b = relevant.sets.len();
    let mut out = Vec::new();
    for i in 0..b {
        for j in 0..b {
            if i == j || reach[i][j] {
                continue;
            }
            for &k in &relevant.sets[i] {
                for &h in &relevant.sets[j] {
                    out.push((k, h));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let h = sample_abstract_model(cfg.b, cfg.abstract_edges, cfg.noise_kind, &mut rng)?;
    let (t, layout) = sample_abstraction_map(
        cfg.b,
        cfg.block_size_range,
        cfg.ignored_block_size_range,
        &mut rng,
    )?;
    let ccfg = ConcretizeConfig {
        inner_edge_prob: cfg.inner_edge_prob,
        simplex: cfg.simplex,
        noise: cfg.noise_kind,
        rng_seed: rng.random(),
        ..ConcretizeConfig::default()
    };
    let conc = sample_concretization(&h, &t, &layout, &ccfg)?;
    let l = conc.l;
    let d = l.n_vars();
    let b = cfg.b;

    let f = l.reduced_form()?;
    let g = h.reduced_form()?;
    let s = exogenous_map_dense(&l, &h, &t)?.matrix_s;
    let e = l.sample_noise(cfg.n_concrete_samples, &mut rng);
    let x = &e * &f;
    let nj = cfg.n_joint_samples;
    let x_j = x.rows(0, nj).into_owned();
    let mut y_j = e.rows(0, nj) * &s * &g;
    if cfg.abstract_obs_noise_variance > 0.0 {
        let normal = Normal::new(0.0, cfg.abstract_obs_noise_variance.sqrt())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for v in y_j.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let (x_std, scale_l) = linalg::standardize(&x)?;
    // Concrete joint columns share the D_L statistics so that a map fitted on
    // D_J applies unchanged to D_L.
    let xj_std = scale_l.apply(&x_j);
    let scale_xj = scale_l.clone();
    let (yj_std, scale_yj) = linalg::standardize(&y_j)?;

    let mut perm_concrete: Vec<usize> = (0..d).collect();
    perm_concrete.shuffle(&mut rng);
    let mut perm_abstract: Vec<usize> = (0..b).collect();
    perm_abstract.shuffle(&mut rng);

    let relevant = relevant_sets(&conc.t);
    let k_true = forbidden_pairs(&h.adjacency(), &relevant);
    Ok(Scenario {
        config: cfg.clone(),
        d_l: linalg::permute_cols(&x_std, &perm_concrete),
        d_j: (
            linalg::permute_cols(&xj_std, &perm_concrete),
            linalg::permute_cols(&yj_std, &perm_abstract),
        ),
        scale_l,
        scale_j: (scale_xj, scale_yj),
        h,
        l,
        t: conc.t,
        perm_concrete,
        perm_abstract,
        ground_truth: GroundTruth {
            relevant,
            layout: conc.layout,
            k_true,
        },
    })
}

/// Ground-truth quantities expressed in the permuted coordinates of the
/// scenario's datasets.
#[derive(Debug, Clone)]
pub struct PermutedTruth {
    pub w: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub t: AbstractionMap,
    pub k_true: PriorKnowledge,
}

impl Scenario {
    pub fn d(&self) -> usize {
        self.l.n_vars()
    }

    pub fn b(&self) -> usize {
        self.h.n_vars()
    }

    pub fn permuted_truth(&self) -> Result<PermutedTruth> {
        let pc = &self.perm_concrete;
        let pa = &self.perm_abstract;
        let inv_c = linalg::invert_permutation(pc);
        let t = linalg::permute_cols(&linalg::permute_rows(self.t.matrix(), pc), pa);
        let k = self
            .ground_truth
            .k_true
            .iter()
            .map(|&(a, c)| (inv_c[a], inv_c[c]));
        Ok(PermutedTruth {
            w: linalg::permute_square(self.l.weights(), pc),
            m: linalg::permute_square(self.h.weights(), pa),
            t: AbstractionMap::new(t, self.t.threshold())?,
            k_true: PriorKnowledge::new(self.d(), k)?,
        })
    }

    /// Writes `manifest.json` and the three dataset CSVs into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_matrix_csv(&dir.join(FILE_D_L), "x", &self.d_l)?;
        io::write_matrix_csv(&dir.join(FILE_D_J_X), "x", &self.d_j.0)?;
        io::write_matrix_csv(&dir.join(FILE_D_J_Y), "y", &self.d_j.1)?;
        let manifest = Manifest {
            rng: rng::RNG_ALGORITHM.to_owned(),
            config: self.config.clone(),
            h: self.h.clone(),
            l: self.l.clone(),
            t: self.t.clone(),
            perm_concrete: self.perm_concrete.clone(),
            perm_abstract: self.perm_abstract.clone(),
            scale_l: self.scale_l.clone(),
            scale_j: self.scale_j.clone(),
            ground_truth: self.ground_truth.clone(),
            files: Files {
                d_l: FILE_D_L.into(),
                d_j_concrete: FILE_D_J_X.into(),
                d_j_abstract: FILE_D_J_Y.into(),
            },
        };
        io::write_json(&dir.join(FILE_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Scenario> {
        let m: Manifest = io::read_json(&dir.join(FILE_MANIFEST))?;
        let (_, d_l) = io::read_matrix_csv(&dir.join(&m.files.d_l))?;
        let (_, xj) = io::read_matrix_csv(&dir.join(&m.files.d_j_concrete))?;
        let (_, yj) = io::read_matrix_csv(&dir.join(&m.files.d_j_abstract))?;
        let d = m.l.n_vars();
        if d_l.ncols() != d || xj.ncols() != d || yj.ncols() != m.h.n_vars() {
            return Err(Error::DimensionMismatch(
                "dataset widths do not match the manifest models".into(),
            ));
        }
        Ok(Scenario {
            config: m.config,
            h: m.h,
            l: m.l,
            t: m.t,
            perm_concrete: m.perm_concrete,
            perm_abstract: m.perm_abstract,
            d_l,
            d_j: (xj, yj),
            scale_l: m.scale_l,
            scale_j: m.scale_j,
            ground_truth: m.ground_truth,
        })
    }
}

pub const FILE_MANIFEST: &str = "manifest.json";
pub const FILE_D_L: &str = "d_l.csv";
pub const FILE_D_J_X: &str = "d_j_concrete.csv";
pub const FILE_D_J_Y: &str = "d_j_abstract.csv";

#[derive(Serialize, Deserialize)]
struct Files {
    d_l: String,
    d_j_concrete: String,
    d_j_abstract: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    rng: String,
    config: ScenarioConfig,
    h: LinearScm,
    l: LinearScm,
    t: AbstractionMap,
    perm_concrete: Vec<usize>,
    perm_abstract: Vec<usize>,
    scale_l: Standardization,
    scale_j: (Standardization, Standardization),
    ground_truth: GroundTruth,
    files: Files,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::check_block_abstraction;

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            b: 4,
            abstract_edges: 3,
            block_size_range: [2, 4],
            ignored_block_size_range: [1, 3],
            n_concrete_samples: 400,
            n_joint_samples: 50,
            seed,
            ..ScenarioConfig::default()
        }
    }

    fn unstandardize(z: &DMatrix<f64>, s: &Standardization, perm: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, c)] * s.std[perm[c]] + s.mean[perm[c]])
    }

    #[test]
    fn abstract_model_has_exact_edge_count() {
        let mut r = rng::seeded(1);
        for b in 1..7 {
            for e in 0..=b * (b - 1) / 2 {
                let h = sample_abstract_model(b, e, NoiseSpec::default(), &mut r).unwrap();
                assert_eq!(h.adjacency().iter().flatten().filter(|x| **x).count(), e);
                assert!(h.topological_order().is_ok());
                assert!(h.weights().iter().all(|w| *w == 0.0 || (0.5..=2.0).contains(&w.abs())));
            }
        }
        assert!(matches!(
            sample_abstract_model(3, 4, NoiseSpec::default(), &mut r),
            Err(Error::TooManyEdges { max: 3, .. })
        ));
    }

    #[test]
    fn abstraction_map_layout() {
        let mut r = rng::seeded(2);
        let (t, layout) = sample_abstraction_map(3, [2, 5], [4, 4], &mut r).unwrap();
        assert_eq!(layout.ignored().len(), 4);
        let rel = relevant_sets(&t);
        assert!(rel.valid);
        for j in 0..3 {
            let members = layout.members(j);
            assert!((2..=5).contains(&members.len()));
            assert!(rel.sets[j].iter().all(|i| members.contains(i)));
            // Contiguous block.
            assert_eq!(members.last().unwrap() - members[0] + 1, members.len());
        }
        assert!(layout.ignored().iter().all(|&i| (0..3).all(|j| t.matrix()[(i, j)] == 0.0)));
    }

    #[test]
    fn joint_data_satisfies_tx_equals_y_without_noise() {
        let sc = generate(&small(5)).unwrap();
        let x = unstandardize(&sc.d_j.0, &sc.scale_j.0, &sc.perm_concrete);
        let y = unstandardize(&sc.d_j.1, &sc.scale_j.1, &sc.perm_abstract);
        let truth = sc.permuted_truth().unwrap();
        let err = (&x * truth.t.matrix() - &y).amax();
        assert!(err < 1e-8 * (1.0 + y.amax()), "{err}");
    }

    #[test]
    fn observation_noise_breaks_the_identity() {
        let cfg = ScenarioConfig { abstract_obs_noise_variance: 0.5, ..small(5) };
        let sc = generate(&cfg).unwrap();
        let x = unstandardize(&sc.d_j.0, &sc.scale_j.0, &sc.perm_concrete);
        let y = unstandardize(&sc.d_j.1, &sc.scale_j.1, &sc.perm_abstract);
        let truth = sc.permuted_truth().unwrap();
        assert!((&x * truth.t.matrix() - &y).amax() > 0.1);
    }

    #[test]
    fn datasets_are_standardized_with_expected_shapes() {
        let sc = generate(&small(6)).unwrap();
        assert_eq!(sc.d_l.shape(), (400, sc.d()));
        assert_eq!(sc.d_j.0.shape(), (50, sc.d()));
        assert_eq!(sc.d_j.1.shape(), (50, 4));
        assert_eq!(sc.scale_j.0, sc.scale_l);
        for m in [&sc.d_l, &sc.d_j.1] {
            for c in m.column_iter() {
                let n = c.len() as f64;
                let mean = c.sum() / n;
                let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn generated_model_is_an_abstraction() {
        for seed in 0..10 {
            let sc = generate(&small(seed)).unwrap();
            assert!(check_block_abstraction(&sc.l, &sc.h, &sc.t, 1e-8).unwrap().ok);
            let truth = sc.permuted_truth().unwrap();
            assert!(check_block_abstraction(
                &LinearScm::with_uniform_noise(truth.w.clone(), NoiseSpec::default()).unwrap(),
                &LinearScm::with_uniform_noise(truth.m.clone(), NoiseSpec::default()).unwrap(),
                &truth.t,
                1e-8
            )
            .unwrap()
            .ok);
        }
    }

    #[test]
    fn forbidden_pairs_match_definition() {
        let sc = generate(&small(3)).unwrap();
        let reach = graph::transitive_closure(&sc.h.adjacency());
        let owners = sc.ground_truth.relevant.owners(sc.d());
        let mut expected = Vec::new();
        for k in 0..sc.d() {
            for h in 0..sc.d() {
                if let (Some(i), Some(j)) = (owners[k], owners[h]) {
                    if i != j && !reach[i][j] {
                        expected.push((k, h));
                    }
                }
            }
        }
        assert_eq!(sc.ground_truth.k_true, expected);
        // The true concrete model never contains a forbidden path.
        let k = PriorKnowledge::new(sc.d(), expected).unwrap();
        assert!(k.violations(&sc.l.adjacency()).is_empty());
        let truth = sc.permuted_truth().unwrap();
        assert!(truth.k_true.violations(&graph::support(&truth.w)).is_empty());
    }

    #[test]
    fn same_seed_same_scenario() {
        let a = generate(&small(11)).unwrap();
        let b = generate(&small(11)).unwrap();
        assert_eq!(a.d_l, b.d_l);
        assert_eq!(a.l, b.l);
        let c = generate(&small(12)).unwrap();
        assert_ne!(a.d_l, c.d_l);
    }

    #[test]
    fn write_load_round_trip() {
        let sc = generate(&small(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        sc.write(dir.path()).unwrap();
        let back = Scenario::load(dir.path()).unwrap();
        assert_eq!(back.d_l, sc.d_l);
        assert_eq!(back.d_j, sc.d_j);
        assert_eq!(back.l, sc.l);
        assert_eq!(back.h, sc.h);
        assert_eq!(back.t, sc.t);
        assert_eq!(back.config, sc.config);
        assert_eq!(back.ground_truth, sc.ground_truth);
        assert_eq!(back.perm_concrete, sc.perm_concrete);
    }

    #[test]
    fn invalid_configs() {
        let base = small(0);
        for cfg in [
            ScenarioConfig { b: 0, ..base.clone() },
            ScenarioConfig { block_size_range: [3, 2], ..base.clone() },
            ScenarioConfig { block_size_range: [0, 2], ..base.clone() },
            ScenarioConfig { n_joint_samples: 1000, ..base.clone() },
            ScenarioConfig { n_joint_samples: 1, ..base.clone() },
            ScenarioConfig { abstract_obs_noise_variance: -1.0, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
        let too_many = ScenarioConfig { abstract_edges: 7, ..base };
        assert!(matches!(generate(&too_many), Err(Error::TooManyEdges { .. })));
    }
}
