//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;

use linabs::abstraction::{
    brute_force_consistency, check_block_abstraction, concrete_blocks, exogenous_map, ConsistencyGrid,
};
use linabs::concretize::{sample_concretization, ConcretizeConfig};
use linabs::evaluate::{pk_scores, run_scenario, scenario_seed, t_support_metrics, Method, RunReport};
use linabs::pipeline::{
    abs_lingam_oracle, abstract_dataset, derive_constraints, discover_abstract, fit_abstraction,
};
use linabs::scenario::{generate, sample_abstract_model, sample_abstraction_map};
use linabs::scm::{blockwise_reduced_form_of, reduced_form_of, signed_uniform};
use linabs::{graph, rng, AbstractionMap, LinearScm, NoiseSpec, PipelineConfig, ScenarioConfig, TStrategy};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn random_instance(seed: u64, b_range: std::ops::RangeInclusive<usize>, ignored: [usize; 2]) -> (LinearScm, LinearScm, AbstractionMap) {
    let mut r = rng::seeded(seed);
    let b = r.random_range(b_range);
    let n_edges = r.random_range(0..=b * (b - 1) / 2);
    let h = sample_abstract_model(b, n_edges, NoiseSpec::default(), &mut r).unwrap();
    let (t, layout) = sample_abstraction_map(b, [2, 5], ignored, &mut r).unwrap();
    let cfg = ConcretizeConfig {
        rng_seed: r.random(),
        ..ConcretizeConfig::default()
    };
    let c = sample_concretization(&h, &t, &layout, &cfg).unwrap();
    (c.l, h, c.t)
}

fn sampler_soundness() -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    let mut worst_residual = 0.0f64;
    let mut worst_dev = 0.0f64;
    for seed in 0..500 {
        let (l, h, t) = random_instance(seed, 2..=5, [0, 3]);
        let check = check_block_abstraction(&l, &h, &t, 1e-8).unwrap();
        let dev = brute_force_consistency(&l, &h, &t, &ConsistencyGrid::for_abstract_size(h.n_vars())).unwrap();
        worst_residual = worst_residual.max(check.max_residual);
        worst_dev = worst_dev.max(dev);
        if !check.ok || dev > 1e-8 {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 60.0,
        format!("{failures}/500 failures, max residual {worst_residual:.2e}, max deviation {worst_dev:.2e}, {secs:.1} s"),
    )
}

fn verifier_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut agree, mut flipped, mut perturbed) = (0, 0, 0);
    for seed in 0..200 {
        let (l, h, t) = random_instance(10_000 + seed, 2..=3, [0, 2]);
        let grid = ConsistencyGrid::for_abstract_size(h.n_vars());
        let verdict = check_block_abstraction(&l, &h, &t, 1e-8).unwrap().ok;
        let brute = brute_force_consistency(&l, &h, &t, &grid).unwrap() <= 1e-8;
        agree += (verdict == brute) as usize;

        let block_of = concrete_blocks(&l, &t).unwrap().block_of(l.n_vars());
        let w = l.weights();
        let d = l.n_vars();
        let cross: Vec<(usize, usize)> = (0..d)
            .flat_map(|u| (0..d).map(move |v| (u, v)))
            .filter(|&(u, v)| {
                w[(u, v)] != 0.0 && matches!((block_of[u], block_of[v]), (Some(a), Some(c)) if a != c)
            })
            .collect();
        if cross.is_empty() {
            continue;
        }
        perturbed += 1;
        let (u, v) = cross[seed as usize % cross.len()];
        let mut w2 = w.clone();
        w2[(u, v)] += 0.5;
        let l2 = LinearScm::new(w2, l.noise().to_vec()).unwrap();
        let v2 = check_block_abstraction(&l2, &h, &t, 1e-8).unwrap().ok;
        let b2 = brute_force_consistency(&l2, &h, &t, &grid).unwrap() <= 1e-8;
        flipped += (!v2 && !b2) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree == 200 && flipped == perturbed && perturbed > 0 && secs < 30.0,
        format!("verdicts agree {agree}/200, perturbation flips both {flipped}/{perturbed}, {secs:.2} s"),
    )
}

fn class_example() -> Outcome {
    let start = Instant::now();
    let t = AbstractionMap::exact(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0])).unwrap();
    let h = LinearScm::with_uniform_noise(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), NoiseSpec::default()).unwrap();
    let model = |w12: [f64; 4]| {
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(0, 2)] = w12[0];
        w[(0, 3)] = w12[1];
        w[(1, 2)] = w12[2];
        w[(1, 3)] = w12[3];
        LinearScm::with_uniform_noise(w, NoiseSpec::default()).unwrap()
    };
    let models = [
        model([1.0, 0.0, 0.0, 1.0]),
        model([0.5, 0.5, 0.5, 0.5]),
        model([1.0, 1.0, 0.0, 1.0]),
    ];
    let verdicts: Vec<bool> = models
        .iter()
        .map(|l| check_block_abstraction(l, &h, &t, 1e-10).unwrap().ok)
        .collect();
    let blocks = concrete_blocks(&models[0], &t).unwrap();
    let s = exogenous_map(&models[0], &t, &blocks).unwrap().matrix_s;
    let s_ok = s.column(0).as_slice() == [2.0, 1.0, 0.0, 0.0] && s.column(1).as_slice() == [0.0, 0.0, 1.0, 1.0];
    let secs = start.elapsed().as_secs_f64();
    outcome(
        verdicts == [true, true, false] && s_ok && secs < 1.0,
        format!(
            "verdicts {verdicts:?}, s1 = {:?}, s2 = {:?}",
            &s.column(0).as_slice()[..2],
            &s.column(1).as_slice()[2..]
        ),
    )
}

fn decomposition_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::seeded(20_000 + seed);
        let mut sizes = Vec::new();
        let d_target = r.random_range(1..=30usize);
        while sizes.iter().sum::<usize>() < d_target {
            let left = d_target - sizes.iter().sum::<usize>();
            sizes.push(r.random_range(1..=left.min(8)));
        }
        let d = d_target;
        let w = DMatrix::from_fn(d, d, |i, j| {
            if i < j && r.random_bool(0.3) {
                signed_uniform(&mut r, 0.2, 1.0)
            } else {
                0.0
            }
        });
        let dec = blockwise_reduced_form_of(&w, &sizes).unwrap();
        let dense = reduced_form_of(&w).unwrap();
        let scale = 1.0 + dense.amax();
        worst = worst.max((dec.assemble() - dense).amax() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 10.0,
        format!("max relative deviation {worst:.2e}, {secs:.2} s"),
    )
}

fn t_recovery() -> Outcome {
    let start = Instant::now();
    let mut f1s = Vec::new();
    for seed in 0..20 {
        let probe = ScenarioConfig {
            seed: 30_000 + seed,
            n_concrete_samples: 200,
            n_joint_samples: 2,
            ..ScenarioConfig::default()
        };
        let d = generate(&probe).unwrap().d();
        let cfg = ScenarioConfig {
            n_joint_samples: 2 * d,
            ..probe
        };
        let sc = generate(&cfg).unwrap();
        let truth = sc.permuted_truth().unwrap();
        let fit = fit_abstraction(&sc.d_j.0, &sc.d_j.1, &PipelineConfig::default()).unwrap();
        let m = t_support_metrics(fit.t_hat.matrix(), truth.t.matrix(), 0.05).unwrap();
        f1s.push(m.f1);
    }
    let secs = start.elapsed().as_secs_f64();
    let f1 = mean(&f1s);
    outcome(
        f1 >= 0.99 && secs < 60.0,
        format!("mean support F1 {f1:.4} (min {:.4}), {secs:.1} s", f1s.iter().cloned().fold(1.0, f64::min)),
    )
}

fn table_small() -> Outcome {
    let start = Instant::now();
    let pipeline = PipelineConfig {
        n_bootstrap: 5,
        ..PipelineConfig::default()
    };
    let mut base: Vec<RunReport> = Vec::new();
    let mut abs: Vec<RunReport> = Vec::new();
    for rep in 0..10 {
        let cfg = ScenarioConfig {
            seed: scenario_seed(40_000, 0, rep),
            ..ScenarioConfig::default()
        };
        let mut reports = run_scenario(&cfg, &pipeline, &[Method::DirectLingam, Method::AbsLingam]).unwrap();
        abs.push(reports.pop().unwrap());
        base.push(reports.pop().unwrap());
        let (b, a) = (&base[rep], &abs[rep]);
        eprintln!(
            "  table-small rep {rep}: baseline auc {:.3} evals {} t {:.1}s | abs auc {:.3} prec {:.3} rec {:.3} evals {} t {:.1}s{}",
            b.roc_auc.unwrap_or(f64::NAN),
            b.pair_evals,
            b.time_concrete_s,
            a.roc_auc.unwrap_or(f64::NAN),
            a.pk_precision.unwrap_or(f64::NAN),
            a.pk_recall.unwrap_or(f64::NAN),
            a.pair_evals,
            a.time_concrete_s,
            a.error.as_deref().or(b.error.as_deref()).map(|e| format!(" error: {e}")).unwrap_or_default(),
        );
    }
    let col = |rs: &[RunReport], f: fn(&RunReport) -> Option<f64>| -> Vec<f64> { rs.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect() };
    let auc_base = mean(&col(&base, |r| r.roc_auc));
    let auc_abs = mean(&col(&abs, |r| r.roc_auc));
    let prec = mean(&col(&abs, |r| r.pk_precision));
    let rec = mean(&col(&abs, |r| r.pk_recall));
    let fewer_evals = base.iter().zip(&abs).filter(|(b, a)| a.pair_evals < b.pair_evals).count();
    let faster = base
        .iter()
        .zip(&abs)
        .filter(|(b, a)| a.time_concrete_s < b.time_concrete_s)
        .count();
    let pass = auc_base >= 0.95
        && auc_abs >= 0.95
        && (auc_abs - auc_base).abs() <= 0.02
        && prec >= 0.95
        && rec >= 0.90
        && fewer_evals >= 9
        && faster >= 8;
    outcome(
        pass,
        format!(
            "ROC-AUC baseline {auc_base:.3} abs {auc_abs:.3}, PK precision {prec:.3} recall {rec:.3}, fewer pair evaluations {fewer_evals}/10, faster concrete stage {faster}/10, {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

/// PK precision of the constraints derived from `D_J` and `D_L` alone.
fn knowledge_precision(cfg: &ScenarioConfig, pipeline: &PipelineConfig) -> f64 {
    let sc = generate(cfg).unwrap();
    let truth = sc.permuted_truth().unwrap();
    let fit = fit_abstraction(&sc.d_j.0, &sc.d_j.1, pipeline).unwrap();
    let d_h = abstract_dataset(&sc.d_l, &fit.t_hat).unwrap();
    let m_hat = discover_abstract(&d_h, pipeline).unwrap().model;
    let k = derive_constraints(&m_hat.adjacency(), &fit.relevant, sc.d()).unwrap();
    pk_scores(&k, &truth.k_true).0
}

fn low_joint_degradation() -> Outcome {
    let start = Instant::now();
    let pipeline = PipelineConfig {
        n_bootstrap: 5,
        ..PipelineConfig::default()
    };
    let run = |n_joint: usize| -> f64 {
        let precisions: Vec<f64> = (0..10)
            .map(|s| {
                let cfg = ScenarioConfig {
                    seed: 50_000 + s,
                    n_joint_samples: n_joint,
                    ..ScenarioConfig::default()
                };
                knowledge_precision(&cfg, &pipeline)
            })
            .collect();
        mean(&precisions)
    };
    let low = run(10);
    let high = run(150);
    outcome(
        low < high,
        format!("mean PK precision {low:.3} at |D_J| = 10 vs {high:.3} at |D_J| = 150, {:.0} s", start.elapsed().as_secs_f64()),
    )
}

fn noisy_abstraction() -> Outcome {
    let start = Instant::now();
    let strategies = [TStrategy::Plain, TStrategy::Top1, TStrategy::Top1Refit];
    let mut f1 = [0.0; 3];
    for seed in 0..30 {
        let cfg = ScenarioConfig {
            seed: 60_000 + seed,
            n_concrete_samples: 300,
            n_joint_samples: 150,
            abstract_obs_noise_variance: 0.5,
            ..ScenarioConfig::default()
        };
        let sc = generate(&cfg).unwrap();
        let truth = sc.permuted_truth().unwrap();
        for (k, &strategy) in strategies.iter().enumerate() {
            let p = PipelineConfig {
                t_strategy: strategy,
                ..PipelineConfig::default()
            };
            let fit = fit_abstraction(&sc.d_j.0, &sc.d_j.1, &p).unwrap();
            f1[k] += t_support_metrics(fit.t_hat.matrix(), truth.t.matrix(), 0.05).unwrap().f1 / 30.0;
        }
    }
    let [plain, top1, refit] = f1;
    outcome(
        refit - top1 >= -0.01 && top1 - plain >= -0.01,
        format!(
            "mean support F1 plain {plain:.3}, top1 {top1:.3}, top1_refit {refit:.3}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn constraint_safety() -> Outcome {
    let start = Instant::now();
    let (mut exact, mut clean) = (0, 0);
    for seed in 0..50 {
        let cfg = ScenarioConfig {
            b: 4,
            abstract_edges: 3,
            block_size_range: [2, 4],
            ignored_block_size_range: [1, 3],
            n_concrete_samples: 3000,
            n_joint_samples: 50,
            seed: 70_000 + seed,
            ..ScenarioConfig::default()
        };
        let sc = generate(&cfg).unwrap();
        let truth = sc.permuted_truth().unwrap();
        let m = LinearScm::with_uniform_noise(truth.m.clone(), NoiseSpec::default()).unwrap();
        let run = abs_lingam_oracle(&sc.d_l, &truth.t, &m, &PipelineConfig::default()).unwrap();
        exact += (pk_scores(&run.knowledge, &truth.k_true).0 == 1.0) as usize;
        let reach = graph::transitive_closure(&run.w_hat.adjacency());
        clean += run.knowledge.pairs().all(|(k, h)| !reach[k][h]) as usize;
    }
    outcome(
        exact == 50 && clean == 50,
        format!(
            "PK precision 1.0 in {exact}/50, no forbidden path in {clean}/50, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("sampler soundness", sampler_soundness),
        ("verifier equivalence", verifier_equivalence),
        ("concretization class example", class_example),
        ("decomposition identity", decomposition_identity),
        ("T recovery", t_recovery),
        ("table small reproduction", table_small),
        ("low joint sample degradation", low_joint_degradation),
        ("noisy abstraction", noisy_abstraction),
        ("constraint safety", constraint_safety),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = f();
        failed += (!o.pass) as usize;
        println!("criterion {id} ({name}): {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
