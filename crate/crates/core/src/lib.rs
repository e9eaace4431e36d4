//! Linear causal abstraction toolkit.
//!
//! * [`scm`]: linear SCMs, reduced forms, hard interventions, simulation.
//! * [`abstraction`]: linear abstraction maps `T`, relevant sets, concrete
//!   blocks, exogenous maps and two independent abstraction verifiers.
//! * [`concretize`]: sampling concrete models abstracted by a given `(M, T)`.
//! * [`scenario`]: synthetic benchmark scenarios with paired datasets.
//! * [`discovery`]: DirectLiNGAM with forbidden-path prior knowledge.
//! * [`pipeline`]: Abs-LiNGAM, abstraction-guided concrete discovery.
//! * [`evaluate`]: metrics and the benchmark harness.
//!
//! The `parallel` feature (on by default) runs the data-parallel loops on
//! rayon; without it every loop runs sequentially with identical results.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abstraction;
pub mod concretize;
pub mod discovery;
pub mod error;
pub mod evaluate;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod scm;

pub use abstraction::{AbstractionCheck, AbstractionMap, BlockStructure, ExogenousMap, RelevantSets};
pub use discovery::{DiscoveryConfig, PriorKnowledge};
pub use error::{Error, Result};
pub use pipeline::{PipelineConfig, TStrategy};
pub use scenario::{Scenario, ScenarioConfig};
pub use scm::{Intervention, LinearScm, NoiseSpec};
