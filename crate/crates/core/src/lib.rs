//! Evolve heterogeneous ensembles of probabilistic quantum circuits and compare
//! them with homogeneous ensembles (one circuit run repeatedly).
//!
//! * [`sim`]: exact statevector simulation of U/CX gate lists.
//! * [`noise`]: depolarizing + readout noise on a density matrix.
//! * [`ensemble`]: plurality voting, exact ensemble distributions, fitness.
//! * [`evolution`]: the generational algorithm over ensembles.
//! * [`data`]: Iris ingestion, angle encoding, and splits.
//! * [`stats`]: Mann-Whitney U with rank-biserial effect size.
//! * [`harness`]: experiment orchestration and result tables.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod noise;
pub mod parallel;
pub mod seed;
pub mod sim;
pub mod stats;

pub use ensemble::{
    ensemble_fitness, replicate_homogeneous, vote_distribution, Ensemble, EvalMode, FitnessReport,
    Simulator, TestCase,
};
pub use error::{Error, Result};
pub use evolution::{evolve, EvolutionConfig, Population};
pub use noise::{run_noisy, NoiseModel};
pub use parallel::Parallelism;
pub use sim::{run_ideal, sample_shots, Circuit, Gate, OutputDistribution, StateVector};
pub use stats::{mann_whitney, median, MannWhitneyResult};
