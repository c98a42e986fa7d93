//! Experiment plumbing: problem files, random problems, sweeps and persisted results.

pub mod files;
pub mod generate;
pub mod spec;
pub mod sweep;

pub use files::{load_features, load_mdp, parse_features, parse_mdp, MdpFile};
pub use generate::{generate_random_mdp, FeatureKind, RandomMdpParams};
pub use spec::{cell_seed, load_spec, parse_spec, Cell, ExperimentSpec, Problem, ProblemSpec};
pub use sweep::{
    brute_force_optimal, check_experiment, oracle_report, run_experiment, CellCheck, CellOutcome,
    Manifest, OracleReport,
};
