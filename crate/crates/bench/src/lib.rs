//! Fixtures shared by the benchmarks.

use fedsa_core::config::ExperimentConfig;

/// Default regression experiment shortened to `rounds`.
pub fn regression_fixture(seed: u64, rounds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::regression(seed);
    cfg.rounds = rounds;
    cfg
}
