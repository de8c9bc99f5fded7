//! Shared fixtures for the criterion benchmarks.

use mrr_core::{draw_survey, simulate_population, ExperimentConfig, Population, Survey};

/// A population under the default configuration.
pub fn population(size: usize, seed: u64) -> Population {
    let config = ExperimentConfig::default();
    simulate_population(&config.rates, size, config.birth_window, seed).expect("valid defaults")
}

pub fn survey(pop: &Population, n: usize, seed: u64) -> Survey {
    draw_survey(pop, n, ExperimentConfig::default().survey_window, seed)
        .expect("default window has survivors")
}
