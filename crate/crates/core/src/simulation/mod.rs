//! Truthful simulated users, episodes, metrics and ablation strategies.

mod episode;
mod metrics;
mod strategies;
mod synthetic;

pub use episode::{run_episode, run_episodes, EpisodeResult, EpisodeTask, SimulatedUser};
pub use metrics::{comparison_csv, comparison_table, evaluate, strategy_label, MetricsReport, Outcome};
pub use strategies::{
    binary_entropy, highest_score_attribute, max_entropy_attribute, most_informative_attribute, random_attribute, Strategy,
};
pub use synthetic::{generate_world, SyntheticConfig, SyntheticWorld};

#[cfg(test)]
mod tests;
