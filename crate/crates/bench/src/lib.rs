//! Shared instance builders for the benchmark targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lepa_core::{generate_scenario, EngineConfig, Preset, Scenario, ScenarioConfig, SlotInstance};

/// Preset-I style population scaled to `n` users, as one auction instance
/// with everyone at a zero queue.
pub fn instance_with_users(n: usize, seed: u64) -> SlotInstance {
    let (scenario, config) = scenario_with_users(n, seed);
    SlotInstance {
        bids: scenario.users.iter().map(|u| u.truthful_bid()).collect(),
        tasks: scenario.tasks,
        queues: Default::default(),
        config,
    }
}

pub fn scenario_with_users(n: usize, seed: u64) -> (Scenario, EngineConfig) {
    let mut config = ScenarioConfig::preset(Preset::I);
    config.n = n;
    config.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = generate_scenario(&config, &mut rng).expect("preset I scales in n");
    let engine = config.engine_config().expect("preset engine config");
    (scenario, engine)
}
