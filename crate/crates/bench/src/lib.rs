//! Shared inputs for the benchmarks.

use blelearn::fingerprint::connection_references;
use blelearn::{MealyMachine, Procedure, RunConfig, SocId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Noise-free run configuration for one catalogued target.
pub fn clean_run(soc: SocId, procedure: Procedure) -> RunConfig {
    RunConfig::new(soc, procedure).with_seed(0)
}

/// A random machine and an equivalent copy with its states renumbered.
pub fn machine_pair(states: usize, inputs: usize, seed: u64) -> (MealyMachine, MealyMachine) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = MealyMachine::random(&mut rng, states, inputs, 3);
    let c = m.canonical();
    (m, c)
}

pub fn references() -> Vec<(String, MealyMachine)> {
    connection_references()
}
