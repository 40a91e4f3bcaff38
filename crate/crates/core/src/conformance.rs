//! State-prefix random conformance testing as the equivalence oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dot::to_dot;
use crate::error::LearnError;
use crate::keys::{hash_str, mix};
use crate::lstar::{EquivalenceOracle, Hypothesis, Teacher};
use crate::mealy::Symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_test: usize,
    pub n_len: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_test: 10,
            n_len: 10,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn new(n_test: usize, n_len: usize, seed: u64) -> Result<Self, String> {
        if n_test == 0 || n_len == 0 {
            return Err("n_test and n_len must be at least 1".into());
        }
        Ok(OracleConfig {
            n_test,
            n_len,
            seed,
        })
    }
}

/// `n_test` sequences per hypothesis state: its access sequence followed by
/// `n_len` uniformly drawn inputs.
pub fn generate_suite(cfg: &OracleConfig, hyp: &Hypothesis) -> Vec<Vec<Symbol>> {
    let digest = hash_str(&to_dot(&hyp.machine, "h"));
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, digest));
    let inputs = hyp.machine.inputs();
    let mut suite = Vec::with_capacity(hyp.num_states() * cfg.n_test);
    for access in &hyp.access {
        for _ in 0..cfg.n_test {
            let mut w = access.clone();
            w.extend((0..cfg.n_len).map(|_| inputs.choose(&mut rng).expect("non-empty").clone()));
            suite.push(w);
        }
    }
    suite
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceStats {
    pub tests: u64,
    pub test_steps: u64,
    pub rejected: u64,
}

/// The equivalence oracle used for every learning run.
#[derive(Debug, Clone)]
pub struct StatePrefixOracle {
    pub cfg: OracleConfig,
    pub stats: ConformanceStats,
    pub suites: Vec<Vec<Vec<Symbol>>>,
    keep_suites: bool,
}

impl StatePrefixOracle {
    pub fn new(cfg: OracleConfig) -> Self {
        StatePrefixOracle {
            cfg,
            stats: ConformanceStats::default(),
            suites: Vec::new(),
            keep_suites: false,
        }
    }

    /// Keeps every generated suite for later inspection.
    pub fn keep_suites(mut self) -> Self {
        self.keep_suites = true;
        self
    }

    /// Suites as newline-separated, space-joined sequences.
    pub fn dump_suites(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            for w in suite {
                s.push_str(&w.join(" "));
                s.push('\n');
            }
        }
        s
    }
}

fn first_mismatch(a: &[Symbol], b: &[Symbol]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

impl EquivalenceOracle for StatePrefixOracle {
    fn find_counterexample(
        &mut self,
        hyp: &Hypothesis,
        teacher: &mut dyn Teacher,
    ) -> Result<Option<Vec<Symbol>>, LearnError> {
        let suite = generate_suite(&self.cfg, hyp);
        if self.keep_suites {
            self.suites.push(suite.clone());
        }
        for w in suite {
            self.stats.tests += 1;
            self.stats.test_steps += w.len() as u64;
            let expected = hyp.machine.run(&w)?;
            let observed = teacher.query(&w)?;
            let Some(k) = first_mismatch(&expected, &observed) else {
                continue;
            };
            let cex = w[..=k].to_vec();
            let confirm = teacher.query_fresh(&cex)?;
            if confirm[k] != expected[k] {
                return Ok(Some(cex));
            }
            self.stats.rejected += 1;
        }
        Ok(None)
    }
}
