//! End-to-end learning runs against the simulated targets.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::conformance::{OracleConfig, StatePrefixOracle};
use crate::error::{CatalogError, LearnError};
use crate::lstar::{CexProcessing, EquivalenceOracle, Hypothesis, Learner, LearnerConfig, Teacher};
use crate::mapper::{constants, Procedure};
use crate::mealy::{MealyMachine, Symbol};
use crate::robust::{RobustConfig, RobustTeacher};
use crate::sim::{abstract_machine, entry, BleSul, SocId};
use crate::sul::{NoiseConfig, NoisySul, ResetPlan, Sul, SulSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target: SocId,
    pub procedure: Procedure,
    pub noise: NoiseConfig,
    pub robust: RobustConfig,
    pub oracle: OracleConfig,
    /// All catalogued quirks, none, or the defaults when unset.
    pub quirks: Option<bool>,
    /// Hard-reset escalation; defaults to on for pairing.
    pub escalate: bool,
    /// Learning alphabet; the catalogue's when unset.
    pub inputs: Option<Vec<Symbol>>,
    pub processing: CexProcessing,
    pub max_rounds: usize,
}

impl RunConfig {
    pub fn new(target: SocId, procedure: Procedure) -> Self {
        RunConfig {
            target,
            procedure,
            noise: NoiseConfig::silent(),
            robust: RobustConfig::for_procedure(procedure),
            oracle: OracleConfig::default(),
            quirks: None,
            escalate: RobustConfig::escalates(procedure),
            inputs: None,
            processing: CexProcessing::RivestSchapire,
            max_rounds: LearnerConfig::default().max_rounds,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        self.oracle.seed = seed;
        self
    }

    /// Learning alphabet and pre steps for this run.
    pub fn alphabet(&self) -> Result<(Vec<Symbol>, Vec<Symbol>), CatalogError> {
        let e = entry(self.target, self.procedure)?;
        Ok((self.inputs.clone().unwrap_or(e.inputs), e.pre))
    }

    /// The machine a successful run is expected to produce.
    pub fn reference(&self) -> Result<MealyMachine, CatalogError> {
        let (inputs, pre) = self.alphabet()?;
        abstract_machine(self.target, self.procedure, &inputs, &pre)
    }
}

/// Counters of one run. Every field is always present.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub states: usize,
    pub total_time_ms: u64,
    pub learning_time_ms: u64,
    pub conformance_time_ms: u64,
    pub learning_rounds: usize,
    pub output_queries: u64,
    pub output_query_steps: u64,
    pub conformance_tests: u64,
    pub conformance_test_steps: u64,
    pub connection_errors: u64,
    pub nondet_outputs: u64,
    pub cache_updates: u64,
    pub hard_resets: u64,
    pub constants_version: String,
}

impl Stats {
    /// Copy with the wall-clock fields zeroed.
    pub fn without_times(&self) -> Stats {
        Stats {
            total_time_ms: 0,
            learning_time_ms: 0,
            conformance_time_ms: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub result: Result<Hypothesis, LearnError>,
    pub stats: Stats,
    pub suites: String,
}

impl RunOutcome {
    pub fn machine(&self) -> Option<&MealyMachine> {
        self.result.as_ref().ok().map(|h| &h.machine)
    }
}

struct Timed<'a> {
    inner: &'a mut StatePrefixOracle,
    spent: Duration,
}

impl EquivalenceOracle for Timed<'_> {
    fn find_counterexample(
        &mut self,
        hyp: &Hypothesis,
        teacher: &mut dyn Teacher,
    ) -> Result<Option<Vec<Symbol>>, LearnError> {
        let t = Instant::now();
        let r = self.inner.find_counterexample(hyp, teacher);
        self.spent += t.elapsed();
        r
    }
}

/// The system under learning for a run, noise included.
pub fn build_sul(cfg: &RunConfig) -> Result<Box<dyn Sul>, CatalogError> {
    let mut sul = BleSul::new(cfg.target, cfg.procedure)?;
    if let Some(on) = cfg.quirks {
        sul = sul.with_quirks(on);
    }
    Ok(if cfg.noise.is_silent() {
        Box::new(sul)
    } else {
        Box::new(NoisySul::new(sul, cfg.noise))
    })
}

pub fn run_learning(cfg: &RunConfig) -> Result<RunOutcome, CatalogError> {
    let (inputs, pre) = cfg.alphabet()?;
    let session = SulSession::new(
        build_sul(cfg)?,
        ResetPlan::ble(&pre),
        cfg.robust.n_error,
        cfg.escalate,
    );
    let mut teacher = RobustTeacher::new(session, cfg.robust);
    let mut oracle = StatePrefixOracle::new(cfg.oracle).keep_suites();
    let learner_cfg = LearnerConfig {
        processing: cfg.processing,
        max_rounds: cfg.max_rounds,
        ..LearnerConfig::default()
    };
    let start = Instant::now();
    let mut timed = Timed {
        inner: &mut oracle,
        spent: Duration::ZERO,
    };
    let (result, rounds) = match Learner::new(&inputs, learner_cfg) {
        Ok(mut l) => {
            let r = l.learn(&mut teacher, &mut timed);
            (r, l.outcome.rounds)
        }
        Err(e) => (Err(e), 0),
    };
    let conformance = timed.spent;
    let total = start.elapsed();
    let c = teacher.counters();
    let stats = Stats {
        states: result.as_ref().map_or(0, |h| h.num_states()),
        total_time_ms: total.as_millis() as u64,
        learning_time_ms: total.saturating_sub(conformance).as_millis() as u64,
        conformance_time_ms: conformance.as_millis() as u64,
        learning_rounds: rounds,
        output_queries: c.learning_queries,
        output_query_steps: c.learning_steps,
        conformance_tests: oracle.stats.tests,
        conformance_test_steps: oracle.stats.test_steps,
        connection_errors: c.connection_errors,
        nondet_outputs: c.nondet_outputs,
        cache_updates: c.cache_updates,
        hard_resets: c.hard_resets,
        constants_version: constants().version.clone(),
    };
    Ok(RunOutcome {
        result,
        stats,
        suites: oracle.dump_suites(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_cc2650_connection() {
        let cfg = RunConfig::new(SocId::Cc2650, Procedure::Connection).with_seed(7);
        let out = run_learning(&cfg).unwrap();
        let h = out.result.unwrap();
        assert!(h
            .machine
            .equivalent(&cfg.reference().unwrap())
            .unwrap()
            .is_equivalent());
        assert_eq!(out.stats.states, 5);
        assert_eq!(out.stats.learning_rounds, 1);
        assert_eq!(out.stats.conformance_tests, 50);
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = RunConfig::new(SocId::Cyble416045, Procedure::Connection).with_seed(3);
        cfg.noise = NoiseConfig::new(0.05, 0.05, 3).unwrap();
        let a = run_learning(&cfg).unwrap();
        let b = run_learning(&cfg).unwrap();
        assert_eq!(a.stats.without_times(), b.stats.without_times());
        assert_eq!(a.suites, b.suites);
    }
}
