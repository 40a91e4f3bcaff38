//! The query boundary: single steps, reset orchestration and counters.

use serde::{Deserialize, Serialize};

use crate::error::LearnError;
use crate::keys::{mix, unit_interval};
use crate::mapper::{ADV, CONNECTION_REQ, EMPTY, PAUSE_ENCRYPTION_REQ, SCAN_REQ, TERMINATE_IND};
use crate::mealy::{MealyMachine, Symbol};

/// A resettable system answering one abstract input at a time.
pub trait Sul: Send {
    fn step(&mut self, input: &str) -> Symbol;

    /// Marks the start of a query; the place for purely local resets.
    fn begin_query(&mut self) {}

    /// Marks the end of a query, after the post steps.
    fn end_query(&mut self) {}

    fn encryption_enabled(&self) -> bool {
        false
    }

    /// Out-of-band restart. Returns false if the target cannot be hard reset.
    fn hard_reset(&mut self) -> bool {
        false
    }
}

impl<S: Sul + ?Sized> Sul for Box<S> {
    fn step(&mut self, input: &str) -> Symbol {
        (**self).step(input)
    }
    fn begin_query(&mut self) {
        (**self).begin_query()
    }
    fn end_query(&mut self) {
        (**self).end_query()
    }
    fn encryption_enabled(&self) -> bool {
        (**self).encryption_enabled()
    }
    fn hard_reset(&mut self) -> bool {
        (**self).hard_reset()
    }
}

/// A Mealy machine used directly as the system under learning.
#[derive(Debug, Clone)]
pub struct MachineSul {
    machine: MealyMachine,
    state: usize,
}

impl MachineSul {
    pub fn new(machine: MealyMachine) -> Self {
        let state = machine.initial();
        MachineSul { machine, state }
    }

    pub fn machine(&self) -> &MealyMachine {
        &self.machine
    }
}

impl Sul for MachineSul {
    fn step(&mut self, input: &str) -> Symbol {
        match self.machine.step(self.state, input) {
            Ok((next, out)) => {
                self.state = next;
                out.to_string()
            }
            Err(_) => EMPTY.to_string(),
        }
    }

    fn begin_query(&mut self) {
        self.state = self.machine.initial();
    }

    fn hard_reset(&mut self) -> bool {
        self.state = self.machine.initial();
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub loss_prob: f64,
    pub delay_prob: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(loss_prob: f64, delay_prob: f64, seed: u64) -> Result<Self, String> {
        for (name, p) in [("loss", loss_prob), ("delay", delay_prob)] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        Ok(NoiseConfig {
            loss_prob,
            delay_prob,
            seed,
        })
    }

    pub fn silent() -> Self {
        NoiseConfig {
            loss_prob: 0.0,
            delay_prob: 0.0,
            seed: 0,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.loss_prob == 0.0 && self.delay_prob == 0.0
    }

    /// Uniform draw for `(query, step, channel)`.
    fn draw(&self, query: u64, step: u64, channel: u64) -> f64 {
        unit_interval(mix(self.seed, mix(query, mix(step, channel))))
    }
}

/// Drops requests and delays responses at the abstract step level.
pub struct NoisySul<S> {
    inner: S,
    cfg: NoiseConfig,
    query: u64,
    step: u64,
    pending: Option<Symbol>,
}

impl<S: Sul> NoisySul<S> {
    pub fn new(inner: S, cfg: NoiseConfig) -> Self {
        NoisySul {
            inner,
            cfg,
            query: 0,
            step: 0,
            pending: None,
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }
}

impl<S: Sul> Sul for NoisySul<S> {
    fn step(&mut self, input: &str) -> Symbol {
        let lost = self.cfg.draw(self.query, self.step, 1) < self.cfg.loss_prob;
        let delayed = !lost && self.cfg.draw(self.query, self.step, 2) < self.cfg.delay_prob;
        self.step += 1;
        let own = if lost {
            EMPTY.to_string()
        } else {
            self.inner.step(input)
        };
        let surfaced = self.pending.take();
        if delayed {
            self.pending = Some(own);
            surfaced.unwrap_or_else(|| EMPTY.to_string())
        } else {
            surfaced.unwrap_or(own)
        }
    }

    fn begin_query(&mut self) {
        self.query += 1;
        self.step = 0;
        self.pending = None;
        self.inner.begin_query();
    }

    fn end_query(&mut self) {
        self.inner.end_query();
    }

    fn encryption_enabled(&self) -> bool {
        self.inner.encryption_enabled()
    }

    fn hard_reset(&mut self) -> bool {
        self.pending = None;
        self.inner.hard_reset()
    }
}

pub fn wrap_noisy<S: Sul>(inner: S, cfg: NoiseConfig) -> NoisySul<S> {
    NoisySul::new(inner, cfg)
}

/// How a query is framed: the steps run before it and whether a
/// terminate is sent after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetPlan {
    pub pre: Vec<Symbol>,
    pub post: bool,
}

impl ResetPlan {
    pub fn none() -> Self {
        ResetPlan {
            pre: Vec::new(),
            post: false,
        }
    }

    pub fn ble<S: AsRef<str>>(pre: &[S]) -> Self {
        ResetPlan {
            pre: pre.iter().map(|s| s.as_ref().to_string()).collect(),
            post: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Learning,
    Conformance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub queries: u64,
    pub steps: u64,
    pub learning_queries: u64,
    pub learning_steps: u64,
    pub conformance_queries: u64,
    pub conformance_steps: u64,
    pub connection_errors: u64,
    pub nondet_outputs: u64,
    pub cache_updates: u64,
    pub hard_resets: u64,
}

/// One owner of a system under learning plus its reset contract.
pub struct SulSession {
    sul: Box<dyn Sul>,
    plan: ResetPlan,
    n_error: u32,
    escalate: bool,
    phase: Phase,
    connected: bool,
    pub counters: Counters,
}

impl SulSession {
    pub fn new(sul: Box<dyn Sul>, plan: ResetPlan, n_error: u32, escalate: bool) -> Self {
        SulSession {
            sul,
            plan,
            n_error: n_error.max(1),
            escalate,
            phase: Phase::Learning,
            connected: false,
            counters: Counters::default(),
        }
    }

    /// A session over a bare machine: no pre/post steps, unlimited patience.
    pub fn for_machine(machine: MealyMachine) -> Self {
        Self::new(
            Box::new(MachineSul::new(machine)),
            ResetPlan::none(),
            1,
            false,
        )
    }

    pub fn plan(&self) -> &ResetPlan {
        &self.plan
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn escalation_enabled(&self) -> bool {
        self.escalate
    }

    fn observe(&mut self, input: &str, output: &str) {
        if input == SCAN_REQ {
            self.connected = false;
        } else if input == CONNECTION_REQ {
            self.connected = output != EMPTY && output != ADV;
        }
    }

    fn pre_attempt(&mut self) -> bool {
        self.sul.begin_query();
        self.connected = false;
        let pre = self.plan.pre.clone();
        for input in &pre {
            let out = self.sul.step(input);
            self.observe(input, &out);
            let ok = if input == SCAN_REQ {
                out == ADV
            } else {
                out != EMPTY && out != ADV
            };
            if !ok {
                return false;
            }
        }
        true
    }

    /// Brings the target into its initial state, retrying up to `n_error`
    /// times and escalating to a hard reset once if allowed.
    pub fn pre_reset(&mut self) -> Result<(), LearnError> {
        let rounds = if self.escalate { 2 } else { 1 };
        for round in 0..rounds {
            if round > 0 && !self.hard_reset() {
                break;
            }
            for _ in 0..self.n_error {
                if self.pre_attempt() {
                    return Ok(());
                }
                self.counters.connection_errors += 1;
                self.post_reset();
            }
        }
        Err(LearnError::ResetFailure {
            attempts: self.n_error * rounds,
        })
    }

    /// Pauses encryption if needed, then terminates. Failures are counted, never raised.
    pub fn post_reset(&mut self) {
        if self.plan.post {
            if self.sul.encryption_enabled() {
                self.sul.step(PAUSE_ENCRYPTION_REQ);
            }
            let ack = self.sul.step(TERMINATE_IND);
            if ack == EMPTY && self.connected {
                self.counters.connection_errors += 1;
            }
        }
        self.connected = false;
        self.sul.end_query();
    }

    pub fn hard_reset(&mut self) -> bool {
        let ok = self.sul.hard_reset();
        if ok {
            self.counters.hard_resets += 1;
        }
        ok
    }

    /// One full pre/steps/post cycle.
    pub fn execute_query<S: AsRef<str>>(&mut self, seq: &[S]) -> Result<Vec<Symbol>, LearnError> {
        self.pre_reset()?;
        let mut out = Vec::with_capacity(seq.len());
        for s in seq {
            let o = self.sul.step(s.as_ref());
            self.observe(s.as_ref(), &o);
            out.push(o);
        }
        self.post_reset();
        let c = &mut self.counters;
        let n = seq.len() as u64;
        c.queries += 1;
        c.steps += n;
        match self.phase {
            Phase::Learning => {
                c.learning_queries += 1;
                c.learning_steps += n;
            }
            Phase::Conformance => {
                c.conformance_queries += 1;
                c.conformance_steps += n;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mealy::MealyBuilder;

    fn toy() -> MealyMachine {
        let mut b = MealyBuilder::new(&["a", "b"], 2);
        b.transition(0, "a", "x", 1).unwrap();
        b.transition(0, "b", "y", 0).unwrap();
        b.transition(1, "a", "z", 0).unwrap();
        b.transition(1, "b", "y", 1).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn empty_query_counts() {
        let mut s = SulSession::for_machine(toy());
        assert!(s.execute_query::<&str>(&[]).unwrap().is_empty());
        assert_eq!(s.counters.queries, 1);
        assert_eq!(s.counters.steps, 0);
    }

    #[test]
    fn steps_are_conserved() {
        let mut s = SulSession::for_machine(toy());
        s.execute_query(&["a", "a", "b"]).unwrap();
        s.set_phase(Phase::Conformance);
        s.execute_query(&["b"]).unwrap();
        assert_eq!(s.counters.steps, 4);
        assert_eq!(s.counters.learning_steps + s.counters.conformance_steps, 4);
    }

    #[test]
    fn total_loss_empties_everything() {
        let noisy = NoisySul::new(
            MachineSul::new(toy()),
            NoiseConfig::new(1.0, 0.0, 3).unwrap(),
        );
        let mut s = SulSession::new(Box::new(noisy), ResetPlan::none(), 1, false);
        assert_eq!(s.execute_query(&["a", "b", "a"]).unwrap(), vec![EMPTY; 3]);
    }

    #[test]
    fn total_delay_shifts_by_one() {
        let noisy = NoisySul::new(
            MachineSul::new(toy()),
            NoiseConfig::new(0.0, 1.0, 3).unwrap(),
        );
        let mut s = SulSession::new(Box::new(noisy), ResetPlan::none(), 1, false);
        // Every response is held back, so each step shows its predecessor's.
        assert_eq!(
            s.execute_query(&["a", "a", "b"]).unwrap(),
            ["EMPTY", "x", "z"]
        );
    }

    #[test]
    fn probabilities_are_validated() {
        assert!(NoiseConfig::new(1.5, 0.0, 0).is_err());
        assert!(NoiseConfig::new(0.0, -0.1, 0).is_err());
    }

    #[test]
    fn pre_failure_under_total_loss() {
        let noisy = NoisySul::new(
            MachineSul::new(toy()),
            NoiseConfig::new(1.0, 0.0, 1).unwrap(),
        );
        let plan = ResetPlan {
            pre: vec![SCAN_REQ.to_string()],
            post: false,
        };
        let mut s = SulSession::new(Box::new(noisy), plan, 7, false);
        assert_eq!(
            s.execute_query(&["a"]),
            Err(LearnError::ResetFailure { attempts: 7 })
        );
        assert_eq!(s.counters.connection_errors, 7);
        assert_eq!(s.counters.queries, 0);
    }
}
