//! Cached, majority-voting query interface between learner and session.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::LearnError;
use crate::mapper::Procedure;
use crate::mealy::Symbol;
use crate::sul::{Counters, Phase, SulSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustConfig {
    pub n_error: u32,
    pub n_cache: u32,
    pub n_nondet: u32,
    /// Agreeing observations before a cached output is answered without
    /// executing the query again.
    pub n_confirm: u32,
}

pub const DEFAULT_N_CONFIRM: u32 = 3;

impl RobustConfig {
    pub fn new(n_error: u32, n_cache: u32, n_nondet: u32) -> Result<Self, String> {
        if n_error == 0 || n_cache == 0 || n_nondet == 0 {
            return Err("n_error, n_cache and n_nondet must be at least 1".into());
        }
        Ok(RobustConfig {
            n_error,
            n_cache,
            n_nondet,
            n_confirm: DEFAULT_N_CONFIRM,
        })
    }

    pub fn connection() -> Self {
        RobustConfig {
            n_error: 20,
            n_cache: 20,
            n_nondet: 20,
            n_confirm: DEFAULT_N_CONFIRM,
        }
    }

    pub fn pairing() -> Self {
        RobustConfig {
            n_error: 5,
            n_cache: 3,
            n_nondet: 3,
            n_confirm: DEFAULT_N_CONFIRM,
        }
    }

    pub fn with_confirm(mut self, n_confirm: u32) -> Self {
        self.n_confirm = n_confirm.max(1);
        self
    }

    pub fn for_procedure(p: Procedure) -> Self {
        match p {
            Procedure::Connection => Self::connection(),
            Procedure::Pairing => Self::pairing(),
        }
    }

    /// Hard-reset escalation is used for pairing only.
    pub fn escalates(p: Procedure) -> bool {
        p == Procedure::Pairing
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheNode {
    pub children: BTreeMap<Symbol, usize>,
    pub expected: Option<Symbol>,
    pub samples: BTreeMap<Symbol, u32>,
    pub finalized: bool,
    pub updates: u32,
    /// Observations agreeing with `expected`.
    pub seen: u32,
}

/// Prefix tree of observed outputs. Node 0 is the root (empty prefix).
#[derive(Debug, Clone)]
pub struct CacheTree {
    nodes: Vec<CacheNode>,
}

impl Default for CacheTree {
    fn default() -> Self {
        CacheTree {
            nodes: vec![CacheNode::default()],
        }
    }
}

impl CacheTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: usize) -> &CacheNode {
        &self.nodes[id]
    }

    /// Nodes reachable from the root, root excluded.
    pub fn len(&self) -> usize {
        self.paths().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[0].children.is_empty()
    }

    /// Node ids along `seq`, as far as the tree reaches.
    pub fn walk<S: AsRef<str>>(&self, seq: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(seq.len());
        let mut cur = 0;
        for s in seq {
            match self.nodes[cur].children.get(s.as_ref()) {
                Some(&n) => {
                    ids.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        ids
    }

    /// Fully cached outputs for `seq`, if every position is known.
    pub fn lookup<S: AsRef<str>>(&self, seq: &[S]) -> Option<Vec<Symbol>> {
        let ids = self.walk(seq);
        if ids.len() < seq.len() {
            return None;
        }
        ids.iter()
            .map(|&n| self.nodes[n].expected.clone())
            .collect()
    }

    /// First position where `outputs` disagrees with the cache.
    pub fn first_conflict<S: AsRef<str>>(
        &self,
        seq: &[S],
        outputs: &[Symbol],
    ) -> Option<(usize, usize)> {
        self.walk(seq).into_iter().enumerate().find(|&(pos, n)| {
            self.nodes[n]
                .expected
                .as_ref()
                .is_some_and(|e| *e != outputs[pos])
        })
    }

    /// Stores outputs along `seq` where nothing is known yet.
    pub fn insert<S: AsRef<str>>(&mut self, seq: &[S], outputs: &[Symbol]) {
        let mut cur = 0;
        for (s, o) in seq.iter().zip(outputs) {
            let next = match self.nodes[cur].children.get(s.as_ref()) {
                Some(&n) => n,
                None => {
                    let n = self.nodes.len();
                    self.nodes.push(CacheNode::default());
                    self.nodes[cur].children.insert(s.as_ref().to_string(), n);
                    n
                }
            };
            let node = &mut self.nodes[next];
            match &node.expected {
                None => {
                    node.expected = Some(o.clone());
                    node.seen = 1;
                }
                Some(e) if e == o => node.seen += 1,
                Some(_) => {}
            }
            cur = next;
        }
    }

    /// Majority of the collected samples; ties go to the smallest symbol.
    pub fn majority(samples: &BTreeMap<Symbol, u32>) -> Option<Symbol> {
        let best = samples.values().copied().max()?;
        samples
            .iter()
            .find(|(_, &c)| c == best)
            .map(|(s, _)| s.clone())
    }

    /// Finalizes a node from its samples. Returns true if the stored value changed.
    fn finalize(&mut self, id: usize) -> bool {
        let node = &mut self.nodes[id];
        let winner = Self::majority(&node.samples);
        node.finalized = true;
        if let Some(w) = winner.filter(|w| node.expected.as_ref() != Some(w)) {
            node.seen = node.samples[&w];
            node.expected = Some(w);
            node.updates += 1;
            node.children.clear();
            true
        } else {
            false
        }
    }

    /// True if every node along `seq` exists and is finalized or seen
    /// at least `n` times.
    pub fn trusted<S: AsRef<str>>(&self, seq: &[S], n: u32) -> bool {
        let ids = self.walk(seq);
        ids.len() == seq.len()
            && ids
                .iter()
                .all(|&i| self.nodes[i].finalized || self.nodes[i].seen >= n)
    }

    /// Every cached path with its outputs.
    pub fn paths(&self) -> Vec<(Vec<Symbol>, Vec<Symbol>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new(), Vec::new())];
        while let Some((id, ins, outs)) = stack.pop() {
            for (s, &c) in &self.nodes[id].children {
                let mut i2: Vec<Symbol> = ins.clone();
                i2.push(s.clone());
                let mut o2: Vec<Symbol> = outs.clone();
                o2.push(self.nodes[c].expected.clone().unwrap_or_default());
                out.push((i2.clone(), o2.clone()));
                stack.push((c, i2, o2));
            }
        }
        out
    }
}

/// The learner's teacher for output queries: cache first, then the
/// session, resolving disagreements by majority vote.
pub struct RobustTeacher {
    session: SulSession,
    cache: CacheTree,
    cfg: RobustConfig,
}

impl RobustTeacher {
    pub fn new(session: SulSession, cfg: RobustConfig) -> Self {
        RobustTeacher {
            session,
            cache: CacheTree::new(),
            cfg,
        }
    }

    pub fn config(&self) -> RobustConfig {
        self.cfg
    }

    pub fn cache(&self) -> &CacheTree {
        &self.cache
    }

    pub fn counters(&self) -> &Counters {
        &self.session.counters
    }

    pub fn session(&self) -> &SulSession {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut SulSession {
        &mut self.session
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.session.set_phase(phase);
    }

    pub fn into_session(self) -> SulSession {
        self.session
    }

    /// One more execution after a disagreement with a finalized node.
    /// The last allowed attempt is preceded by a hard reset when escalation is on.
    fn retry<S: AsRef<str>>(
        &mut self,
        seq: &[S],
        strikes: &mut u32,
    ) -> Result<Vec<Symbol>, LearnError> {
        if *strikes >= self.cfg.n_nondet {
            return Err(LearnError::NonDeterminismExceeded { query: join(seq) });
        }
        *strikes += 1;
        if *strikes == self.cfg.n_nondet && self.session.escalation_enabled() {
            self.session.hard_reset();
        }
        self.session.execute_query(seq)
    }

    /// Output query with cache lookup and non-determinism resolution.
    pub fn query<S: AsRef<str>>(&mut self, seq: &[S]) -> Result<Vec<Symbol>, LearnError> {
        while !self.cache.trusted(seq, self.cfg.n_confirm) {
            let mut out = self.session.execute_query(seq)?;
            self.resolve(seq, &mut out)?;
        }
        Ok(self.cache.lookup(seq).expect("trusted paths are cached"))
    }

    /// Executes `seq` on the system even if it is cached, then reconciles
    /// with the cache as `query` would.
    pub fn query_fresh<S: AsRef<str>>(&mut self, seq: &[S]) -> Result<Vec<Symbol>, LearnError> {
        let mut out = self.session.execute_query(seq)?;
        self.resolve(seq, &mut out)?;
        Ok(out)
    }

    fn resolve<S: AsRef<str>>(
        &mut self,
        seq: &[S],
        out: &mut Vec<Symbol>,
    ) -> Result<(), LearnError> {
        let mut strikes = 0u32;
        while let Some((pos, id)) = self.cache.first_conflict(seq, out) {
            self.session.counters.nondet_outputs += 1;
            if self.cache.node(id).finalized {
                *out = self.retry(seq, &mut strikes)?;
                continue;
            }
            let expected = self
                .cache
                .node(id)
                .expected
                .clone()
                .expect("conflict implies a value");
            let mut samples = BTreeMap::new();
            *samples.entry(expected).or_insert(0) += 1;
            *samples.entry(out[pos].clone()).or_insert(0) += 1;
            let mut runs = Vec::new();
            while samples.values().sum::<u32>() < self.cfg.n_cache {
                let o = self.session.execute_query(seq)?;
                *samples.entry(o[pos].clone()).or_insert(0) += 1;
                runs.push(o);
            }
            self.cache.nodes[id].samples = samples;
            if self.cache.finalize(id) {
                self.session.counters.cache_updates += 1;
            }
            if let Some(o) = runs
                .into_iter()
                .rev()
                .find(|o| self.cache.first_conflict(seq, o).is_none())
            {
                *out = o;
            }
        }
        self.cache.insert(seq, out);
        Ok(())
    }
}

fn join<S: AsRef<str>>(seq: &[S]) -> String {
    seq.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mealy::{MealyBuilder, MealyMachine};
    use crate::sul::{MachineSul, NoiseConfig, NoisySul, ResetPlan, Sul};

    fn toy() -> MealyMachine {
        let mut b = MealyBuilder::new(&["a", "b"], 2);
        b.transition(0, "a", "x", 1).unwrap();
        b.transition(0, "b", "y", 0).unwrap();
        b.transition(1, "a", "z", 0).unwrap();
        b.transition(1, "b", "y", 1).unwrap();
        b.build().unwrap()
    }

    fn sym(v: &[&str]) -> Vec<Symbol> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn repeated_query_is_served_from_cache() {
        let mut t = RobustTeacher::new(SulSession::for_machine(toy()), RobustConfig::connection());
        let a = t.query(&["a", "a", "b"]).unwrap();
        let b = t.query(&["a", "a", "b"]).unwrap();
        let p = t.query(&["a"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(p, sym(&["x"]));
        assert_eq!(t.counters().queries, DEFAULT_N_CONFIRM as u64);
        assert_eq!(t.counters().nondet_outputs, 0);
    }

    #[test]
    fn majority_prefers_count_then_symbol() {
        let s: BTreeMap<Symbol, u32> = [("B".to_string(), 1), ("A".to_string(), 2)].into();
        assert_eq!(CacheTree::majority(&s).unwrap(), "A");
        let t: BTreeMap<Symbol, u32> = [("B".to_string(), 1), ("A".to_string(), 1)].into();
        assert_eq!(CacheTree::majority(&t).unwrap(), "A");
    }

    /// Answers from a script, one output list per execution.
    struct Scripted {
        runs: Vec<Vec<&'static str>>,
        run: usize,
        pos: usize,
    }

    impl Sul for Scripted {
        fn step(&mut self, _input: &str) -> Symbol {
            let r = &self.runs[self.run.min(self.runs.len() - 1)];
            let o = r[self.pos].to_string();
            self.pos += 1;
            o
        }
        fn begin_query(&mut self) {
            self.pos = 0;
        }
        fn end_query(&mut self) {
            self.run += 1;
        }
    }

    fn scripted(runs: Vec<Vec<&'static str>>, cfg: RobustConfig) -> RobustTeacher {
        let sul = Scripted {
            runs,
            run: 0,
            pos: 0,
        };
        RobustTeacher::new(
            SulSession::new(Box::new(sul), ResetPlan::none(), 1, false),
            cfg,
        )
    }

    #[test]
    fn conflict_triggers_sampling_and_single_update() {
        let cfg = RobustConfig::new(1, 3, 3).unwrap().with_confirm(1);
        let mut t = scripted(
            vec![
                vec!["A"],
                vec!["B"],
                vec!["B"],
                vec!["A"],
                vec!["A"],
                vec!["A"],
            ],
            cfg,
        );
        assert_eq!(t.query(&["a"]).unwrap(), sym(&["A"]));
        assert_eq!(t.query_fresh(&["a"]).unwrap(), sym(&["B"]));
        assert_eq!(t.counters().cache_updates, 1);
        assert_eq!(t.cache().lookup(&["a"]).unwrap(), sym(&["B"]));
        assert_eq!(t.counters().queries, 3);
        // Finalized: later disagreement re-executes instead of voting again.
        let err = t.query_fresh(&["a"]).unwrap_err();
        assert!(matches!(err, LearnError::NonDeterminismExceeded { .. }));
        assert_eq!(t.counters().cache_updates, 1);
        assert_eq!(t.counters().queries, 3 + 1 + 3);
    }

    #[test]
    fn retries_after_finalization_are_bounded() {
        let cfg = RobustConfig::new(1, 5, 2).unwrap().with_confirm(1);
        let mut runs = vec![vec!["A"]];
        runs.extend(std::iter::repeat_n(vec!["B"], 4));
        runs.push(vec!["A"]);
        let mut t = scripted(runs, cfg);
        t.query(&["a"]).unwrap();
        assert_eq!(t.query_fresh(&["a"]).unwrap(), sym(&["B"]));
        let before = t.counters().queries;
        assert!(t.query_fresh(&["a"]).is_err());
        assert_eq!(t.counters().queries - before, 1 + 2);
    }

    #[test]
    fn confirmation_repeats_until_agreement() {
        let cfg = RobustConfig::new(1, 3, 3).unwrap().with_confirm(2);
        let mut t = scripted(vec![vec!["A"], vec!["B"], vec!["B"], vec!["B"]], cfg);
        assert_eq!(t.query(&["a"]).unwrap(), sym(&["B"]));
        assert_eq!(t.counters().cache_updates, 1);
        assert_eq!(t.query(&["a"]).unwrap(), sym(&["B"]));
        assert_eq!(t.counters().queries, 3);
    }

    #[test]
    fn noise_free_cache_is_sound() {
        let m = toy();
        let mut t = RobustTeacher::new(
            SulSession::for_machine(m.clone()),
            RobustConfig::connection(),
        );
        for w in [
            vec!["a", "b", "a"],
            vec!["b", "b"],
            vec!["a", "a", "a", "b"],
        ] {
            t.query(&w).unwrap();
        }
        for (ins, outs) in t.cache().paths() {
            assert_eq!(outs, m.run(&ins).unwrap());
        }
    }

    #[test]
    fn majority_recovers_truth_under_noise() {
        let m = toy();
        let mut wrong = 0;
        for seed in 0..40u64 {
            let noisy = NoisySul::new(
                MachineSul::new(m.clone()),
                NoiseConfig::new(0.1, 0.0, seed).unwrap(),
            );
            let s = SulSession::new(Box::new(noisy), ResetPlan::none(), 1, false);
            let mut t = RobustTeacher::new(s, RobustConfig::new(1, 20, 20).unwrap());
            for _ in 0..5 {
                let _ = t.query_fresh(&["a", "a"]);
            }
            if t.cache().lookup(&["a", "a"]) != Some(sym(&["x", "z"])) {
                wrong += 1;
            }
        }
        assert!(wrong <= 2, "{wrong}");
    }
}
