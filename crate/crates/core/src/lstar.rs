//! L* for Mealy machines with Rivest–Schapire counterexample processing.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::LearnError;
use crate::mealy::{MealyBuilder, MealyMachine, Symbol};
use crate::robust::RobustTeacher;
use crate::sul::Phase;

/// Source of output queries.
pub trait Teacher {
    fn query(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError>;

    /// Executes on the system even when the answer is cached.
    fn query_fresh(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError> {
        self.query(seq)
    }

    fn set_phase(&mut self, _phase: Phase) {}
}

impl Teacher for RobustTeacher {
    fn query(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError> {
        RobustTeacher::query(self, seq)
    }

    fn query_fresh(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError> {
        RobustTeacher::query_fresh(self, seq)
    }

    fn set_phase(&mut self, phase: Phase) {
        RobustTeacher::set_phase(self, phase)
    }
}

/// Answers straight from a machine; counts executed symbols.
#[derive(Debug, Clone)]
pub struct MachineTeacher {
    machine: MealyMachine,
    pub queries: u64,
    pub symbols: u64,
}

impl MachineTeacher {
    pub fn new(machine: MealyMachine) -> Self {
        MachineTeacher {
            machine,
            queries: 0,
            symbols: 0,
        }
    }
}

impl Teacher for MachineTeacher {
    fn query(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError> {
        self.queries += 1;
        self.symbols += seq.len() as u64;
        Ok(self.machine.run(seq)?)
    }
}

/// Prefix-closed query cache in front of another teacher. Only cache misses
/// reach the inner teacher and are counted.
#[derive(Debug, Clone)]
pub struct CachingTeacher<T> {
    inner: T,
    cache: HashMap<Vec<Symbol>, Vec<Symbol>>,
    pub misses: u64,
    pub miss_symbols: u64,
}

impl<T: Teacher> CachingTeacher<T> {
    pub fn new(inner: T) -> Self {
        CachingTeacher {
            inner,
            cache: HashMap::new(),
            misses: 0,
            miss_symbols: 0,
        }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Teacher> Teacher for CachingTeacher<T> {
    fn query(&mut self, seq: &[Symbol]) -> Result<Vec<Symbol>, LearnError> {
        if let Some(out) = self.cache.get(seq) {
            return Ok(out.clone());
        }
        let out = self.inner.query(seq)?;
        self.misses += 1;
        self.miss_symbols += seq.len() as u64;
        for k in 0..=seq.len() {
            self.cache
                .entry(seq[..k].to_vec())
                .or_insert_with(|| out[..k].to_vec());
        }
        Ok(out)
    }

    fn set_phase(&mut self, phase: Phase) {
        self.inner.set_phase(phase);
    }
}

pub trait EquivalenceOracle {
    fn find_counterexample(
        &mut self,
        hyp: &Hypothesis,
        teacher: &mut dyn Teacher,
    ) -> Result<Option<Vec<Symbol>>, LearnError>;
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub machine: MealyMachine,
    /// Access sequence of every state, indexed by state.
    pub access: Vec<Vec<Symbol>>,
}

impl Hypothesis {
    pub fn num_states(&self) -> usize {
        self.machine.num_states()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CexProcessing {
    #[default]
    RivestSchapire,
    /// Add every prefix of the counterexample to S and keep the table consistent.
    AllPrefixes,
}

type Row = Vec<Vec<Symbol>>;

#[derive(Debug, Clone)]
pub struct ObservationTable {
    inputs: Vec<Symbol>,
    s: Vec<Vec<Symbol>>,
    e: Vec<Vec<Symbol>>,
    cells: HashMap<Vec<Symbol>, Row>,
    promotions: usize,
    /// S rows are kept pairwise distinct (restarting S when a reload merges two).
    distinct_s: bool,
}

fn concat(a: &[Symbol], b: &[Symbol]) -> Vec<Symbol> {
    a.iter().chain(b).cloned().collect()
}

impl ObservationTable {
    pub fn new(inputs: &[Symbol]) -> Self {
        ObservationTable {
            inputs: inputs.to_vec(),
            s: vec![Vec::new()],
            e: inputs.iter().map(|i| vec![i.clone()]).collect(),
            cells: HashMap::new(),
            promotions: 0,
            distinct_s: true,
        }
    }

    pub fn prefixes(&self) -> &[Vec<Symbol>] {
        &self.s
    }

    pub fn suffixes(&self) -> &[Vec<Symbol>] {
        &self.e
    }

    pub fn row(&self, prefix: &[Symbol]) -> Option<&Row> {
        self.cells.get(prefix)
    }

    fn extensions(&self) -> Vec<Vec<Symbol>> {
        let mut v = Vec::new();
        for s in &self.s {
            for a in &self.inputs {
                let mut p = s.clone();
                p.push(a.clone());
                v.push(p);
            }
        }
        v
    }

    fn all_rows(&self) -> Vec<Vec<Symbol>> {
        let mut v = self.s.clone();
        v.extend(self.extensions());
        v
    }

    /// Queries every missing cell.
    pub fn fill(&mut self, teacher: &mut dyn Teacher) -> Result<(), LearnError> {
        for p in self.all_rows() {
            let have = self.cells.get(&p).map_or(0, Vec::len);
            if have == self.e.len() {
                continue;
            }
            let mut row = self.cells.remove(&p).unwrap_or_default();
            for e in &self.e[have..] {
                let out = teacher.query(&concat(&p, e))?;
                row.push(out[p.len()..].to_vec());
            }
            self.cells.insert(p, row);
        }
        Ok(())
    }

    /// Reads every cell again through the teacher, picking up cache
    /// corrections. If two S rows became equal, the later one is dropped
    /// together with its extensions in S. Returns true if any cell changed.
    pub fn reload(&mut self, teacher: &mut dyn Teacher) -> Result<bool, LearnError> {
        let old = std::mem::take(&mut self.cells);
        self.fill(teacher)?;
        let changed = old
            .iter()
            .any(|(k, v)| self.cells.get(k).is_some_and(|n| n != v));
        if self.distinct_s {
            let mut seen: HashSet<&Row> = HashSet::new();
            let mut dropped: Vec<Vec<Symbol>> = Vec::new();
            for p in &self.s {
                if dropped.iter().any(|d| p.starts_with(d)) || !seen.insert(&self.cells[p]) {
                    dropped.push(p.clone());
                }
            }
            if !dropped.is_empty() {
                self.s.retain(|p| !dropped.iter().any(|d| p.starts_with(d)));
                self.fill(teacher)?;
            }
        }
        Ok(changed)
    }

    fn add_prefix(&mut self, p: Vec<Symbol>) {
        if !self.s.contains(&p) {
            self.s.push(p);
        }
    }

    fn add_suffix(&mut self, e: Vec<Symbol>) -> bool {
        if e.is_empty() || self.e.contains(&e) {
            return false;
        }
        self.e.push(e);
        true
    }

    /// First extension row without a matching S row.
    pub fn unclosed(&self) -> Option<Vec<Symbol>> {
        let s_rows: Vec<&Row> = self.s.iter().map(|s| &self.cells[s]).collect();
        self.extensions()
            .into_iter()
            .find(|p| !s_rows.contains(&&self.cells[p]))
    }

    /// Promotes unmatched rows until closed. A row is re-executed once
    /// before its first promotion.
    pub fn close(&mut self, teacher: &mut dyn Teacher) -> Result<(), LearnError> {
        self.close_bounded(teacher, usize::MAX)
    }

    fn close_bounded(
        &mut self,
        teacher: &mut dyn Teacher,
        max_states: usize,
    ) -> Result<(), LearnError> {
        self.fill(teacher)?;
        while let Some(p) = self.unclosed() {
            self.promotions += 1;
            if self.s.len() >= max_states || self.promotions > max_states.saturating_mul(16) {
                return Err(LearnError::StateLimit(max_states));
            }
            self.add_prefix(p);
            self.fill(teacher)?;
        }
        Ok(())
    }

    /// A suffix `a·e` separating two equal S rows, if any.
    fn inconsistency(&self) -> Option<Vec<Symbol>> {
        for (i, s1) in self.s.iter().enumerate() {
            for s2 in &self.s[i + 1..] {
                if self.cells[s1] != self.cells[s2] {
                    continue;
                }
                for a in &self.inputs {
                    let r1 = &self.cells[&concat(s1, std::slice::from_ref(a))];
                    let r2 = &self.cells[&concat(s2, std::slice::from_ref(a))];
                    if let Some(k) = (0..self.e.len()).find(|&k| r1[k] != r2[k]) {
                        return Some(concat(std::slice::from_ref(a), &self.e[k]));
                    }
                }
            }
        }
        None
    }

    fn close_and_make_consistent(
        &mut self,
        teacher: &mut dyn Teacher,
        max_states: usize,
    ) -> Result<(), LearnError> {
        loop {
            self.close_bounded(teacher, max_states)?;
            match self.inconsistency() {
                Some(e) => {
                    self.add_suffix(e);
                }
                None => return Ok(()),
            }
        }
    }

    /// Hypothesis over the distinct S rows, first occurrence as representative.
    pub fn hypothesis(&self) -> Hypothesis {
        let mut reps: Vec<&Vec<Symbol>> = Vec::new();
        let mut index: HashMap<&Row, usize> = HashMap::new();
        for s in &self.s {
            let row = &self.cells[s];
            if !index.contains_key(row) {
                index.insert(row, reps.len());
                reps.push(s);
            }
        }
        let mut b = MealyBuilder::new(&self.inputs, reps.len());
        for (q, s) in reps.iter().enumerate() {
            for (k, a) in self.inputs.iter().enumerate() {
                let succ = &self.cells[&concat(s, std::slice::from_ref(a))];
                let target = index[succ];
                let out = &self.cells[*s][k][0];
                b.transition(q, a, out, target)
                    .expect("table symbols are valid");
            }
        }
        Hypothesis {
            machine: b.build().expect("closed tables give total machines"),
            access: reps.into_iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub processing: CexProcessing,
    pub max_rounds: usize,
    pub max_states: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            processing: CexProcessing::RivestSchapire,
            max_rounds: 200,
            max_states: 256,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub rounds: usize,
    pub counterexamples: Vec<Vec<Symbol>>,
    pub probes: usize,
}

pub struct Learner {
    cfg: LearnerConfig,
    table: ObservationTable,
    pub outcome: LearnOutcome,
}

impl Learner {
    pub fn new(inputs: &[Symbol], cfg: LearnerConfig) -> Result<Self, LearnError> {
        if inputs.is_empty() {
            return Err(LearnError::Model(crate::error::MealyError::EmptyAlphabet));
        }
        let mut table = ObservationTable::new(inputs);
        table.distinct_s = cfg.processing == CexProcessing::RivestSchapire;
        Ok(Learner {
            cfg,
            table,
            outcome: LearnOutcome::default(),
        })
    }

    pub fn table(&self) -> &ObservationTable {
        &self.table
    }

    fn stabilize(&mut self, teacher: &mut dyn Teacher) -> Result<Hypothesis, LearnError> {
        self.table.reload(teacher)?;
        let max = self.cfg.max_states;
        match self.cfg.processing {
            CexProcessing::RivestSchapire => self.table.close_bounded(teacher, max)?,
            CexProcessing::AllPrefixes => self.table.close_and_make_consistent(teacher, max)?,
        }
        Ok(self.table.hypothesis())
    }

    fn disagrees(
        hyp: &Hypothesis,
        w: &[Symbol],
        teacher: &mut dyn Teacher,
    ) -> Result<bool, LearnError> {
        Ok(teacher.query(w)? != hyp.machine.run(w)?)
    }

    /// Rivest–Schapire: bisect for the position where replacing the prefix by
    /// its access sequence stops changing the outcome; the rest of the
    /// counterexample becomes a new suffix.
    pub fn rs_suffix(
        hyp: &Hypothesis,
        w: &[Symbol],
        teacher: &mut dyn Teacher,
        probes: &mut usize,
    ) -> Result<Vec<Symbol>, LearnError> {
        let m = &hyp.machine;
        let mut alpha = |i: usize| -> Result<bool, LearnError> {
            let q = m.reached(&w[..i])?;
            let u = &hyp.access[q];
            let out = teacher.query(&concat(u, &w[i..]))?;
            *probes += 1;
            Ok(out[u.len()..] == m.run_from(q, &w[i..])?.1[..])
        };
        let (mut lo, mut hi) = (0usize, w.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if alpha(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(w[hi..].to_vec())
    }

    fn process(
        &mut self,
        hyp: &Hypothesis,
        w: &[Symbol],
        teacher: &mut dyn Teacher,
    ) -> Result<bool, LearnError> {
        match self.cfg.processing {
            CexProcessing::RivestSchapire => {
                let v = Self::rs_suffix(hyp, w, teacher, &mut self.outcome.probes)?;
                Ok(self.table.add_suffix(v))
            }
            CexProcessing::AllPrefixes => {
                let before = self.table.s.len();
                for k in 1..=w.len() {
                    self.table.add_prefix(w[..k].to_vec());
                }
                Ok(self.table.s.len() > before)
            }
        }
    }

    /// The refinement loop. Returns the hypothesis that passed the oracle.
    pub fn learn(
        &mut self,
        teacher: &mut dyn Teacher,
        oracle: &mut dyn EquivalenceOracle,
    ) -> Result<Hypothesis, LearnError> {
        teacher.set_phase(Phase::Learning);
        let mut hyp = self.stabilize(teacher)?;
        let mut refreshed = false;
        loop {
            if self.outcome.rounds >= self.cfg.max_rounds {
                return Err(LearnError::RoundLimit(self.outcome.rounds));
            }
            self.outcome.rounds += 1;
            teacher.set_phase(Phase::Conformance);
            let cex = oracle.find_counterexample(&hyp, teacher)?;
            teacher.set_phase(Phase::Learning);
            let Some(w) = cex else {
                let machine = hyp.machine.minimize();
                let access = machine.access_sequences();
                return Ok(Hypothesis { machine, access });
            };
            self.outcome.counterexamples.push(w.clone());
            hyp = self.stabilize(teacher)?;
            let mut stuck = false;
            while Self::disagrees(&hyp, &w, teacher)? {
                if !self.process(&hyp, &w, teacher)? {
                    stuck = true;
                    break;
                }
                hyp = self.stabilize(teacher)?;
            }
            if stuck {
                if refreshed {
                    return Err(LearnError::InvalidCounterexample(w.join(" ")));
                }
                refreshed = true;
            } else {
                refreshed = false;
            }
        }
    }
}

/// Convenience wrapper: learn with default configuration.
pub fn learn(
    inputs: &[Symbol],
    teacher: &mut dyn Teacher,
    oracle: &mut dyn EquivalenceOracle,
) -> Result<(Hypothesis, LearnOutcome), LearnError> {
    let mut l = Learner::new(inputs, LearnerConfig::default())?;
    let h = l.learn(teacher, oracle)?;
    Ok((h, l.outcome))
}

/// Exact oracle against a known machine: shortest separating sequence.
#[derive(Debug, Clone)]
pub struct PerfectOracle {
    truth: MealyMachine,
}

impl PerfectOracle {
    pub fn new(truth: MealyMachine) -> Self {
        PerfectOracle { truth }
    }
}

impl EquivalenceOracle for PerfectOracle {
    fn find_counterexample(
        &mut self,
        hyp: &Hypothesis,
        _teacher: &mut dyn Teacher,
    ) -> Result<Option<Vec<Symbol>>, LearnError> {
        Ok(match hyp.machine.equivalent(&self.truth)? {
            crate::mealy::Verdict::Equivalent => None,
            crate::mealy::Verdict::Counterexample(w) => Some(w),
        })
    }
}
