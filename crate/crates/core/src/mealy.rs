//! Deterministic, input-enabled Mealy machines.
//!
//! A [`MealyMachine`] is immutable once built. States are dense indices
//! `0..num_states()`; their numbering carries no meaning beyond identity, so
//! structural comparisons go through [`MealyMachine::canonical`].

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;

use crate::error::MealyError;

/// Input and output symbols are opaque, case-sensitive tokens.
pub type Symbol = String;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MealyMachine {
    inputs: Vec<Symbol>,
    outputs: Vec<Symbol>,
    initial: usize,
    num_states: usize,
    // Row-major `state * inputs.len() + input`.
    delta: Vec<usize>,
    lambda: Vec<usize>,
}

/// An observed sequence of input/output pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub pairs: Vec<(Symbol, Symbol)>,
}

impl Trace {
    pub fn from_parts(inputs: &[Symbol], outputs: &[Symbol]) -> Self {
        assert_eq!(inputs.len(), outputs.len(), "trace projections must match");
        Trace {
            pairs: inputs
                .iter()
                .cloned()
                .zip(outputs.iter().cloned())
                .collect(),
        }
    }

    pub fn inputs(&self) -> Vec<Symbol> {
        self.pairs.iter().map(|(i, _)| i.clone()).collect()
    }

    pub fn outputs(&self) -> Vec<Symbol> {
        self.pairs.iter().map(|(_, o)| o.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Result of comparing two machines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Counterexample(Vec<Symbol>),
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

/// Incremental construction of a [`MealyMachine`].
#[derive(Debug, Clone)]
pub struct MealyBuilder {
    inputs: Vec<Symbol>,
    input_index: HashMap<Symbol, usize>,
    num_states: usize,
    initial: usize,
    cells: Vec<Option<(usize, Symbol)>>,
}

impl MealyBuilder {
    pub fn new<S: AsRef<str>>(inputs: &[S], num_states: usize) -> Self {
        let inputs: Vec<Symbol> = inputs.iter().map(|s| s.as_ref().to_string()).collect();
        let input_index = inputs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let cells = vec![None; inputs.len() * num_states];
        MealyBuilder {
            inputs,
            input_index,
            num_states,
            initial: 0,
            cells,
        }
    }

    pub fn initial(mut self, state: usize) -> Self {
        self.initial = state;
        self
    }

    pub fn set_initial(&mut self, state: usize) {
        self.initial = state;
    }

    /// Defines `state --input/output--> target`, overwriting any earlier definition.
    pub fn transition(
        &mut self,
        state: usize,
        input: &str,
        output: &str,
        target: usize,
    ) -> Result<&mut Self, MealyError> {
        let i = *self
            .input_index
            .get(input)
            .ok_or_else(|| MealyError::UnknownInput(input.to_string()))?;
        if state >= self.num_states || target >= self.num_states {
            return Err(MealyError::StateOutOfRange(state.max(target)));
        }
        self.cells[state * self.inputs.len() + i] = Some((target, output.to_string()));
        Ok(self)
    }

    pub fn is_defined(&self, state: usize, input: &str) -> bool {
        self.input_index
            .get(input)
            .map(|&i| self.cells[state * self.inputs.len() + i].is_some())
            .unwrap_or(false)
    }

    pub fn build(self) -> Result<MealyMachine, MealyError> {
        if self.inputs.is_empty() {
            return Err(MealyError::EmptyAlphabet);
        }
        if self.initial >= self.num_states {
            return Err(MealyError::StateOutOfRange(self.initial));
        }
        let k = self.inputs.len();
        let mut outputs: Vec<Symbol> = Vec::new();
        let mut output_index: HashMap<Symbol, usize> = HashMap::new();
        let mut delta = Vec::with_capacity(self.cells.len());
        let mut lambda = Vec::with_capacity(self.cells.len());
        for (idx, cell) in self.cells.into_iter().enumerate() {
            let (target, out) = cell.ok_or_else(|| MealyError::PartialTransition {
                state: idx / k,
                input: self.inputs[idx % k].clone(),
            })?;
            let o = *output_index.entry(out.clone()).or_insert_with(|| {
                outputs.push(out);
                outputs.len() - 1
            });
            delta.push(target);
            lambda.push(o);
        }
        let m = MealyMachine {
            inputs: self.inputs,
            outputs,
            initial: self.initial,
            num_states: self.num_states,
            delta,
            lambda,
        };
        let reach = m.reachable();
        if let Some(q) = reach.iter().position(|r| !r) {
            return Err(MealyError::Unreachable(q));
        }
        Ok(m)
    }
}

/// Predecessor links of a breadth-first search over state pairs.
type Parents = HashMap<(usize, usize), Option<((usize, usize), usize)>>;

impl MealyMachine {
    pub fn inputs(&self) -> &[Symbol] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Symbol] {
        &self.outputs
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn input_index(&self, input: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == input)
    }

    /// Successor and output for an input given by index.
    pub fn step_index(&self, state: usize, input: usize) -> (usize, &str) {
        let idx = state * self.inputs.len() + input;
        (self.delta[idx], &self.outputs[self.lambda[idx]])
    }

    pub fn step(&self, state: usize, input: &str) -> Result<(usize, &str), MealyError> {
        let i = self
            .input_index(input)
            .ok_or_else(|| MealyError::UnknownInput(input.to_string()))?;
        Ok(self.step_index(state, i))
    }

    /// Output sequence produced from the initial state.
    pub fn run<S: AsRef<str>>(&self, seq: &[S]) -> Result<Vec<Symbol>, MealyError> {
        self.run_from(self.initial, seq).map(|(_, out)| out)
    }

    /// Runs `seq` from `state`, returning the reached state and the outputs.
    pub fn run_from<S: AsRef<str>>(
        &self,
        state: usize,
        seq: &[S],
    ) -> Result<(usize, Vec<Symbol>), MealyError> {
        let mut q = state;
        let mut out = Vec::with_capacity(seq.len());
        for s in seq {
            let (next, o) = self.step(q, s.as_ref())?;
            out.push(o.to_string());
            q = next;
        }
        Ok((q, out))
    }

    /// State reached after `seq` from the initial state.
    pub fn reached<S: AsRef<str>>(&self, seq: &[S]) -> Result<usize, MealyError> {
        self.run_from(self.initial, seq).map(|(q, _)| q)
    }

    pub fn trace<S: AsRef<str>>(&self, seq: &[S]) -> Result<Trace, MealyError> {
        let out = self.run(seq)?;
        let ins: Vec<Symbol> = seq.iter().map(|s| s.as_ref().to_string()).collect();
        Ok(Trace::from_parts(&ins, &out))
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            for i in 0..self.inputs.len() {
                let (t, _) = self.step_index(q, i);
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// Shortest access sequence for every state, breadth-first in alphabet order.
    pub fn access_sequences(&self) -> Vec<Vec<Symbol>> {
        let mut access: Vec<Option<Vec<Symbol>>> = vec![None; self.num_states];
        access[self.initial] = Some(Vec::new());
        let mut queue = VecDeque::from([self.initial]);
        while let Some(q) = queue.pop_front() {
            for i in 0..self.inputs.len() {
                let (t, _) = self.step_index(q, i);
                if access[t].is_none() {
                    let mut w = access[q].clone().unwrap();
                    w.push(self.inputs[i].clone());
                    access[t] = Some(w);
                    queue.push_back(t);
                }
            }
        }
        access.into_iter().map(|a| a.unwrap_or_default()).collect()
    }

    fn align_inputs(&self, other: &MealyMachine) -> Result<Vec<usize>, MealyError> {
        if self.inputs.len() != other.inputs.len() {
            return Err(MealyError::AlphabetMismatch);
        }
        self.inputs
            .iter()
            .map(|s| other.input_index(s).ok_or(MealyError::AlphabetMismatch))
            .collect()
    }

    /// Shortest input sequence separating `self` from `other` when started in
    /// `from_self` and `from_other`; ties broken lexicographically by the
    /// declared order of `self`'s alphabet.
    pub fn separating_from(
        &self,
        from_self: usize,
        other: &MealyMachine,
        from_other: usize,
    ) -> Result<Option<Vec<Symbol>>, MealyError> {
        let map = self.align_inputs(other)?;
        let mut parent: Parents = HashMap::new();
        let start = (from_self, from_other);
        parent.insert(start, None);
        let mut queue = VecDeque::from([start]);
        let path = |parent: &Parents, mut node: (usize, usize)| {
            let mut w = Vec::new();
            while let Some(Some((prev, i))) = parent.get(&node) {
                w.push(self.inputs[*i].clone());
                node = *prev;
            }
            w.reverse();
            w
        };
        while let Some((p, q)) = queue.pop_front() {
            for (i, &j) in map.iter().enumerate() {
                let (tp, op) = self.step_index(p, i);
                let (tq, oq) = other.step_index(q, j);
                if op != oq {
                    let mut w = path(&parent, (p, q));
                    w.push(self.inputs[i].clone());
                    return Ok(Some(w));
                }
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry((tp, tq)) {
                    e.insert(Some(((p, q), i)));
                    queue.push_back((tp, tq));
                }
            }
        }
        Ok(None)
    }

    /// Shortest distinguishing sequence from the initial states, if any.
    pub fn distinguishing_sequence(
        &self,
        other: &MealyMachine,
    ) -> Result<Option<Vec<Symbol>>, MealyError> {
        self.separating_from(self.initial, other, other.initial)
    }

    pub fn equivalent(&self, other: &MealyMachine) -> Result<Verdict, MealyError> {
        Ok(match self.distinguishing_sequence(other)? {
            None => Verdict::Equivalent,
            Some(w) => Verdict::Counterexample(w),
        })
    }

    /// Partition of states into behavioural equivalence classes.
    pub fn equivalence_classes(&self) -> Vec<usize> {
        let k = self.inputs.len();
        let mut class: Vec<usize> = renumber(
            (0..self.num_states)
                .map(|q| (0..k).map(|i| self.lambda[q * k + i]).collect::<Vec<_>>())
                .collect(),
        );
        loop {
            let next = renumber(
                (0..self.num_states)
                    .map(|q| {
                        let mut sig = vec![class[q]];
                        sig.extend((0..k).map(|i| class[self.delta[q * k + i]]));
                        sig
                    })
                    .collect(),
            );
            let before = class.iter().max().map_or(0, |m| m + 1);
            let after = next.iter().max().map_or(0, |m| m + 1);
            class = next;
            if before == after {
                return class;
            }
        }
    }

    /// The minimal machine with the same behaviour, states numbered breadth-first.
    pub fn minimize(&self) -> MealyMachine {
        let class = self.equivalence_classes();
        let n = class.iter().max().map_or(0, |m| m + 1);
        let k = self.inputs.len();
        let mut b = MealyBuilder::new(&self.inputs, n).initial(class[self.initial]);
        for q in 0..self.num_states {
            for i in 0..k {
                let (t, o) = self.step_index(q, i);
                b.transition(class[q], &self.inputs[i], o, class[t])
                    .expect("indices valid");
            }
        }
        b.build()
            .expect("quotient is total and reachable")
            .canonical()
    }

    pub fn is_minimal(&self) -> bool {
        self.minimize().num_states == self.num_states
    }

    /// Renumbers states in breadth-first discovery order from the initial state.
    pub fn canonical(&self) -> MealyMachine {
        let k = self.inputs.len();
        let mut order = vec![usize::MAX; self.num_states];
        let mut seq = Vec::with_capacity(self.num_states);
        order[self.initial] = 0;
        seq.push(self.initial);
        let mut head = 0;
        while head < seq.len() {
            let q = seq[head];
            head += 1;
            for i in 0..k {
                let t = self.delta[q * k + i];
                if order[t] == usize::MAX {
                    order[t] = seq.len();
                    seq.push(t);
                }
            }
        }
        let mut b = MealyBuilder::new(&self.inputs, self.num_states).initial(0);
        for &q in &seq {
            for i in 0..k {
                let (t, o) = self.step_index(q, i);
                b.transition(order[q], &self.inputs[i], o, order[t])
                    .expect("indices valid");
            }
        }
        b.build().expect("renumbering preserves totality")
    }

    /// Structural identity up to state renaming.
    pub fn isomorphic(&self, other: &MealyMachine) -> bool {
        if self.inputs != other.inputs || self.num_states != other.num_states {
            return false;
        }
        let a = self.canonical();
        let b = other.canonical();
        let k = a.inputs.len();
        (0..a.num_states).all(|q| {
            (0..k).all(|i| {
                let (ta, oa) = a.step_index(q, i);
                let (tb, ob) = b.step_index(q, i);
                ta == tb && oa == ob
            })
        })
    }

    /// Reachable sub-machine over `inputs` (a subset of the alphabet, in the
    /// given order) started in `initial`.
    pub fn restrict<S: AsRef<str>>(
        &self,
        inputs: &[S],
        initial: usize,
    ) -> Result<MealyMachine, MealyError> {
        let idx: Vec<usize> = inputs
            .iter()
            .map(|s| {
                self.input_index(s.as_ref())
                    .ok_or_else(|| MealyError::UnknownInput(s.as_ref().to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut order = HashMap::from([(initial, 0usize)]);
        let mut seq = vec![initial];
        let mut head = 0;
        while head < seq.len() {
            let q = seq[head];
            head += 1;
            for &i in &idx {
                let (t, _) = self.step_index(q, i);
                if let std::collections::hash_map::Entry::Vacant(e) = order.entry(t) {
                    e.insert(seq.len());
                    seq.push(t);
                }
            }
        }
        let mut b = MealyBuilder::new(inputs, seq.len());
        for &q in &seq {
            for (pos, &i) in idx.iter().enumerate() {
                let (t, o) = self.step_index(q, i);
                b.transition(order[&q], inputs[pos].as_ref(), o, order[&t])?;
            }
        }
        b.build()
    }

    pub fn map_outputs<F: Fn(&str) -> Symbol>(&self, f: F) -> MealyMachine {
        let k = self.inputs.len();
        let mut b = MealyBuilder::new(&self.inputs, self.num_states).initial(self.initial);
        for q in 0..self.num_states {
            for i in 0..k {
                let (t, o) = self.step_index(q, i);
                b.transition(q, &self.inputs[i], &f(o), t)
                    .expect("indices valid");
            }
        }
        b.build().expect("relabelling preserves totality")
    }

    /// Every state has a unique vector of single-input outputs.
    pub fn one_step_distinguishable(&self) -> bool {
        let k = self.inputs.len();
        let mut sigs: Vec<&[usize]> = (0..self.num_states)
            .map(|q| &self.lambda[q * k..(q + 1) * k])
            .collect();
        sigs.sort();
        sigs.windows(2).all(|w| w[0] != w[1])
    }

    /// A random machine with every state reachable from state 0.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        num_states: usize,
        num_inputs: usize,
        num_outputs: usize,
    ) -> MealyMachine {
        assert!(num_states >= 1 && num_inputs >= 1 && num_outputs >= 1);
        let inputs: Vec<Symbol> = (0..num_inputs).map(|i| format!("i{i}")).collect();
        let outputs: Vec<Symbol> = (0..num_outputs).map(|o| format!("o{o}")).collect();
        let mut cells: Vec<Option<usize>> = vec![None; num_states * num_inputs];
        // Spanning tree first so every state is reachable.
        for q in 1..num_states {
            loop {
                let parent = rng.gen_range(0..q);
                let i = rng.gen_range(0..num_inputs);
                if cells[parent * num_inputs + i].is_none() {
                    cells[parent * num_inputs + i] = Some(q);
                    break;
                }
                if (0..q).all(|p| (0..num_inputs).all(|j| cells[p * num_inputs + j].is_some())) {
                    panic!("too few inputs for a spanning tree");
                }
            }
        }
        let mut b = MealyBuilder::new(&inputs, num_states);
        for q in 0..num_states {
            for i in 0..num_inputs {
                let t = cells[q * num_inputs + i].unwrap_or_else(|| rng.gen_range(0..num_states));
                let o = &outputs[rng.gen_range(0..num_outputs)];
                b.transition(q, &inputs[i], o, t).expect("indices valid");
            }
        }
        b.build().expect("spanning tree guarantees reachability")
    }
}

fn renumber<T: Ord + Clone + std::hash::Hash>(sigs: Vec<T>) -> Vec<usize> {
    let mut ids: HashMap<T, usize> = HashMap::new();
    sigs.into_iter()
        .map(|s| {
            let n = ids.len();
            *ids.entry(s).or_insert(n)
        })
        .collect()
}

impl fmt::Display for MealyMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MealyMachine({} states, {} inputs, {} outputs)",
            self.num_states,
            self.inputs.len(),
            self.outputs.len()
        )
    }
}
