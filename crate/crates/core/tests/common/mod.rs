#![allow(dead_code)]

use std::collections::BTreeSet;

use blelearn::lstar::{EquivalenceOracle, Hypothesis, Teacher};
use blelearn::{LearnError, MealyBuilder, MealyMachine, Symbol};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Shortest length at which some word separates `a` and `b`, found by
/// propagating the set of state pairs reachable by all words of each length.
pub fn brute_force_separation(a: &MealyMachine, b: &MealyMachine, max_len: usize) -> Option<usize> {
    let mut frontier: BTreeSet<(usize, usize)> = BTreeSet::from([(a.initial(), b.initial())]);
    for len in 1..=max_len {
        let mut next = BTreeSet::new();
        for &(p, q) in &frontier {
            for i in a.inputs() {
                let (tp, op) = a.step(p, i).unwrap();
                let (tq, oq) = b.step(q, i).unwrap();
                if op != oq {
                    return Some(len);
                }
                next.insert((tp, tq));
            }
        }
        frontier = next;
    }
    None
}

/// Every word up to `max_len`, run on both machines.
pub fn enumerate_separation(a: &MealyMachine, b: &MealyMachine, max_len: usize) -> Option<usize> {
    let inputs = a.inputs().to_vec();
    let mut words: Vec<Vec<Symbol>> = vec![Vec::new()];
    for len in 1..=max_len {
        let mut next = Vec::with_capacity(words.len() * inputs.len());
        for w in &words {
            for i in &inputs {
                let mut v = w.clone();
                v.push(i.clone());
                if a.run(&v).unwrap() != b.run(&v).unwrap() {
                    return Some(len);
                }
                next.push(v);
            }
        }
        words = next;
    }
    None
}

/// A behaviourally equal copy of `m` with one state duplicated and part of
/// its incoming transitions redirected to the duplicate.
pub fn split_state(m: &MealyMachine, rng: &mut ChaCha8Rng) -> MealyMachine {
    let n = m.num_states();
    for _ in 0..64 {
        let k = rng.gen_range(0..n);
        let mut b = MealyBuilder::new(m.inputs(), n + 1);
        for q in 0..=n {
            let src = if q == n { k } else { q };
            for i in m.inputs() {
                let (mut t, o) = m.step(src, i).unwrap();
                if t == k && rng.gen_bool(0.5) {
                    t = n;
                }
                b.transition(q, i, o, t).unwrap();
            }
        }
        let init = if m.initial() == k && rng.gen_bool(0.5) {
            n
        } else {
            m.initial()
        };
        b.set_initial(init);
        if let Ok(x) = b.build() {
            return x;
        }
    }
    m.clone()
}

/// `m` with one transition's output replaced.
pub fn mutate_output(m: &MealyMachine, rng: &mut ChaCha8Rng) -> MealyMachine {
    let n = m.num_states();
    let (tq, ti) = (rng.gen_range(0..n), rng.gen_range(0..m.inputs().len()));
    let mut b = MealyBuilder::new(m.inputs(), n);
    for q in 0..n {
        for (k, i) in m.inputs().iter().enumerate() {
            let (t, o) = m.step(q, i).unwrap();
            let o = if (q, k) == (tq, ti) { "mutated" } else { o };
            b.transition(q, i, o, t).unwrap();
        }
    }
    b.set_initial(m.initial());
    b.build().unwrap()
}

/// Random walks checked directly against the true machine; exact
/// comparison as a last resort. Costs no queries.
pub struct WalkOracle {
    pub truth: MealyMachine,
    pub rng: ChaCha8Rng,
    pub walks: usize,
    pub len: usize,
}

impl EquivalenceOracle for WalkOracle {
    fn find_counterexample(
        &mut self,
        hyp: &Hypothesis,
        _teacher: &mut dyn Teacher,
    ) -> Result<Option<Vec<Symbol>>, LearnError> {
        let inputs = self.truth.inputs().to_vec();
        for _ in 0..self.walks {
            let w: Vec<Symbol> = (0..self.len)
                .map(|_| inputs[self.rng.gen_range(0..inputs.len())].clone())
                .collect();
            let (a, b) = (hyp.machine.run(&w)?, self.truth.run(&w)?);
            if let Some(k) = a.iter().zip(&b).position(|(x, y)| x != y) {
                return Ok(Some(w[..=k].to_vec()));
            }
        }
        Ok(hyp.machine.distinguishing_sequence(&self.truth)?)
    }
}
