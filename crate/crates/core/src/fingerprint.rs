//! A single input sequence that tells a set of models apart.
//!
//! Segments are joined with a reset input. Each segment separates the states
//! the models actually occupy after the reset, so devices that keep some
//! history across a reset are handled exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{LearnError, MealyError};
use crate::lstar::Teacher;
use crate::mapper::SCAN_REQ;
use crate::mealy::{MealyMachine, Symbol};
use crate::sim::{full_connection_machine, SocId};

/// A fixed six-input fingerprinting sequence.
pub const REFERENCE_SEQUENCE: [&str; 6] = [
    "scan_req",
    "connection_req",
    "feature_rsp",
    "scan_req",
    "connection_req",
    "version_req",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintReport {
    pub sequence: Vec<Symbol>,
    pub outputs: BTreeMap<String, Vec<Symbol>>,
    pub distinct: bool,
    /// A pair no sequence can separate, when `distinct` is false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indistinguishable: Option<(String, String)>,
}

impl FingerprintReport {
    /// Recomputes `distinct` from the outputs.
    pub fn outputs_distinct(&self) -> bool {
        let v: Vec<_> = self.outputs.values().collect();
        v.iter()
            .enumerate()
            .all(|(i, a)| v[i + 1..].iter().all(|b| a != b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("no models given")]
    Empty,
    #[error("model `{0}` uses a different input alphabet")]
    AlphabetMismatch(String),
    #[error("`{input}` does not reset model `{model}`")]
    NotHoming { model: String, input: String },
    #[error(transparent)]
    Model(#[from] MealyError),
}

/// Whether `input` acts as a reset on `m`: answered identically in every
/// state and idempotent, so a second reset changes nothing.
pub fn is_homing(m: &MealyMachine, input: &str) -> Result<bool, MealyError> {
    let (_, ack) = m.step(m.initial(), input)?;
    for q in 0..m.num_states() {
        let (t, o) = m.step(q, input)?;
        let (tt, _) = m.step(t, input)?;
        if o != ack || m.separating_from(t, m, tt)?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `input` sends every state of `m` back to its initial state.
pub fn is_strictly_homing(m: &MealyMachine, input: &str) -> Result<bool, MealyError> {
    for q in 0..m.num_states() {
        let (t, _) = m.step(q, input)?;
        if m.separating_from(t, m, m.initial())?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn run_all(
    models: &[(String, MealyMachine)],
    seq: &[Symbol],
) -> Result<Vec<Vec<Symbol>>, MealyError> {
    models.iter().map(|(_, m)| m.run(seq)).collect()
}

/// Groups of model indices with identical outputs, each sorted by index.
fn groups(outputs: &[Vec<Symbol>]) -> Vec<Vec<usize>> {
    let mut by: BTreeMap<&[Symbol], Vec<usize>> = BTreeMap::new();
    for (i, o) in outputs.iter().enumerate() {
        by.entry(o).or_default().push(i);
    }
    let mut g: Vec<Vec<usize>> = by.into_values().collect();
    g.sort_by_key(|g| g[0]);
    g
}

fn prefix(seq: &[Symbol], reset: &str) -> Vec<Symbol> {
    let mut w = seq.to_vec();
    if !w.is_empty() {
        w.push(reset.to_string());
    }
    w
}

/// Greedy construction: split the largest confounded group (earliest model
/// on ties) with the shortest pairwise distinguishing sequence inside it,
/// preferring segments that split the group further.
pub fn derive_fingerprint(
    models: &[(String, MealyMachine)],
    reset: &str,
) -> Result<FingerprintReport, FingerprintError> {
    let (_, first) = models.first().ok_or(FingerprintError::Empty)?;
    for (id, m) in models {
        if m.inputs() != first.inputs() {
            return Err(FingerprintError::AlphabetMismatch(id.clone()));
        }
        if !is_homing(m, reset)? {
            return Err(FingerprintError::NotHoming {
                model: id.clone(),
                input: reset.to_string(),
            });
        }
    }
    let mut seq: Vec<Symbol> = Vec::new();
    loop {
        let outputs = run_all(models, &seq)?;
        let gs = groups(&outputs);
        let Some(group) = gs
            .iter()
            .filter(|g| g.len() > 1)
            .max_by_key(|g| (g.len(), std::cmp::Reverse(g[0])))
        else {
            break;
        };
        let base = prefix(&seq, reset);
        let at: Vec<usize> = models
            .iter()
            .map(|(_, m)| m.reached(&base))
            .collect::<Result<_, _>>()?;
        let mut best: Option<(usize, usize, Vec<Symbol>)> = None;
        for (x, &a) in group.iter().enumerate() {
            for &b in &group[x + 1..] {
                let sep = models[a].1.separating_from(at[a], &models[b].1, at[b])?;
                let Some(w) = sep else {
                    return Ok(FingerprintReport {
                        outputs: report_outputs(models, &outputs),
                        sequence: seq,
                        distinct: false,
                        indistinguishable: Some((models[a].0.clone(), models[b].0.clone())),
                    });
                };
                let mut parts = BTreeMap::new();
                for &i in group {
                    parts.insert(models[i].1.run_from(at[i], &w)?.1, ());
                }
                let better = match &best {
                    None => true,
                    Some((len, split, _)) => {
                        w.len() < *len || (w.len() == *len && parts.len() > *split)
                    }
                };
                if better {
                    best = Some((w.len(), parts.len(), w));
                }
            }
        }
        let (_, _, w) = best.expect("a confounded group has a pair");
        seq = base;
        seq.extend(w);
    }
    let outputs = run_all(models, &seq)?;
    Ok(FingerprintReport {
        outputs: report_outputs(models, &outputs),
        sequence: seq,
        distinct: true,
        indistinguishable: None,
    })
}

fn report_outputs(
    models: &[(String, MealyMachine)],
    outputs: &[Vec<Symbol>],
) -> BTreeMap<String, Vec<Symbol>> {
    models
        .iter()
        .map(|(id, _)| id.clone())
        .zip(outputs.iter().cloned())
        .collect()
}

/// Expected outputs of `seq` on a model.
pub fn apply_fingerprint<S: AsRef<str>>(
    seq: &[S],
    m: &MealyMachine,
) -> Result<Vec<Symbol>, MealyError> {
    m.run(seq)
}

/// Outputs of `seq` observed through a live, robust session.
pub fn apply_fingerprint_live<S: AsRef<str>>(
    seq: &[S],
    teacher: &mut dyn Teacher,
) -> Result<Vec<Symbol>, LearnError> {
    if seq.is_empty() {
        return Ok(Vec::new());
    }
    let w: Vec<Symbol> = seq.iter().map(|s| s.as_ref().to_string()).collect();
    teacher.query(&w)
}

/// The unique model whose expected outputs equal `observed`.
pub fn classify(report: &FingerprintReport, observed: &[Symbol]) -> Option<String> {
    let mut hits = report
        .outputs
        .iter()
        .filter(|(_, o)| o.as_slice() == observed);
    match (hits.next(), hits.next()) {
        (Some((id, _)), None) => Some(id.clone()),
        _ => None,
    }
}

/// The six connection references over the complete connection alphabet,
/// in SoC order.
pub fn connection_references() -> Vec<(String, MealyMachine)> {
    SocId::ALL
        .iter()
        .map(|&s| (s.to_string(), full_connection_machine(s)))
        .collect()
}

/// The post-connection grid: for each input, the output produced right after
/// `scan_req · connection_req`.
pub fn post_connection_row<S: AsRef<str>>(
    m: &MealyMachine,
    inputs: &[S],
) -> Result<Vec<Symbol>, MealyError> {
    inputs
        .iter()
        .map(|i| {
            let out = m.run(&[SCAN_REQ, "connection_req", i.as_ref()])?;
            Ok(out[2].clone())
        })
        .collect()
}

/// Inputs of the post-connection grid.
pub const GRID_INPUTS: [&str; 4] = ["feature_rsp", "version_req", "length_req", "length_rsp"];
