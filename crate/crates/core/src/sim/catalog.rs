//! The six simulated SoCs and their behaviour machines.
//!
//! Behaviour machines run over [`BEHAVIOR_INPUTS`] and emit response
//! template keys (see [`super::responses`]). State 0 is always the fresh
//! advertising state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::responses::*;
use crate::error::CatalogError;
use crate::mapper::{AbstractAlphabet, Procedure, CONNECTION_INPUTS, CONNECTION_REQ, SCAN_REQ};
use crate::mealy::{MealyBuilder, MealyMachine, Symbol};

pub const BEHAVIOR_INPUTS: [&str; 15] = [
    "scan_req",
    "connection_req",
    "length_req",
    "length_rsp",
    "feature_req",
    "feature_rsp",
    "version_req",
    "mtu_req",
    "legacy_pairing_req",
    "confirm",
    "random",
    "encryption_req",
    "start_encryption_rsp",
    "terminate_ind",
    "pause_encryption_req",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SocId {
    #[serde(rename = "CC2640R2")]
    Cc2640r2,
    #[serde(rename = "CC2650")]
    Cc2650,
    #[serde(rename = "CC2652R1")]
    Cc2652r1,
    #[serde(rename = "CYBLE-416045-02")]
    Cyble416045,
    #[serde(rename = "CYW43455")]
    Cyw43455,
    #[serde(rename = "nRF52832")]
    Nrf52832,
}

impl SocId {
    pub const ALL: [SocId; 6] = [
        SocId::Cc2640r2,
        SocId::Cc2650,
        SocId::Cc2652r1,
        SocId::Cyble416045,
        SocId::Cyw43455,
        SocId::Nrf52832,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SocId::Cc2640r2 => "CC2640R2",
            SocId::Cc2650 => "CC2650",
            SocId::Cc2652r1 => "CC2652R1",
            SocId::Cyble416045 => "CYBLE-416045-02",
            SocId::Cyw43455 => "CYW43455",
            SocId::Nrf52832 => "nRF52832",
        }
    }
}

impl fmt::Display for SocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SocId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s.to_ascii_lowercase();
        SocId::ALL
            .into_iter()
            .find(|id| id.name().to_ascii_lowercase() == k)
            .or(match k.as_str() {
                "cyble" | "cyble-416045" => Some(SocId::Cyble416045),
                "nrf" => Some(SocId::Nrf52832),
                _ => None,
            })
            .ok_or_else(|| CatalogError::UnknownTarget(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quirk {
    PairingFatigue,
    CrashOnBadEnc,
    VersionIndAlways,
    SlowResponder,
}

impl Quirk {
    pub fn soc(self) -> SocId {
        match self {
            Quirk::PairingFatigue => SocId::Cc2640r2,
            Quirk::CrashOnBadEnc => SocId::Cc2650,
            Quirk::VersionIndAlways => SocId::Cc2652r1,
            Quirk::SlowResponder => SocId::Nrf52832,
        }
    }

    /// Pairing fatigue makes CC2640R2 unlearnable and is opt-in.
    pub fn on_by_default(self) -> bool {
        self != Quirk::PairingFatigue
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub soc_id: SocId,
    pub procedure: Procedure,
    pub state_count: usize,
    pub synthetic: bool,
    pub quirks: Vec<Quirk>,
    pub inputs: Vec<Symbol>,
    pub pre: Vec<Symbol>,
}

/// Accepted pairing requests after which CC2640R2 starts to misbehave.
pub const FATIGUE_THRESHOLD: u32 = 30;

pub fn manifest() -> Vec<CatalogEntry> {
    use Procedure::*;
    use SocId::*;
    let conn = AbstractAlphabet::connection().inputs;
    let post = AbstractAlphabet::post_connection().inputs;
    let pairing = AbstractAlphabet::pairing().inputs;
    let scan = vec![SCAN_REQ.to_string()];
    let scan_conn = vec![SCAN_REQ.to_string(), CONNECTION_REQ.to_string()];
    let row = |soc,
               procedure,
               state_count,
               synthetic,
               quirks: &[Quirk],
               inputs: &Vec<Symbol>,
               pre: &Vec<Symbol>| {
        CatalogEntry {
            soc_id: soc,
            procedure,
            state_count,
            synthetic,
            quirks: quirks.to_vec(),
            inputs: inputs.clone(),
            pre: pre.clone(),
        }
    };
    vec![
        row(
            Cc2640r2,
            Connection,
            5,
            true,
            &[Quirk::PairingFatigue],
            &conn,
            &scan,
        ),
        row(Cc2650, Connection, 5, false, &[], &conn, &scan),
        row(
            Cc2652r1,
            Connection,
            4,
            false,
            &[Quirk::VersionIndAlways],
            &post,
            &scan_conn,
        ),
        row(Cyble416045, Connection, 3, false, &[], &conn, &scan),
        row(Cyw43455, Connection, 16, true, &[], &post, &scan_conn),
        row(
            Nrf52832,
            Connection,
            5,
            false,
            &[Quirk::SlowResponder],
            &conn,
            &scan,
        ),
        row(Cc2640r2, Pairing, 11, false, &[], &pairing, &scan_conn),
        row(
            Cc2650,
            Pairing,
            10,
            true,
            &[Quirk::CrashOnBadEnc],
            &pairing,
            &scan_conn,
        ),
        row(Cyw43455, Pairing, 6, false, &[], &pairing, &scan_conn),
    ]
}

pub fn entry(soc: SocId, procedure: Procedure) -> Result<CatalogEntry, CatalogError> {
    manifest()
        .into_iter()
        .find(|e| e.soc_id == soc && e.procedure == procedure)
        .ok_or_else(|| CatalogError::Uncatalogued {
            soc: soc.to_string(),
            procedure: procedure.to_string(),
        })
}

type Cell = (&'static str, usize);

fn build(n: usize, f: impl Fn(usize, &str) -> Cell) -> MealyMachine {
    let mut b = MealyBuilder::new(&BEHAVIOR_INPUTS, n);
    for q in 0..n {
        for input in BEHAVIOR_INPUTS {
            let (key, target) = f(q, input);
            b.transition(q, input, key, target)
                .expect("behaviour tables use valid states");
        }
    }
    b.build().expect("behaviour tables are total and connected")
}

/// Advertising-state behaviour: only scans and connection requests are answered.
fn advertising(q: usize, input: &str, connect: Cell) -> Cell {
    match input {
        "scan_req" => (ADV, q),
        "connection_req" => connect,
        "terminate_ind" => (NONE, 0),
        _ => (NONE, q),
    }
}

/// Inputs every connected state answers the same way.
fn link(q: usize, input: &str, adv: usize, connect: Cell) -> Option<Cell> {
    match input {
        "scan_req" => Some((ADV, adv)),
        "terminate_ind" => Some((ACK, 0)),
        "connection_req" => Some(connect),
        "pause_encryption_req" => Some((DATA, q)),
        _ => None,
    }
}

fn cc2650_connection() -> MealyMachine {
    build(5, |q, i| {
        let connect = (DATA, 1);
        if q == 0 {
            return advertising(q, i, connect);
        }
        if let Some(c) = link(q, i, 0, connect) {
            return c;
        }
        match (q, i) {
            (_, "length_req" | "length_rsp") => (UNKNOWN, q),
            (_, "feature_req") => (FEATURE_RSP, q),
            (_, "mtu_req") => (MTU_RSP, q),
            (1, "legacy_pairing_req") => (PAIRING_RSP, 2),
            (2, "legacy_pairing_req") => (FAILED, 1),
            (3, "legacy_pairing_req") => (PAIRING_RSP, 4),
            (4, "legacy_pairing_req") => (FAILED, 3),
            (1, "version_req") => (VERSION, 3),
            (2, "version_req") => (VERSION, 4),
            _ => (DATA, q),
        }
    })
}

// 0: fresh advertising, 1: advertising after an aborted connection,
// 2: connected, 3: version exchanged, 4: MTU exchanged.
fn nrf52832_connection() -> MealyMachine {
    build(5, |q, i| {
        if q <= 1 {
            let key = if q == 0 { SM_HDR } else { DATA };
            return advertising(q, i, (key, 2));
        }
        if let Some(c) = link(q, i, 1, (DATA, 2)) {
            return c;
        }
        match (q, i) {
            (_, "length_req") => (LENGTH_RSP, q),
            (_, "length_rsp") => (DATA, 1),
            (_, "feature_req") => (FEATURE_RSP, q),
            (_, "feature_rsp") => (UNKNOWN, q),
            (_, "legacy_pairing_req") => (PAIRING_RSP, q),
            (2, "version_req") => (VERSION, 3),
            (3, "version_req") => (DATA, 3),
            (4, "version_req") => (VERSION, 4),
            (2 | 3, "mtu_req") => (MTU_RSP, 4),
            (4, "mtu_req") => (MTU_ERR, 4),
            _ => (DATA, q),
        }
    })
}

fn cyble_connection() -> MealyMachine {
    build(3, |q, i| {
        if q == 0 {
            return advertising(q, i, (DATA, 1));
        }
        if let Some(c) = link(q, i, 0, (DATA, 1)) {
            return c;
        }
        match (q, i) {
            (_, "feature_rsp") => (REJECT, q),
            (_, "length_req" | "length_rsp") => (UNKNOWN, q),
            (_, "feature_req") => (FEATURE_RSP, q),
            (_, "mtu_req") => (MTU_RSP, q),
            (_, "legacy_pairing_req") => (PAIRING_RSP, q),
            (1, "version_req") => (VERSION, 2),
            _ => (DATA, q),
        }
    })
}

// States 1..=4 are q0..q3 of the reference model.
fn cc2652r1_connection() -> MealyMachine {
    build(5, |q, i| {
        if q == 0 {
            return advertising(q, i, (DATA, 1));
        }
        if let Some(c) = link(q, i, 0, (DATA, 1)) {
            return c;
        }
        let p = q - 1;
        let to = |x: usize| x + 1;
        match (p, i) {
            (_, "version_req") => (VERSION, q),
            (_, "length_req") => (LENGTH_RSP, q),
            (_, "feature_req") => (FEATURE_RSP, q),
            (_, "mtu_req") => (MTU_RSP, q),
            (0, "legacy_pairing_req") => (PAIRING_RSP, to(1)),
            (1, "legacy_pairing_req") => (FAILED, to(0)),
            (2, "legacy_pairing_req") => (PAIRING_RSP, to(3)),
            (3, "legacy_pairing_req") => (FAILED, to(2)),
            (0, "feature_rsp") => (BURST, to(2)),
            (1, "feature_rsp") => (BURST, to(3)),
            (2, "length_rsp") => (DATA, to(0)),
            (3, "length_rsp") => (DATA, to(1)),
            _ => (DATA, q),
        }
    })
}

// Connected states encode four flags: version seen, MTU exchanged,
// feature response seen, pairing pending.
fn cyw43455_connection() -> MealyMachine {
    build(17, |q, i| {
        if q == 0 {
            return advertising(q, i, (DATA, 1));
        }
        if let Some(c) = link(q, i, 0, (DATA, 1)) {
            return c;
        }
        let flags = q - 1;
        let (v, m, f, p) = (flags & 8, flags & 4, flags & 2, flags & 1);
        let with = |bit: usize| 1 + (flags | bit);
        match i {
            "version_req" if v == 0 => (VERSION, with(8)),
            "mtu_req" if m == 0 => (MTU_RSP, with(4)),
            "mtu_req" => (MTU_ERR, q),
            "feature_rsp" if f == 0 => (MTU_REQ, with(2)),
            "legacy_pairing_req" if p == 0 => (PAIRING_RSP, with(1)),
            "legacy_pairing_req" => (FAILED, 1 + (flags & !1)),
            "length_req" => (LENGTH_RSP, q),
            "length_rsp" => (REJECT, q),
            "feature_req" => (FEATURE_RSP, q),
            _ => (DATA, q),
        }
    })
}

/// State index of the CC2640R2 connected state `(pairing, length, feature)`.
pub fn cc2640r2_state(p: usize, l: usize, f: usize) -> usize {
    1 + p * 4 + l * 2 + f
}

fn cc2640r2_connection() -> MealyMachine {
    build(13, |q, i| {
        let connect = (LENGTH_REQ, cc2640r2_state(0, 0, 0));
        if q == 0 {
            return advertising(q, i, connect);
        }
        if let Some(c) = link(q, i, 0, connect) {
            return c;
        }
        let (p, l, f) = ((q - 1) / 4, ((q - 1) / 2) % 2, (q - 1) % 2);
        match i {
            "length_req" => (
                if p < 2 { LENGTH_RSP } else { DATA },
                cc2640r2_state(p, 1, f),
            ),
            "feature_req" => (
                if p == 0 && f == 1 { DATA } else { FEATURE_RSP },
                cc2640r2_state(p, l, 1),
            ),
            "legacy_pairing_req" => match p {
                0 => (PAIRING_RSP, cc2640r2_state(1, l, f)),
                1 => (FAILED, cc2640r2_state(2, l, f)),
                _ => (PAIRING_RSP, cc2640r2_state(1, l, f)),
            },
            "mtu_req" => (MTU_RSP, q),
            "feature_rsp" if p == 2 => (REJECT, q),
            _ => (DATA, q),
        }
    })
}

/// CC2640R2 states where accumulated pairings change the feature response.
pub fn cc2640r2_fatigue_states() -> Vec<usize> {
    let mut v = Vec::new();
    for p in 1..3 {
        for f in 0..2 {
            v.push(cc2640r2_state(p, 1, f));
        }
    }
    v
}

/// Pairing rows per state over `legacy_pairing_req, confirm, random,
/// encryption_req, start_encryption_rsp`; targets use the reference numbering.
type PairingRow = [Cell; 5];

fn pairing_machine(rows: &[PairingRow]) -> MealyMachine {
    let n = rows.len() + 1;
    build(n, |q, i| {
        if q == 0 {
            return advertising(q, i, (DATA, 1));
        }
        if let Some(c) = link(q, i, 0, (DATA, 1)) {
            return c;
        }
        let col = match i {
            "legacy_pairing_req" => 0,
            "confirm" => 1,
            "random" => 2,
            "encryption_req" => 3,
            "start_encryption_rsp" => 4,
            _ => return (DATA, q),
        };
        let (key, target) = rows[q - 1][col];
        (key, target + 1)
    })
}

const D: &str = DATA;
const E: &str = NONE;

fn cyw43455_pairing() -> MealyMachine {
    pairing_machine(&[
        [(PAIRING_RSP, 1), (D, 0), (D, 0), (REJECT, 0), (D, 0)],
        [(D, 1), (SM_CONFIRM, 2), (D, 1), (REJECT, 1), (D, 1)],
        [(D, 2), (D, 2), (SM_RANDOM, 3), (REJECT, 2), (D, 2)],
        [(D, 3), (D, 3), (D, 3), (ENC_START, 4), (D, 3)],
        [(E, 4), (E, 4), (E, 4), (E, 4), (KEYS3, 5)],
        [(E, 5), (E, 5), (E, 5), (E, 5), (E, 5)],
    ])
}

fn cc2640r2_pairing() -> MealyMachine {
    pairing_machine(&[
        [(PAIRING_RSP, 1), (D, 0), (D, 0), (REJECT, 0), (D, 0)],
        [
            (PAIRING_RSP, 0),
            (SM_CONFIRM, 2),
            (D, 1),
            (REJECT, 1),
            (D, 1),
        ],
        [
            (PAIRING_RSP, 0),
            (D, 2),
            (SM_RANDOM, 3),
            (REJECT, 2),
            (D, 2),
        ],
        [
            (PAIRING_RSP, 0),
            (SM_CONFIRM, 2),
            (D, 3),
            (ENC_START, 4),
            (D, 3),
        ],
        [(E, 7), (E, 7), (E, 7), (E, 6), (KEYS5, 5)],
        [(FAILED, 9), (D, 5), (D, 5), (CTRL, 7), (D, 5)],
        [(E, 7), (E, 7), (E, 7), (REJECT, 7), (KEYS5, 8)],
        [(E, 7), (E, 7), (E, 7), (E, 7), (E, 7)],
        [(E, 7), (E, 7), (E, 7), (CTRL, 7), (CTRL, 7)],
        [(PAIRING_RSP, 10), (D, 9), (D, 9), (CTRL, 7), (D, 9)],
        [(FAILED, 9), (D, 10), (D, 10), (CTRL, 7), (E, 10)],
    ])
}

fn cc2650_pairing() -> MealyMachine {
    pairing_machine(&[
        [(PAIRING_RSP, 1), (D, 0), (D, 0), (REJECT, 0), (D, 0)],
        [(FAILED, 0), (SM_CONFIRM, 2), (D, 1), (REJECT, 1), (D, 1)],
        [(FAILED, 0), (D, 2), (SM_RANDOM, 3), (REJECT, 2), (D, 2)],
        [(FAILED, 0), (D, 3), (D, 3), (ENC_START, 4), (D, 3)],
        [(E, 6), (E, 6), (E, 6), (E, 6), (KEYS3, 5)],
        [(PAIRING_RSP, 9), (D, 5), (D, 5), (ENC_START, 7), (D, 5)],
        [(E, 6), (E, 6), (E, 6), (E, 6), (E, 6)],
        [(E, 6), (E, 6), (E, 6), (E, 6), (START_RSP, 8)],
        [(PAIRING_RSP, 9), (D, 8), (D, 8), (CTRL, 8), (D, 8)],
        [(FAILED, 5), (SM_CONFIRM, 9), (D, 9), (D, 9), (D, 9)],
    ])
}

/// CC2650 pairing state that waits for the encrypted start response.
pub const CC2650_AWAITING_START: usize = 5;

/// The concrete behaviour machine of a catalogued target.
pub fn behavior(soc: SocId, procedure: Procedure) -> Result<MealyMachine, CatalogError> {
    use Procedure::*;
    use SocId::*;
    Ok(match (soc, procedure) {
        (Cc2640r2, Connection) => cc2640r2_connection(),
        (Cc2650, Connection) => cc2650_connection(),
        (Cc2652r1, Connection) => cc2652r1_connection(),
        (Cyble416045, Connection) => cyble_connection(),
        (Cyw43455, Connection) => cyw43455_connection(),
        (Nrf52832, Connection) => nrf52832_connection(),
        (Cc2640r2, Pairing) => cc2640r2_pairing(),
        (Cc2650, Pairing) => cc2650_pairing(),
        (Cyw43455, Pairing) => cyw43455_pairing(),
        _ => {
            return Err(CatalogError::Uncatalogued {
                soc: soc.to_string(),
                procedure: procedure.to_string(),
            })
        }
    })
}

/// Ground truth at the abstract level over an arbitrary input subset,
/// starting where the `pre` steps leave the device.
pub fn abstract_machine<S: AsRef<str>>(
    soc: SocId,
    procedure: Procedure,
    inputs: &[S],
    pre: &[S],
) -> Result<MealyMachine, CatalogError> {
    let b = behavior(soc, procedure)?.map_outputs(abstract_output);
    let start = b.reached(pre).expect("pre uses behaviour inputs");
    Ok(b.restrict(inputs, start)
        .expect("learning inputs are behaviour inputs")
        .minimize())
}

pub fn reference_machine(soc: SocId, procedure: Procedure) -> Result<MealyMachine, CatalogError> {
    let e = entry(soc, procedure)?;
    abstract_machine(soc, procedure, &e.inputs, &e.pre)
}

/// Connection behaviour over the complete connection alphabet from the
/// fresh advertising state.
pub fn full_connection_machine(soc: SocId) -> MealyMachine {
    let pre: [&str; 0] = [];
    abstract_machine(soc, Procedure::Connection, &CONNECTION_INPUTS, &pre)
        .expect("every SoC has a connection behaviour")
}
