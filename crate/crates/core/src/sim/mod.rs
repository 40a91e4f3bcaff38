//! Simulated BLE peripherals and the adapter that learns them through the
//! mapper.

pub mod catalog;
pub mod responses;

use crate::keys::{hash_str, mic, mix};
use crate::mapper::{
    confirm_value, session_key, Mapper, Procedure, EMPTY, SCAN_REQ, TERMINATE_IND,
};
use crate::mealy::{MealyMachine, Symbol};
use crate::packet::ConcretePacket;
use crate::sul::Sul;

pub use catalog::{
    abstract_machine, behavior, entry, full_connection_machine, manifest, reference_machine,
    CatalogEntry, Quirk, SocId, BEHAVIOR_INPUTS, FATIGUE_THRESHOLD,
};

use catalog::{cc2640r2_fatigue_states, CC2650_AWAITING_START};
use responses::{core_packets, filler_range, FAILED, FEATURE_RSP, NONE, PAIRING_RSP, SM_RANDOM};

/// Link-layer slots a response is delayed by.
pub fn latency(soc: SocId) -> usize {
    match soc {
        SocId::Nrf52832 => 12,
        _ => 1,
    }
}

fn input_of(kind: &str) -> Option<&'static str> {
    Some(match kind {
        "BTLE_SCAN_REQ" => "scan_req",
        "BTLE_CONNECT_REQ" => "connection_req",
        "LL_LENGTH_REQ" => "length_req",
        "LL_LENGTH_RSP" => "length_rsp",
        "LL_FEATURE_REQ" => "feature_req",
        "LL_FEATURE_RSP" => "feature_rsp",
        "LL_VERSION_IND" => "version_req",
        "ATT_Exchange_MTU_Request" => "mtu_req",
        "SM_Pairing_Request" => "legacy_pairing_req",
        "SM_Confirm" => "confirm",
        "SM_Random" => "random",
        "LL_ENC_REQ" => "encryption_req",
        "LL_START_ENC_RSP" => "start_encryption_rsp",
        "LL_TERMINATE_IND" => "terminate_ind",
        "LL_PAUSE_ENC_REQ" => "pause_encryption_req",
        _ => return None,
    })
}

/// A simulated SoC reacting to concrete packets.
#[derive(Debug, Clone)]
pub struct Peripheral {
    soc: SocId,
    procedure: Procedure,
    behavior: MealyMachine,
    quirks: Vec<Quirk>,
    latency: usize,
    state: usize,
    tx_count: u64,
    encrypted: bool,
    session_key: Option<u64>,
    central_key_part: Option<u64>,
    central_confirm: Option<u64>,
    pairings: u32,
    crash_armed: bool,
    crashed: bool,
}

impl Peripheral {
    pub fn new(soc: SocId, procedure: Procedure) -> Result<Self, crate::error::CatalogError> {
        let e = entry(soc, procedure)?;
        Ok(Peripheral {
            soc,
            procedure,
            behavior: behavior(soc, procedure)?,
            quirks: e.quirks.into_iter().filter(|q| q.on_by_default()).collect(),
            latency: latency(soc),
            state: 0,
            tx_count: 0,
            encrypted: false,
            session_key: None,
            central_key_part: None,
            central_confirm: None,
            pairings: 0,
            crash_armed: false,
            crashed: false,
        })
    }

    pub fn soc(&self) -> SocId {
        self.soc
    }

    pub fn quirks(&self) -> &[Quirk] {
        &self.quirks
    }

    /// Replaces the active quirks. Quirks built into the behaviour machine
    /// itself are unaffected.
    pub fn set_quirks(&mut self, quirks: Vec<Quirk>) {
        self.quirks = quirks;
    }

    pub fn procedure(&self) -> Procedure {
        self.procedure
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn pairings(&self) -> u32 {
        self.pairings
    }

    pub fn encrypted(&self) -> bool {
        self.encrypted
    }

    fn has(&self, q: Quirk) -> bool {
        self.quirks.contains(&q)
    }

    fn seed(&self) -> u64 {
        hash_str(self.soc.name())
    }

    pub fn pairing_rsp_value(&self) -> u64 {
        self.seed()
    }

    pub fn random_value(&self) -> u64 {
        mix(self.seed(), 7)
    }

    fn key_part(&self) -> u64 {
        mix(self.seed(), 11)
    }

    fn iv(&self) -> u64 {
        mix(self.seed(), 13)
    }

    /// Power cycle: back to fresh advertising with all quirk state cleared.
    pub fn hard_reset(&mut self) {
        self.state = 0;
        self.tx_count = 0;
        self.pairings = 0;
        self.crashed = false;
        self.crash_armed = false;
        self.drop_link();
    }

    fn drop_link(&mut self) {
        self.encrypted = false;
        self.session_key = None;
        self.central_key_part = None;
        self.central_confirm = None;
    }

    /// Responses with their arrival slot.
    pub fn transmit_timed(&mut self, request: &ConcretePacket) -> Vec<(usize, ConcretePacket)> {
        if self.crashed {
            return Vec::new();
        }
        let Some(input) = input_of(request.kind()) else {
            return Vec::new();
        };
        if self.encrypted && request.has_layer("BTLE_DATA") {
            let ok = self
                .session_key
                .is_some_and(|k| request.mic == Some(mic(k, &request.layers)));
            if !ok {
                return Vec::new();
            }
        }
        let (target, key) = self
            .behavior
            .step(self.state, input)
            .expect("requests map to behaviour inputs");
        let mut key = key.to_string();
        let mut target = target;
        match input {
            "confirm" => self.central_confirm = request.field("confirm"),
            "encryption_req" => self.central_key_part = request.field("skd_m"),
            _ => {}
        }
        if key == SM_RANDOM {
            let expected = confirm_value(
                request.field("random").unwrap_or(0),
                self.pairing_rsp_value(),
            );
            if self.central_confirm != Some(expected) {
                key = FAILED.to_string();
                target = self.state;
            }
        }
        if self.has(Quirk::PairingFatigue) && input == "feature_req" && key == FEATURE_RSP {
            key = self.fatigued(target, key);
        }
        if self.has(Quirk::CrashOnBadEnc) {
            if input == "pause_encryption_req" && self.state == CC2650_AWAITING_START {
                self.crash_armed = true;
            } else if input == TERMINATE_IND && self.crash_armed {
                self.crashed = true;
            }
        }
        if key == PAIRING_RSP {
            self.pairings = self.pairings.saturating_add(1);
        }
        if matches!(input, "scan_req" | "connection_req" | "terminate_ind") {
            self.drop_link();
        }
        self.state = target;
        let out = self.expand(&key);
        self.tx_count += 1;
        out
    }

    fn fatigued(&self, target: usize, key: String) -> String {
        if self.pairings < FATIGUE_THRESHOLD || !cc2640r2_fatigue_states().contains(&target) {
            return key;
        }
        if (self.pairings / FATIGUE_THRESHOLD) % 2 == 1 {
            responses::DATA.to_string()
        } else {
            NONE.to_string()
        }
    }

    fn expand(&mut self, key: &str) -> Vec<(usize, ConcretePacket)> {
        if key == NONE {
            return Vec::new();
        }
        let h = mix(self.seed(), mix(self.tx_count, hash_str(key)));
        let mut packets = Vec::new();
        let mut starts_encryption = false;
        for p in core_packets(key) {
            let p = match p.kind() {
                "SM_Pairing_Response" => p.with_field("pairing_rsp", self.pairing_rsp_value()),
                "SM_Random" => p.with_field("random", self.random_value()),
                "SM_Confirm" => {
                    let v = confirm_value(self.random_value(), self.pairing_rsp_value());
                    p.with_field("confirm", v)
                }
                "LL_ENC_RSP" => {
                    let m = self.central_key_part.unwrap_or(0);
                    self.session_key = Some(session_key(m, self.key_part()));
                    p.with_field("skd_s", self.key_part())
                        .with_field("iv_s", self.iv())
                }
                "LL_START_ENC_REQ" => {
                    starts_encryption = true;
                    p
                }
                _ => p,
            };
            packets.push(p);
        }
        if self.encrypted {
            let k = self.session_key.unwrap_or(0);
            for p in packets.iter_mut() {
                if p.has_layer("BTLE_DATA") && p.is_convincing() {
                    p.mic = Some(mic(k, &p.layers));
                }
            }
        }
        if starts_encryption && self.session_key.is_some() {
            self.encrypted = true;
        }
        let (lo, hi) = filler_range(key);
        let n_fill = lo + (h % (hi - lo + 1) as u64) as usize;
        packets.extend((0..n_fill).map(|_| ConcretePacket::filler()));
        let mut order: Vec<(u64, ConcretePacket)> = packets
            .into_iter()
            .enumerate()
            .map(|(i, p)| (mix(h, i as u64), p))
            .collect();
        order.sort_by_key(|(k, _)| *k);
        if key == responses::ACK {
            return order.into_iter().map(|(_, p)| (0, p)).collect();
        }
        order
            .into_iter()
            .enumerate()
            .map(|(i, (_, p))| (self.latency + i, p))
            .collect()
    }

    pub fn transmit(&mut self, request: &ConcretePacket) -> Vec<ConcretePacket> {
        self.transmit_timed(request)
            .into_iter()
            .map(|(_, p)| p)
            .collect()
    }
}

/// Minimum and maximum number of slots the central listens for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ListenWindow {
    pub n_rsp_min: usize,
    pub n_rsp_max: usize,
}

impl ListenWindow {
    pub fn for_soc(soc: SocId) -> Self {
        match soc {
            SocId::Nrf52832 => ListenWindow {
                n_rsp_min: 20,
                n_rsp_max: 30,
            },
            _ => ListenWindow {
                n_rsp_min: 10,
                n_rsp_max: 20,
            },
        }
    }

    /// Window actually used for one input.
    pub fn for_input(self, input: &str) -> Self {
        match input {
            SCAN_REQ => ListenWindow {
                n_rsp_min: 5,
                n_rsp_max: 50,
            },
            TERMINATE_IND => ListenWindow {
                n_rsp_min: 1,
                n_rsp_max: 1,
            },
            _ => self,
        }
    }

    /// Slot at which listening stops for the given arrivals.
    pub fn stop(self, arrivals: &[(usize, ConcretePacket)]) -> usize {
        let first_convincing = arrivals
            .iter()
            .filter(|(_, p)| p.is_convincing() || p.is_scan_response())
            .map(|(t, _)| *t)
            .min();
        match first_convincing {
            Some(t) if t <= self.n_rsp_max => t.max(self.n_rsp_min),
            _ => self.n_rsp_max,
        }
    }
}

/// A peripheral seen through the mapper: abstract inputs in, abstract
/// outputs out.
#[derive(Debug, Clone)]
pub struct BleSul {
    peripheral: Peripheral,
    mapper: Mapper,
    window: ListenWindow,
    pending: Vec<ConcretePacket>,
}

impl BleSul {
    pub fn new(soc: SocId, procedure: Procedure) -> Result<Self, crate::error::CatalogError> {
        Ok(BleSul {
            peripheral: Peripheral::new(soc, procedure)?,
            mapper: Mapper::new(),
            window: ListenWindow::for_soc(soc),
            pending: Vec::new(),
        })
    }

    /// `true` enables every catalogued quirk, `false` none.
    pub fn with_quirks(mut self, enabled: bool) -> Self {
        let soc = self.peripheral.soc();
        let all = entry(soc, self.peripheral.procedure())
            .map(|e| e.quirks)
            .unwrap_or_default();
        self.peripheral
            .set_quirks(if enabled { all } else { Vec::new() });
        self
    }

    pub fn with_window(mut self, window: ListenWindow) -> Self {
        self.window = window;
        self
    }

    pub fn peripheral(&self) -> &Peripheral {
        &self.peripheral
    }

    pub fn peripheral_mut(&mut self) -> &mut Peripheral {
        &mut self.peripheral
    }

    pub fn mapper(&self) -> &Mapper {
        &self.mapper
    }
}

impl Sul for BleSul {
    fn step(&mut self, input: &str) -> Symbol {
        let Ok(request) = self.mapper.concretize(input) else {
            return EMPTY.to_string();
        };
        let arrivals = self.peripheral.transmit_timed(&request);
        let stop = self.window.for_input(input).stop(&arrivals);
        let mut heard = std::mem::take(&mut self.pending);
        for (t, p) in arrivals {
            if t <= stop {
                heard.push(p);
            } else {
                self.pending.push(p);
            }
        }
        self.mapper.abstract_response(&heard)
    }

    fn begin_query(&mut self) {
        self.pending.clear();
    }

    fn end_query(&mut self) {
        self.mapper.reset();
    }

    fn encryption_enabled(&self) -> bool {
        self.mapper.encryption_enabled()
    }

    fn hard_reset(&mut self) -> bool {
        self.peripheral.hard_reset();
        self.mapper.reset();
        self.pending.clear();
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{merge_layers, ADV};

    fn run(sul: &mut BleSul, seq: &[&str]) -> Vec<Symbol> {
        sul.begin_query();
        let out = seq.iter().map(|i| sul.step(i)).collect();
        sul.end_query();
        out
    }

    #[test]
    fn ble_sul_matches_reference_on_access_sequences() {
        for e in manifest() {
            let reference = reference_machine(e.soc_id, e.procedure).unwrap();
            let mut sul = BleSul::new(e.soc_id, e.procedure).unwrap();
            for access in reference.access_sequences() {
                for i in reference.inputs() {
                    let mut q: Vec<&str> = e.pre.iter().map(String::as_str).collect();
                    let body: Vec<&str> = access
                        .iter()
                        .map(String::as_str)
                        .chain([i.as_str()])
                        .collect();
                    q.extend(&body);
                    q.push(TERMINATE_IND);
                    let out = run(&mut sul, &q);
                    let expected = reference.run(&body).unwrap();
                    assert_eq!(
                        &out[e.pre.len()..q.len() - 1],
                        &expected[..],
                        "{} {} {:?}",
                        e.soc_id,
                        e.procedure,
                        body
                    );
                }
            }
        }
    }

    #[test]
    fn scan_yields_adv() {
        let mut sul = BleSul::new(SocId::Nrf52832, Procedure::Connection).unwrap();
        assert_eq!(run(&mut sul, &["scan_req"]), [ADV]);
    }

    #[test]
    fn late_packets_surface_on_the_next_step() {
        let tight = ListenWindow {
            n_rsp_min: 1,
            n_rsp_max: 2,
        };
        let mut sul = BleSul::new(SocId::Nrf52832, Procedure::Connection)
            .unwrap()
            .with_window(tight);
        let out = run(
            &mut sul,
            &["scan_req", "connection_req", "version_req", "mtu_req"],
        );
        assert_eq!(out[0], ADV);
        assert_eq!(out[1], EMPTY);
        assert!(out[2].contains("SM_Hdr"), "{}", out[2]);
    }

    #[test]
    fn bad_mic_gets_no_answer() {
        let mut p = Peripheral::new(SocId::Cyw43455, Procedure::Pairing).unwrap();
        let mut m = Mapper::new();
        for s in [
            "scan_req",
            "connection_req",
            "legacy_pairing_req",
            "confirm",
            "random",
            "encryption_req",
        ] {
            let req = m.concretize(s).unwrap();
            let rsp = p.transmit(&req);
            m.abstract_response(&rsp);
        }
        assert!(p.encrypted());
        let mut req = m.concretize("start_encryption_rsp").unwrap();
        req.mic = Some(req.mic.unwrap() ^ 1);
        assert!(p.transmit(&req).is_empty());
        let good = m.concretize("start_encryption_rsp").unwrap();
        let rsp = p.transmit(&good);
        assert!(rsp.iter().any(|x| x.has_layer("SM_Signing_Information")));
        assert_ne!(m.abstract_response(&rsp), crate::mapper::DECRYPT_ERROR);
    }

    #[test]
    fn crash_after_pause_in_awaiting_start() {
        let mut sul = BleSul::new(SocId::Cc2650, Procedure::Pairing).unwrap();
        run(
            &mut sul,
            &[
                "scan_req",
                "connection_req",
                "legacy_pairing_req",
                "confirm",
                "random",
                "encryption_req",
                "pause_encryption_req",
                "terminate_ind",
            ],
        );
        assert!(sul.peripheral().is_crashed());
        assert_eq!(run(&mut sul, &["scan_req"]), [EMPTY]);
        assert!(sul.hard_reset());
        assert_eq!(run(&mut sul, &["scan_req"]), [ADV]);
    }

    #[test]
    fn fatigue_changes_feature_response() {
        let mut sul = BleSul::new(SocId::Cc2640r2, Procedure::Connection)
            .unwrap()
            .with_quirks(true);
        let q = [
            "scan_req",
            "connection_req",
            "legacy_pairing_req",
            "length_req",
            "feature_req",
            "terminate_ind",
        ];
        let fresh = run(&mut sul, &q);
        assert_eq!(crate::mapper::primary_label(&fresh[4]), "LL_FEATURE_RSP");
        for _ in 0..FATIGUE_THRESHOLD {
            run(&mut sul, &q);
        }
        let tired = run(&mut sul, &q);
        assert_eq!(tired[4], merge_layers(&[ConcretePacket::filler()]));
    }

    #[test]
    fn responses_stay_within_seven_packets() {
        let mut p = Peripheral::new(SocId::Cc2652r1, Procedure::Connection).unwrap();
        let m = Mapper::new();
        let mut m = m;
        for s in ["scan_req", "connection_req", "feature_rsp"] {
            let rsp = p.transmit(&m.concretize(s).unwrap());
            assert!(rsp.len() <= 7);
            if s == "feature_rsp" {
                assert_eq!(rsp.len(), 7);
            }
        }
    }
}
