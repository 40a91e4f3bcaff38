//! Translation between abstract learning symbols and concrete BLE packets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{CatalogError, MapperError};
use crate::keys::{mic, mix};
use crate::mealy::Symbol;
use crate::packet::ConcretePacket;

pub const EMPTY: &str = "EMPTY";
pub const ADV: &str = "ADV";
pub const DECRYPT_ERROR: &str = "DECRYPT_ERROR";

pub const SCAN_REQ: &str = "scan_req";
pub const CONNECTION_REQ: &str = "connection_req";
pub const TERMINATE_IND: &str = "terminate_ind";
pub const PAUSE_ENCRYPTION_REQ: &str = "pause_encryption_req";

pub const CONNECTION_INPUTS: [&str; 9] = [
    "scan_req",
    "connection_req",
    "length_req",
    "length_rsp",
    "feature_req",
    "feature_rsp",
    "version_req",
    "mtu_req",
    "legacy_pairing_req",
];

pub const PAIRING_INPUTS: [&str; 5] = [
    "legacy_pairing_req",
    "confirm",
    "random",
    "encryption_req",
    "start_encryption_rsp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    Connection,
    Pairing,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::Connection => "connection",
            Procedure::Pairing => "pairing",
        })
    }
}

impl FromStr for Procedure {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "connection" => Ok(Procedure::Connection),
            "pairing" => Ok(Procedure::Pairing),
            _ => Err(CatalogError::UnknownProcedure(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractAlphabet {
    pub procedure: Procedure,
    pub inputs: Vec<Symbol>,
}

impl AbstractAlphabet {
    pub fn connection() -> Self {
        AbstractAlphabet {
            procedure: Procedure::Connection,
            inputs: CONNECTION_INPUTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn pairing() -> Self {
        AbstractAlphabet {
            procedure: Procedure::Pairing,
            inputs: PAIRING_INPUTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The connection alphabet without the two symbols that (re)start a connection.
    pub fn post_connection() -> Self {
        AbstractAlphabet {
            procedure: Procedure::Connection,
            inputs: CONNECTION_INPUTS[2..]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn for_procedure(p: Procedure) -> Self {
        match p {
            Procedure::Connection => Self::connection(),
            Procedure::Pairing => Self::pairing(),
        }
    }

    pub fn without(&self, symbol: &str) -> Self {
        AbstractAlphabet {
            procedure: self.procedure,
            inputs: self
                .inputs
                .iter()
                .filter(|s| *s != symbol)
                .cloned()
                .collect(),
        }
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.inputs.iter().any(|s| s == symbol)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Constants {
    pub version: String,
    pub fields: BTreeMap<String, u64>,
}

impl Constants {
    pub fn get(&self, name: &str) -> u64 {
        *self
            .fields
            .get(name)
            .unwrap_or_else(|| panic!("constant `{name}` missing from the preset table"))
    }
}

pub fn constants() -> &'static Constants {
    static TABLE: OnceLock<Constants> = OnceLock::new();
    TABLE.get_or_init(|| {
        serde_json::from_str(include_str!("../data/constants.json"))
            .expect("embedded constants table is valid JSON")
    })
}

/// Digest of the preset pairing parameters that enter the confirm value.
pub fn pairing_params_digest() -> u64 {
    let c = constants();
    [
        "io_capability",
        "oob_flag",
        "auth_req",
        "max_key_size",
        "initiator_key_dist",
        "responder_key_dist",
    ]
    .iter()
    .fold(0, |acc, k| mix(acc, c.get(k)))
}

/// `confirm = mix(random, mix(params, pairing_response))`.
pub fn confirm_value(random: u64, pairing_rsp: u64) -> u64 {
    mix(random, mix(pairing_params_digest(), pairing_rsp))
}

pub fn session_key(central_part: u64, peripheral_part: u64) -> u64 {
    mix(central_part, peripheral_part)
}

const LL: &str = "BTLE/BTLE_DATA/BTLE_CTRL/";
const SM: &str = "BTLE/BTLE_DATA/L2CAP_Hdr/SM_Hdr/";
const ATT: &str = "BTLE/BTLE_DATA/L2CAP_Hdr/ATT_Hdr/";

/// Layer stack and preset fields of every request the central can send.
pub fn request_template(symbol: &str) -> Option<ConcretePacket> {
    let c = constants();
    let with = |stack: String, names: &[&str]| {
        names.iter().fold(ConcretePacket::parse(&stack), |p, n| {
            p.with_field(n, c.get(n))
        })
    };
    Some(match symbol {
        "scan_req" => ConcretePacket::parse("BTLE/BTLE_ADV/BTLE_SCAN_REQ"),
        "connection_req" => with(
            "BTLE/BTLE_ADV/BTLE_CONNECT_REQ".into(),
            &[
                "access_address",
                "crc_init",
                "win_size",
                "win_offset",
                "interval",
                "latency",
                "timeout",
                "channel_map",
                "hop",
            ],
        ),
        "length_req" => with(
            format!("{LL}LL_LENGTH_REQ"),
            &["max_tx_bytes", "max_rx_bytes", "max_tx_time", "max_rx_time"],
        ),
        "length_rsp" => with(
            format!("{LL}LL_LENGTH_RSP"),
            &["max_tx_bytes", "max_rx_bytes", "max_tx_time", "max_rx_time"],
        ),
        "feature_req" => with(format!("{LL}LL_FEATURE_REQ"), &["feature_set"]),
        "feature_rsp" => with(format!("{LL}LL_FEATURE_RSP"), &["feature_set"]),
        "version_req" => with(
            format!("{LL}LL_VERSION_IND"),
            &["version_number", "company_id", "subversion"],
        ),
        "mtu_req" => with(format!("{ATT}ATT_Exchange_MTU_Request"), &["att_mtu"]),
        "legacy_pairing_req" => with(
            format!("{SM}SM_Pairing_Request"),
            &[
                "io_capability",
                "oob_flag",
                "auth_req",
                "max_key_size",
                "initiator_key_dist",
                "responder_key_dist",
            ],
        ),
        "confirm" => ConcretePacket::parse(&format!("{SM}SM_Confirm")),
        "random" => ConcretePacket::parse(&format!("{SM}SM_Random")),
        "encryption_req" => with(format!("{LL}LL_ENC_REQ"), &["rand", "ediv"]),
        "start_encryption_rsp" => ConcretePacket::parse(&format!("{LL}LL_START_ENC_RSP")),
        "terminate_ind" => with(format!("{LL}LL_TERMINATE_IND"), &["error_code"]),
        "pause_encryption_req" => ConcretePacket::parse(&format!("{LL}LL_PAUSE_ENC_REQ")),
        _ => return None,
    })
}

/// Key material and encryption status carried across one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapperState {
    pub remote_pairing_rsp: Option<u64>,
    pub remote_confirm: Option<u64>,
    pub remote_random: Option<u64>,
    pub local_key_part: Option<u64>,
    pub remote_key_part: Option<u64>,
    pub iv: Option<u64>,
    pub session_key: Option<u64>,
    pub encryption_enabled: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Mapper {
    state: MapperState,
}

impl Mapper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &MapperState {
        &self.state
    }

    pub fn encryption_enabled(&self) -> bool {
        self.state.encryption_enabled
    }

    pub fn reset(&mut self) {
        self.state = MapperState::default();
    }

    pub fn concretize(&mut self, symbol: &str) -> Result<ConcretePacket, MapperError> {
        let c = constants();
        let mut p =
            request_template(symbol).ok_or_else(|| MapperError::UnknownSymbol(symbol.into()))?;
        match symbol {
            "confirm" => {
                let pr = self.state.remote_pairing_rsp.unwrap_or(0);
                p = p.with_field("confirm", confirm_value(c.get("local_random"), pr));
            }
            "random" => p = p.with_field("random", c.get("local_random")),
            "encryption_req" => {
                let skd = c.get("local_key_part");
                self.state.local_key_part = Some(skd);
                p = p
                    .with_field("skd_m", skd)
                    .with_field("iv_m", c.get("local_iv"));
            }
            _ => {}
        }
        if self.state.encryption_enabled && p.has_layer("BTLE_DATA") {
            let key = self.state.session_key.unwrap_or(0);
            p.mic = Some(mic(key, &p.layers));
        }
        Ok(p)
    }

    fn learn_from(&mut self, p: &ConcretePacket) {
        let s = &mut self.state;
        if p.has_layer("SM_Pairing_Response") {
            s.remote_pairing_rsp = p.field("pairing_rsp");
        }
        if p.has_layer("SM_Confirm") {
            s.remote_confirm = p.field("confirm");
        }
        if p.has_layer("SM_Random") {
            s.remote_random = p.field("random");
        }
        if p.has_layer("LL_ENC_RSP") {
            s.remote_key_part = p.field("skd_s");
            s.iv = p.field("iv_s");
            if let (Some(m), Some(r)) = (s.local_key_part, s.remote_key_part) {
                s.session_key = Some(session_key(m, r));
            }
        }
        if p.has_layer("LL_START_ENC_REQ") {
            s.encryption_enabled = s.session_key.is_some();
        }
    }

    /// Maps a response multiset to one output symbol.
    pub fn abstract_response(&mut self, rsp: &[ConcretePacket]) -> Symbol {
        if rsp.is_empty() {
            return EMPTY.to_string();
        }
        if rsp.iter().any(ConcretePacket::is_scan_response) {
            return ADV.to_string();
        }
        let mut plain: Vec<&ConcretePacket> = rsp.iter().filter(|p| p.mic.is_none()).collect();
        plain.sort_by(|a, b| (&a.layers, &a.fields).cmp(&(&b.layers, &b.fields)));
        for p in &plain {
            self.learn_from(p);
        }
        let mut sealed: Vec<&ConcretePacket> = rsp.iter().filter(|p| p.mic.is_some()).collect();
        sealed.sort_by(|a, b| (&a.layers, &a.fields).cmp(&(&b.layers, &b.fields)));
        for p in &sealed {
            let ok = self.state.encryption_enabled
                && self
                    .state
                    .session_key
                    .is_some_and(|k| p.mic == Some(mic(k, &p.layers)));
            if !ok {
                return DECRYPT_ERROR.to_string();
            }
            self.learn_from(p);
        }
        merge_layers(rsp)
    }
}

/// All layer tags of the multiset, sorted, deduplicated and comma-joined.
pub fn merge_layers(rsp: &[ConcretePacket]) -> Symbol {
    if rsp.is_empty() {
        return EMPTY.to_string();
    }
    let tags: BTreeSet<&str> = rsp
        .iter()
        .flat_map(|p| p.layers.iter().map(String::as_str))
        .collect();
    tags.into_iter().collect::<Vec<_>>().join(",")
}

const FRAMING_TAGS: [&str; 5] = ["BTLE", "BTLE_DATA", "BTLE_CTRL", "L2CAP_Hdr", "ATT_Hdr"];

fn tag_label(tag: &str) -> &str {
    match tag {
        "SM_Pairing_Response" => "PAIRING_RSP",
        "SM_Failed" => "FAILED",
        "SM_Confirm" => "SM_CONFIRM",
        "SM_Random" => "SM_RANDOM",
        "SM_Hdr" => "SM_HDR",
        "ATT_Exchange_MTU_Request" => "ATT_MTU_REQ",
        "ATT_Exchange_MTU_Response" => "ATT_MTU_RSP",
        "ATT_Error_Response" => "MTU_ERR",
        "LL_ENC_RSP" => "ENC_RSP",
        "LL_START_ENC_REQ" => "START_REQ",
        "SM_Encryption_Information" => "ENC_INFO",
        "SM_Master_Identification" => "MASTER_ID",
        "SM_Identity_Information" => "ID_INFO",
        "SM_Identity_Address_Information" => "ID_ADDR_INFO",
        "SM_Signing_Information" => "SIGNING_INFO",
        other => other,
    }
}

/// Readable abbreviation of a merged output: framing layers dropped and the
/// remaining tags renamed, comma-joined.
pub fn short_label(merged: &str) -> String {
    if matches!(merged, EMPTY | ADV | DECRYPT_ERROR) {
        return merged.to_string();
    }
    let tags: Vec<&str> = merged.split(',').collect();
    let has_sm = tags.iter().any(|t| t.starts_with("SM_") && *t != "SM_Hdr");
    let mut out: Vec<&str> = tags
        .iter()
        .filter(|t| !FRAMING_TAGS.contains(t) && !(has_sm && **t == "SM_Hdr"))
        .map(|t| tag_label(t))
        .collect();
    if out.is_empty() {
        return if tags.contains(&"BTLE_CTRL") {
            "CTRL"
        } else {
            "BTLE_DATA"
        }
        .to_string();
    }
    out.sort();
    out.dedup();
    out.join(",")
}

/// The single most significant label: link-layer tags first, then security
/// manager, then attribute protocol.
pub fn primary_label(merged: &str) -> String {
    let short = short_label(merged);
    let parts: Vec<&str> = short.split(',').collect();
    let rank = |l: &str| {
        if l.starts_with("LL_") {
            0
        } else if l.starts_with("ATT_") || l == "MTU_ERR" {
            2
        } else {
            1
        }
    };
    parts
        .iter()
        .min_by_key(|l| rank(l))
        .map(|s| s.to_string())
        .unwrap_or(short)
}
