//! Response templates. Behaviour machines emit template keys; the peripheral
//! expands a key into concrete packets.

use crate::mapper::{merge_layers, ADV as ADV_SYMBOL, EMPTY as EMPTY_SYMBOL};
use crate::mealy::Symbol;
use crate::packet::ConcretePacket;

pub const ADV: &str = "ADV";
pub const NONE: &str = "EMPTY";
pub const DATA: &str = "DATA";
pub const ACK: &str = "ACK";
pub const UNKNOWN: &str = "LL_UNKNOWN_RSP";
pub const FEATURE_RSP: &str = "LL_FEATURE_RSP";
pub const LENGTH_RSP: &str = "LL_LENGTH_RSP";
pub const LENGTH_REQ: &str = "LL_LENGTH_REQ";
pub const VERSION: &str = "LL_VERSION_IND";
pub const REJECT: &str = "LL_REJECT_IND";
pub const MTU_RSP: &str = "ATT_MTU_RSP";
pub const MTU_REQ: &str = "ATT_MTU_REQ";
pub const MTU_ERR: &str = "MTU_ERR";
pub const SM_HDR: &str = "SM_HDR";
pub const PAIRING_RSP: &str = "PAIRING_RSP";
pub const FAILED: &str = "FAILED";
pub const SM_CONFIRM: &str = "SM_CONFIRM";
pub const SM_RANDOM: &str = "SM_RANDOM";
pub const ENC_START: &str = "ENC_RSP+START_REQ";
pub const KEYS3: &str = "KEYS3";
pub const KEYS5: &str = "KEYS5";
pub const START_RSP: &str = "LL_START_ENC_RSP";
pub const CTRL: &str = "CTRL";
pub const BURST: &str = "LENGTH_REQ_BURST";

pub const ALL_KEYS: [&str; 24] = [
    ADV,
    NONE,
    DATA,
    ACK,
    UNKNOWN,
    FEATURE_RSP,
    LENGTH_RSP,
    LENGTH_REQ,
    VERSION,
    REJECT,
    MTU_RSP,
    MTU_REQ,
    MTU_ERR,
    SM_HDR,
    PAIRING_RSP,
    FAILED,
    SM_CONFIRM,
    SM_RANDOM,
    ENC_START,
    KEYS3,
    KEYS5,
    START_RSP,
    CTRL,
    BURST,
];

const LL: &str = "BTLE/BTLE_DATA/BTLE_CTRL/";
const SM: &str = "BTLE/BTLE_DATA/L2CAP_Hdr/SM_Hdr/";
const ATT: &str = "BTLE/BTLE_DATA/L2CAP_Hdr/ATT_Hdr/";

/// The non-filler packets of a template, without dynamic field values.
pub fn core_packets(key: &str) -> Vec<ConcretePacket> {
    let ll = |k: &str| ConcretePacket::parse(&format!("{LL}{k}"));
    let sm = |k: &str| ConcretePacket::parse(&format!("{SM}{k}"));
    let att = |k: &str| ConcretePacket::parse(&format!("{ATT}{k}"));
    match key {
        ADV => vec![ConcretePacket::parse("BTLE/BTLE_ADV/BTLE_SCAN_RSP")],
        NONE | DATA => vec![],
        ACK => vec![ConcretePacket::filler()],
        UNKNOWN | FEATURE_RSP | LENGTH_RSP | LENGTH_REQ | VERSION | REJECT | START_RSP => {
            vec![ll(key)]
        }
        CTRL => vec![ConcretePacket::parse("BTLE/BTLE_DATA/BTLE_CTRL")],
        MTU_RSP => vec![att("ATT_Exchange_MTU_Response")],
        MTU_REQ => vec![att("ATT_Exchange_MTU_Request")],
        MTU_ERR => vec![att("ATT_Error_Response")],
        SM_HDR => vec![ConcretePacket::parse("BTLE/BTLE_DATA/L2CAP_Hdr/SM_Hdr")],
        PAIRING_RSP => vec![sm("SM_Pairing_Response")],
        FAILED => vec![sm("SM_Failed")],
        SM_CONFIRM => vec![sm("SM_Confirm")],
        SM_RANDOM => vec![sm("SM_Random")],
        ENC_START => vec![ll("LL_ENC_RSP"), ll("LL_START_ENC_REQ")],
        KEYS3 => vec![
            sm("SM_Encryption_Information"),
            sm("SM_Master_Identification"),
            sm("SM_Signing_Information"),
        ],
        KEYS5 => vec![
            sm("SM_Encryption_Information"),
            sm("SM_Master_Identification"),
            sm("SM_Identity_Information"),
            sm("SM_Identity_Address_Information"),
            sm("SM_Signing_Information"),
        ],
        BURST => vec![ll("LL_LENGTH_REQ"), att("ATT_Exchange_MTU_Request")],
        other => panic!("unknown response template `{other}`"),
    }
}

/// Number of filler packets a template carries, as an inclusive range.
pub fn filler_range(key: &str) -> (usize, usize) {
    match key {
        ADV | NONE | ACK => (0, 0),
        BURST => (5, 5),
        DATA => (1, 3),
        _ => {
            let n = core_packets(key).len();
            (0, 7usize.saturating_sub(n).min(3))
        }
    }
}

/// The abstract output the mapper produces for a template.
pub fn abstract_output(key: &str) -> Symbol {
    match key {
        ADV => ADV_SYMBOL.to_string(),
        NONE => EMPTY_SYMBOL.to_string(),
        DATA => merge_layers(&[ConcretePacket::filler()]),
        _ => merge_layers(&core_packets(key)),
    }
}
