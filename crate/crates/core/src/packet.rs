use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A BLE packet reduced to its layer stack and a bag of scalar fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcretePacket {
    pub layers: Vec<String>,
    pub fields: BTreeMap<String, u64>,
    /// Integrity tag; present iff the packet travels encrypted.
    pub mic: Option<u64>,
}

pub const FRAMING: [&str; 2] = ["BTLE", "BTLE_DATA"];

impl ConcretePacket {
    /// Panics unless the stack is non-empty and starts with `BTLE`.
    pub fn new<S: AsRef<str>>(layers: &[S]) -> Self {
        assert!(
            layers.first().map(|l| l.as_ref()) == Some("BTLE"),
            "packets start with the BTLE layer"
        );
        ConcretePacket {
            layers: layers.iter().map(|l| l.as_ref().to_string()).collect(),
            fields: BTreeMap::new(),
            mic: None,
        }
    }

    /// Parses the `BTLE/BTLE_DATA/...` notation.
    pub fn parse(stack: &str) -> Self {
        let layers: Vec<&str> = stack.split('/').collect();
        Self::new(&layers)
    }

    /// An empty link-layer data PDU.
    pub fn filler() -> Self {
        Self::new(&FRAMING)
    }

    pub fn with_field(mut self, name: &str, value: u64) -> Self {
        self.fields.insert(name.to_string(), value);
        self
    }

    pub fn field(&self, name: &str) -> Option<u64> {
        self.fields.get(name).copied()
    }

    pub fn has_layer(&self, layer: &str) -> bool {
        self.layers.iter().any(|l| l == layer)
    }

    /// The innermost layer.
    pub fn kind(&self) -> &str {
        self.layers.last().map(String::as_str).unwrap_or("BTLE")
    }

    pub fn is_scan_response(&self) -> bool {
        self.has_layer("BTLE_SCAN_RSP") || self.has_layer("BTLE_ADV_IND")
    }

    /// Carries something beyond the link-layer framing.
    pub fn is_convincing(&self) -> bool {
        self.layers.iter().any(|l| !FRAMING.contains(&l.as_str()))
    }

    pub fn stack(&self) -> String {
        self.layers.join("/")
    }
}

impl fmt::Display for ConcretePacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.stack())?;
        if !self.fields.is_empty() {
            let parts: Vec<String> = self
                .fields
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}
