use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};

/// Header a field is listed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ipv4,
    Tcp,
    Udp,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Ipv4 => "ipv4",
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipv4" | "ip" => Some(Protocol::Ipv4),
            "tcp" => Some(Protocol::Tcp),
            "udp" => Some(Protocol::Udp),
            _ => None,
        }
    }
}

/// Where a field's bits live inside a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitLocus {
    /// Fixed bit offset in the IPv4 header.
    Ipv4(u32),
    Tcp(u32),
    Udp(u32),
    /// Fixed bit offset shared by TCP and UDP (ports).
    Transport(u32),
    /// IPv4 options region (bytes 20..IHL*4), zero padded.
    Ipv4Options,
    /// TCP options region (bytes 20..doff*4), zero padded.
    TcpOptions,
    /// Payload bytes; snapshots never retain them.
    Payload,
}

pub type FieldId = u16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSpec {
    pub id: FieldId,
    pub protocol: Protocol,
    pub name: &'static str,
    pub bits: u32,
    pub locus: BitLocus,
    pub preliminary_eligible: bool,
    pub heuristic_selected: bool,
}

impl FieldSpec {
    /// Canonical display name, e.g. `ipv4-ttl`.
    pub fn qualified_name(&self) -> String {
        format!("{}-{}", self.protocol.as_str(), self.name)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.protocol.as_str(), self.name)
    }
}

/// The 37 header fields considered for feature exploration, in table order.
///
/// Ids follow row order, so sorting a subset by id yields the canonical
/// encoding layout.
#[derive(Debug)]
pub struct FieldRegistry {
    fields: Vec<FieldSpec>,
}

macro_rules! field {
    ($proto:ident, $name:literal, $bits:expr, $locus:expr, $pre:literal, $heur:literal) => {
        (Protocol::$proto, $name, $bits, $locus, $pre, $heur)
    };
}

impl FieldRegistry {
    fn build() -> Self {
        use BitLocus::*;
        let rows = [
            field!(Ipv4, "ttl", 8, Ipv4(64), true, true),
            field!(Tcp, "opt", 320, TcpOptions, true, true),
            field!(Ipv4, "dfbit", 1, Ipv4(49), true, true),
            field!(Tcp, "doff", 4, Tcp(96), true, true),
            field!(Tcp, "wsize", 16, Tcp(112), true, true),
            field!(Tcp, "fin", 1, Tcp(111), true, true),
            field!(Ipv4, "cksum", 16, Ipv4(80), true, true),
            field!(Tcp, "ackf", 1, Tcp(107), true, true),
            field!(Udp, "len", 16, Udp(32), true, true),
            field!(Tcp, "cksum", 16, Tcp(128), true, true),
            field!(Udp, "cksum", 16, Udp(48), true, true),
            // Listed at 8 bits in the selection table; the leading byte of total length.
            field!(Ipv4, "tl", 8, Ipv4(16), true, true),
            field!(Ipv4, "tos", 8, Ipv4(8), true, true),
            field!(Ipv4, "proto", 8, Ipv4(72), true, true),
            field!(Tcp, "seq", 32, Tcp(32), true, true),
            field!(Tcp, "psh", 1, Tcp(108), true, true),
            field!(Tcp, "ackn", 32, Tcp(64), true, true),
            field!(Tcp, "rst", 1, Tcp(109), true, true),
            field!(Tcp, "res", 3, Tcp(100), true, false),
            field!(Ipv4, "foff", 13, Ipv4(51), true, false),
            field!(Tcp, "urp", 16, Tcp(144), true, false),
            field!(Tcp, "urg", 1, Tcp(106), true, false),
            field!(Tcp, "syn", 1, Tcp(110), true, false),
            field!(Tcp, "ns", 1, Tcp(103), true, false),
            field!(Ipv4, "hl", 4, Ipv4(4), true, false),
            field!(Tcp, "ece", 1, Tcp(105), true, false),
            field!(Ipv4, "mfbit", 1, Ipv4(50), true, false),
            field!(Ipv4, "opt", 320, Ipv4Options, true, false),
            field!(Ipv4, "rbit", 1, Ipv4(48), true, false),
            field!(Tcp, "cwr", 1, Tcp(104), true, false),
            field!(Ipv4, "ver", 4, Ipv4(0), true, false),
            field!(Ipv4, "id", 16, Ipv4(32), true, false),
            field!(Ipv4, "sport", 16, Transport(0), false, false),
            field!(Ipv4, "dport", 16, Transport(16), false, false),
            field!(Ipv4, "sip", 32, Ipv4(96), false, false),
            field!(Ipv4, "dip", 32, Ipv4(128), false, false),
            field!(Tcp, "payload", 480, Payload, false, false),
        ];
        let fields = rows
            .into_iter()
            .enumerate()
            .map(|(i, (protocol, name, bits, locus, pre, heur))| FieldSpec {
                id: i as FieldId,
                protocol,
                name,
                bits,
                locus,
                preliminary_eligible: pre,
                heuristic_selected: heur,
            })
            .collect();
        FieldRegistry { fields }
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn get(&self, id: FieldId) -> Option<&FieldSpec> {
        self.fields.get(id as usize)
    }

    pub fn spec(&self, id: FieldId) -> Result<&FieldSpec> {
        self.get(id).ok_or_else(|| AcdcError::Argument(format!("unknown field id {id}")))
    }

    pub fn lookup(&self, protocol: Protocol, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.protocol == protocol && f.name == name)
    }

    /// Resolves `ipv4-ttl`, `ipv4.ttl` or `ipv4_ttl`.
    pub fn by_name(&self, qualified: &str) -> Result<&FieldSpec> {
        let unknown = || AcdcError::Argument(format!("unknown field {qualified:?}"));
        let (proto, name) = qualified.trim().split_once(['-', '.', '_']).ok_or_else(unknown)?;
        let proto = Protocol::parse(proto).ok_or_else(unknown)?;
        self.lookup(proto, name).ok_or_else(unknown)
    }

    pub fn eligible_ids(&self) -> Vec<FieldId> {
        self.fields.iter().filter(|f| f.preliminary_eligible).map(|f| f.id).collect()
    }

    /// Registry dump with header, field, bits and both eligibility flags.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,header,field,bits,preliminary_eligible,heuristic_selected\n");
        for f in &self.fields {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.id,
                f.protocol.as_str(),
                f.name,
                f.bits,
                yes_no(f.preliminary_eligible),
                yes_no(f.heuristic_selected)
            ));
        }
        out
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Y"
    } else {
        "N"
    }
}

/// The process-wide immutable field registry.
pub fn field_registry() -> &'static FieldRegistry {
    static REGISTRY: OnceLock<FieldRegistry> = OnceLock::new();
    REGISTRY.get_or_init(FieldRegistry::build)
}
