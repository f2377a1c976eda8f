//! Packet snapshots, bidirectional flows and labeled flow sets.
//!
//! Flows come from two sources: classic pcap captures ([`parse_pcap`]) and the
//! seeded synthetic generator ([`generate_synthetic`]). Both produce a
//! [`FlowSet`], which [`split_train_test`] partitions for training and
//! evaluation.

mod pcap;
mod split;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};

pub use pcap::{parse_pcap, parse_pcap_bytes, write_pcap, write_pcap_bytes};
pub use split::split_train_test;
pub use synth::{generate_synthetic, ClassProfile, GeneratorConfig, Range};

/// Application class identifier.
pub type ClassId = u32;

/// Default number of packets retained per flow.
pub const DEFAULT_PACKETS_PER_FLOW: usize = 4;

pub const IPV4_MIN_HEADER: usize = 20;
pub const TCP_MIN_HEADER: usize = 20;
pub const UDP_HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportProto {
    Tcp,
    Udp,
}

impl TransportProto {
    pub fn ip_number(self) -> u8 {
        match self {
            TransportProto::Tcp => 6,
            TransportProto::Udp => 17,
        }
    }

    pub fn from_ip_number(n: u8) -> Option<Self> {
        match n {
            6 => Some(TransportProto::Tcp),
            17 => Some(TransportProto::Udp),
            _ => None,
        }
    }
}

/// Raw headers of a single captured packet. Payload bytes are never retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSnapshot {
    pub timestamp: f64,
    #[serde(with = "hex_bytes")]
    pub ip_header: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub transport_header: Vec<u8>,
    pub transport: TransportProto,
    pub payload_len: u32,
}

impl PacketSnapshot {
    /// Checks the minimum header lengths for the declared transport.
    pub fn validate(&self) -> Result<()> {
        if self.ip_header.len() < IPV4_MIN_HEADER {
            return Err(AcdcError::Argument(format!(
                "ipv4 header is {} bytes, need at least {IPV4_MIN_HEADER}",
                self.ip_header.len()
            )));
        }
        let ok = match self.transport {
            TransportProto::Tcp => self.transport_header.len() >= TCP_MIN_HEADER,
            TransportProto::Udp => self.transport_header.len() == UDP_HEADER,
        };
        if !ok {
            return Err(AcdcError::Argument(format!(
                "{:?} header has invalid length {}",
                self.transport,
                self.transport_header.len()
            )));
        }
        Ok(())
    }

    pub fn src_ip(&self) -> Ipv4Addr {
        Ipv4Addr::new(self.ip_header[12], self.ip_header[13], self.ip_header[14], self.ip_header[15])
    }

    pub fn dst_ip(&self) -> Ipv4Addr {
        Ipv4Addr::new(self.ip_header[16], self.ip_header[17], self.ip_header[18], self.ip_header[19])
    }

    pub fn src_port(&self) -> u16 {
        u16::from_be_bytes([self.transport_header[0], self.transport_header[1]])
    }

    pub fn dst_port(&self) -> u16 {
        u16::from_be_bytes([self.transport_header[2], self.transport_header[3]])
    }

    /// Direction-independent key of the flow this packet belongs to.
    pub fn flow_key(&self) -> FlowKey {
        FlowKey::new((self.src_ip(), self.src_port()), (self.dst_ip(), self.dst_port()), self.transport)
    }
}

/// Bidirectional 5-tuple: the endpoint pair is stored in sorted order so both
/// directions of a conversation map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub lo_ip: Ipv4Addr,
    pub lo_port: u16,
    pub hi_ip: Ipv4Addr,
    pub hi_port: u16,
    pub proto: TransportProto,
}

impl FlowKey {
    pub fn new(a: (Ipv4Addr, u16), b: (Ipv4Addr, u16), proto: TransportProto) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        FlowKey { lo_ip: lo.0, lo_port: lo.1, hi_ip: hi.0, hi_port: hi.1, proto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub label: ClassId,
    pub packets: Vec<PacketSnapshot>,
}

impl FlowRecord {
    /// Payload sizes of packets carrying data, in arrival order.
    pub fn nonzero_payloads(&self) -> impl Iterator<Item = &PacketSnapshot> {
        self.packets.iter().filter(|p| p.payload_len > 0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSet {
    pub flows: Vec<FlowRecord>,
    pub label_names: BTreeMap<ClassId, String>,
}

impl FlowSet {
    pub fn new(flows: Vec<FlowRecord>, label_names: BTreeMap<ClassId, String>) -> Result<Self> {
        let set = FlowSet { flows, label_names };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassId> {
        self.flows.iter().map(|f| f.label).collect()
    }

    /// Number of flows per class id.
    pub fn label_histogram(&self) -> BTreeMap<ClassId, usize> {
        let mut hist = BTreeMap::new();
        for f in &self.flows {
            *hist.entry(f.label).or_insert(0) += 1;
        }
        hist
    }

    pub fn validate(&self) -> Result<()> {
        for (i, flow) in self.flows.iter().enumerate() {
            if !self.label_names.contains_key(&flow.label) {
                return Err(AcdcError::Argument(format!("flow {i} has label {} with no name", flow.label)));
            }
            if flow.packets.is_empty() {
                return Err(AcdcError::Argument(format!("flow {i} has no packets")));
            }
            if flow.packets.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
                return Err(AcdcError::Argument(format!("flow {i} packets are not time-ordered")));
            }
            for p in &flow.packets {
                p.validate()?;
                if p.flow_key() != flow.key {
                    return Err(AcdcError::Argument(format!("flow {i} holds a packet of another flow")));
                }
            }
        }
        Ok(())
    }

    /// Merges several sets, keeping their label names. Conflicting names for one id are an error.
    pub fn merge(sets: impl IntoIterator<Item = FlowSet>) -> Result<FlowSet> {
        let mut out = FlowSet::default();
        for set in sets {
            for (id, name) in set.label_names {
                match out.label_names.get(&id) {
                    Some(existing) if *existing != name => {
                        return Err(AcdcError::Config(format!("label {id} named both {existing:?} and {name:?}")))
                    }
                    _ => {
                        out.label_names.insert(id, name);
                    }
                }
            }
            out.flows.extend(set.flows);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FlowSet> {
        let file = File::open(path.as_ref())?;
        let set: FlowSet = serde_json::from_reader(BufReader::new(file))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Groups labeled packets into flows by bidirectional key.
///
/// Packets within a flow are sorted by timestamp (stable, so equal timestamps
/// keep input order) and truncated to `max_packets`. Flows are returned in
/// order of their first packet's timestamp, then key.
pub fn assemble_flows(
    packets: impl IntoIterator<Item = PacketSnapshot>,
    label: ClassId,
    max_packets: usize,
) -> Vec<FlowRecord> {
    let mut groups: HashMap<FlowKey, Vec<PacketSnapshot>> = HashMap::new();
    for p in packets {
        groups.entry(p.flow_key()).or_default().push(p);
    }
    let mut flows: Vec<FlowRecord> = groups
        .into_iter()
        .map(|(key, mut packets)| {
            packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            packets.truncate(max_packets.max(1));
            FlowRecord { key, label, packets }
        })
        .collect();
    flows.sort_by(|a, b| a.packets[0].timestamp.total_cmp(&b.packets[0].timestamp).then_with(|| a.key.cmp(&b.key)));
    flows
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Minimal TCP packet between two fixed endpoints.
    pub fn tcp_packet(ts: f64, forward: bool, ttl: u8, payload: u32) -> PacketSnapshot {
        let (src, dst, sport, dport) = if forward {
            ([10, 0, 0, 1], [10, 0, 0, 2], 40000u16, 443u16)
        } else {
            ([10, 0, 0, 2], [10, 0, 0, 1], 443u16, 40000u16)
        };
        let mut ip = vec![0u8; 20];
        ip[0] = 0x45;
        ip[8] = ttl;
        ip[9] = 6;
        ip[12..16].copy_from_slice(&src);
        ip[16..20].copy_from_slice(&dst);
        let mut tcp = vec![0u8; 20];
        tcp[0..2].copy_from_slice(&sport.to_be_bytes());
        tcp[2..4].copy_from_slice(&dport.to_be_bytes());
        tcp[12] = 5 << 4;
        PacketSnapshot {
            timestamp: ts,
            ip_header: ip,
            transport_header: tcp,
            transport: TransportProto::Tcp,
            payload_len: payload,
        }
    }
}
