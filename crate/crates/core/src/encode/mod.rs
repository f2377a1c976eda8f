//! Header field registry and ternary bit encoding of flows.
//!
//! A flow is encoded over its first `k` packets (default 3). For every packet,
//! each field of the subset contributes its bits most-significant first, in
//! field-id order. Bits are `0`/`1`; a field whose header is absent from the
//! packet (a TCP field on a UDP packet) and every field of a missing packet
//! encode as `-1`.

mod registry;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::traffic::{FlowRecord, PacketSnapshot, TransportProto};

pub use registry::{field_registry, BitLocus, FieldId, FieldRegistry, FieldSpec, Protocol};

/// Packets per flow that contribute to an encoding.
pub const ENCODED_PACKETS: usize = 3;

/// Bytes reserved for an options region.
const OPTIONS_BYTES: usize = 40;

/// Non-empty set of registry field ids in canonical (ascending id) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldId>", into = "Vec<FieldId>")]
pub struct FeatureSubset(Vec<FieldId>);

impl FeatureSubset {
    pub fn new(ids: impl IntoIterator<Item = FieldId>) -> Result<Self> {
        let mut ids: Vec<FieldId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(AcdcError::Argument("feature subset must not be empty".into()));
        }
        let registry = field_registry();
        for &id in &ids {
            registry.spec(id)?;
        }
        Ok(FeatureSubset(ids))
    }

    /// Parses `ipv4-dfbit&tcp-fin` style names (also accepts `,` separators).
    pub fn parse(text: &str) -> Result<Self> {
        let registry = field_registry();
        let ids = text
            .split(['&', ','])
            .filter(|s| !s.trim().is_empty())
            .map(|name| registry.by_name(name).map(|f| f.id))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids)
    }

    /// Every preliminary-eligible field.
    pub fn all_eligible() -> Self {
        FeatureSubset(field_registry().eligible_ids())
    }

    pub fn ids(&self) -> &[FieldId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: FieldId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn specs(&self) -> impl Iterator<Item = &'static FieldSpec> + '_ {
        let registry = field_registry();
        self.0.iter().map(move |&id| registry.get(id).expect("validated id"))
    }

    /// Encoded vector length over `k` packets.
    pub fn vector_len(&self, k: usize) -> usize {
        k * subset_bits(self) as usize
    }

    /// Column ranges of `field` in a `k`-packet encoding, one per packet.
    pub fn field_columns(&self, field: FieldId, k: usize) -> Result<Vec<Range<usize>>> {
        let mut offset = 0usize;
        let mut found = None;
        for spec in self.specs() {
            if spec.id == field {
                found = Some((offset, spec.bits as usize));
            }
            offset += spec.bits as usize;
        }
        let (start, width) =
            found.ok_or_else(|| AcdcError::Argument(format!("field {field} is not part of subset {self}")))?;
        Ok((0..k).map(|p| p * offset + start..p * offset + start + width).collect())
    }
}

impl TryFrom<Vec<FieldId>> for FeatureSubset {
    type Error = AcdcError;

    fn try_from(ids: Vec<FieldId>) -> Result<Self> {
        FeatureSubset::new(ids)
    }
}

impl From<FeatureSubset> for Vec<FieldId> {
    fn from(s: FeatureSubset) -> Self {
        s.0
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, spec) in self.specs().enumerate() {
            if i > 0 {
                f.write_str("&")?;
            }
            write!(f, "{spec}")?;
        }
        Ok(())
    }
}

/// Per-packet bit width of a subset.
pub fn subset_bits(subset: &FeatureSubset) -> u32 {
    subset.specs().map(|f| f.bits).sum()
}

/// Ternary encoding of one flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector(Vec<i8>);

impl FeatureVector {
    pub fn new(values: Vec<i8>) -> Self {
        FeatureVector(values)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

/// Row-major matrix of encoded flows sharing one subset layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<i8>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, data: Vec<i8>) -> Result<Self> {
        if n_cols == 0 || !data.len().is_multiple_of(n_cols) {
            return Err(AcdcError::Shape { expected: n_cols, actual: data.len() });
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn empty(n_cols: usize) -> Self {
        FeatureMatrix { n_cols, data: Vec::new() }
    }

    pub fn from_rows<'a>(n_cols: usize, rows: impl IntoIterator<Item = &'a [i8]>) -> Result<Self> {
        let mut data = Vec::new();
        for row in rows {
            if row.len() != n_cols {
                return Err(AcdcError::Shape { expected: n_cols, actual: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [i8] {
        &mut self.data
    }

    /// Allocated bytes backing the matrix.
    pub fn heap_bytes(&self) -> usize {
        self.data.capacity()
    }
}

/// Encodes the first `k_packets` packets of `flow` under `subset`.
pub fn encode_flow(flow: &FlowRecord, subset: &FeatureSubset, k_packets: usize) -> Result<FeatureVector> {
    let mut out = Vec::with_capacity(subset.vector_len(k_packets));
    encode_into(flow, subset, k_packets, &mut out)?;
    Ok(FeatureVector(out))
}

/// Encodes many flows into one matrix.
pub fn encode_flows<'a>(
    flows: impl IntoIterator<Item = &'a FlowRecord>,
    subset: &FeatureSubset,
    k_packets: usize,
) -> Result<FeatureMatrix> {
    let n_cols = subset.vector_len(k_packets);
    let mut data = Vec::new();
    for flow in flows {
        encode_into(flow, subset, k_packets, &mut data)?;
    }
    Ok(FeatureMatrix { n_cols, data })
}

fn encode_into(flow: &FlowRecord, subset: &FeatureSubset, k: usize, out: &mut Vec<i8>) -> Result<()> {
    for p in 0..k {
        let packet = flow.packets.get(p);
        for spec in subset.specs() {
            match packet {
                Some(pkt) => encode_field(pkt, spec, out)?,
                None => out.extend(std::iter::repeat_n(-1i8, spec.bits as usize)),
            }
        }
    }
    Ok(())
}

fn encode_field(pkt: &PacketSnapshot, spec: &FieldSpec, out: &mut Vec<i8>) -> Result<()> {
    let absent = |out: &mut Vec<i8>| out.extend(std::iter::repeat_n(-1i8, spec.bits as usize));
    match spec.locus {
        BitLocus::Ipv4(offset) => push_bits(&pkt.ip_header, offset, spec, out),
        BitLocus::Tcp(offset) if pkt.transport == TransportProto::Tcp => {
            push_bits(&pkt.transport_header, offset, spec, out)
        }
        BitLocus::Udp(offset) if pkt.transport == TransportProto::Udp => {
            push_bits(&pkt.transport_header, offset, spec, out)
        }
        BitLocus::Transport(offset) => push_bits(&pkt.transport_header, offset, spec, out),
        BitLocus::Ipv4Options => {
            let ihl = pkt.ip_header.first().map_or(0, |b| (b & 0x0f) as usize * 4);
            push_options(&pkt.ip_header, ihl, out);
            Ok(())
        }
        BitLocus::TcpOptions if pkt.transport == TransportProto::Tcp => {
            let doff = pkt.transport_header.get(12).map_or(0, |b| (b >> 4) as usize * 4);
            push_options(&pkt.transport_header, doff, out);
            Ok(())
        }
        BitLocus::Tcp(_) | BitLocus::Udp(_) | BitLocus::TcpOptions | BitLocus::Payload => {
            absent(out);
            Ok(())
        }
    }
}

fn push_bits(header: &[u8], offset: u32, spec: &FieldSpec, out: &mut Vec<i8>) -> Result<()> {
    let end = offset as usize + spec.bits as usize;
    if end > header.len() * 8 {
        return Err(AcdcError::Encode {
            field: spec.qualified_name(),
            message: format!("header has {} bits, field ends at bit {end}", header.len() * 8),
        });
    }
    for bit in offset as usize..end {
        out.push(((header[bit / 8] >> (7 - bit % 8)) & 1) as i8);
    }
    Ok(())
}

fn push_options(header: &[u8], header_len: usize, out: &mut Vec<i8>) {
    let end = header_len.min(header.len()).min(20 + OPTIONS_BYTES);
    let opts = header.get(20..end).unwrap_or(&[]);
    for &byte in opts {
        for shift in (0..8).rev() {
            out.push(((byte >> shift) & 1) as i8);
        }
    }
    out.extend(std::iter::repeat_n(0i8, (OPTIONS_BYTES - opts.len()) * 8));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::testutil::tcp_packet;
    use crate::traffic::FlowRecord;

    fn flow(packets: Vec<PacketSnapshot>) -> FlowRecord {
        FlowRecord { key: packets[0].flow_key(), label: 0, packets }
    }

    fn udp_packet() -> PacketSnapshot {
        let mut p = tcp_packet(0.0, true, 64, 4);
        p.transport = TransportProto::Udp;
        p.ip_header[9] = 17;
        p.transport_header.truncate(8);
        p
    }

    #[test]
    fn ttl_64_expands_msb_first() {
        let s = FeatureSubset::parse("ipv4-ttl").unwrap();
        let v = encode_flow(&flow(vec![tcp_packet(0.0, true, 0x40, 0)]), &s, 1).unwrap();
        assert_eq!(v.as_slice(), &[0, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn tcp_field_on_udp_packet_is_absent() {
        let s = FeatureSubset::parse("tcp-fin").unwrap();
        let v = encode_flow(&flow(vec![udp_packet()]), &s, 1).unwrap();
        assert_eq!(v.as_slice(), &[-1]);
    }

    #[test]
    fn short_flow_is_padded() {
        let s = FeatureSubset::parse("ipv4-dfbit").unwrap();
        let mut a = tcp_packet(0.0, true, 64, 0);
        a.ip_header[6] = 0x40;
        let b = tcp_packet(0.1, false, 64, 0);
        let v = encode_flow(&flow(vec![a, b]), &s, 3).unwrap();
        assert_eq!(v.as_slice(), &[1, 0, -1]);
    }

    #[test]
    fn subset_bit_sums() {
        let s = FeatureSubset::parse("ipv4-dfbit&tcp-fin&ipv4-ttl&tcp-ackf").unwrap();
        assert_eq!(subset_bits(&s), 11);
        assert_eq!(subset_bits(&FeatureSubset::parse("tcp-opt").unwrap()), 320);
        assert!(FeatureSubset::new([]).is_err());
        assert!(FeatureSubset::new([999]).is_err());
    }

    #[test]
    fn canonical_order_and_display() {
        let s = FeatureSubset::parse("tcp-ackf&ipv4-ttl&ipv4-dfbit&tcp-fin").unwrap();
        assert_eq!(s.to_string(), "ipv4-ttl&ipv4-dfbit&tcp-fin&tcp-ackf");
        assert_eq!(FeatureSubset::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn truncated_header_names_field() {
        let mut f = flow(vec![tcp_packet(0.0, true, 64, 0)]);
        f.packets[0].ip_header.truncate(8);
        let s = FeatureSubset::parse("ipv4-ttl").unwrap();
        match encode_flow(&f, &s, 1) {
            Err(AcdcError::Encode { field, .. }) => assert_eq!(field, "ipv4-ttl"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn options_are_zero_padded() {
        let mut p = tcp_packet(0.0, true, 64, 0);
        p.transport_header[12] = 6 << 4;
        p.transport_header.extend_from_slice(&[2, 4, 0x05, 0xb4]);
        let s = FeatureSubset::parse("tcp-opt").unwrap();
        let v = encode_flow(&flow(vec![p]), &s, 1).unwrap();
        assert_eq!(v.len(), 320);
        assert_eq!(&v.as_slice()[..8], &[0, 0, 0, 0, 0, 0, 1, 0]);
        assert!(v.as_slice()[32..].iter().all(|&b| b == 0));
    }

    #[test]
    fn field_columns_cover_each_packet() {
        let s = FeatureSubset::parse("ipv4-ttl&ipv4-dfbit").unwrap();
        let cols = s.field_columns(2, 3).unwrap();
        assert_eq!(cols, vec![8..9, 17..18, 26..27]);
        assert!(s.field_columns(5, 3).is_err());
    }
}
