//! Classic (libpcap) capture files over Ethernet, IPv4, TCP and UDP.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{
    assemble_flows, ClassId, FlowSet, PacketSnapshot, TransportProto, IPV4_MIN_HEADER, TCP_MIN_HEADER, UDP_HEADER,
};
use crate::error::{AcdcError, Result};

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETHERNET_HEADER_LEN: usize = 14;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;

#[derive(Clone, Copy)]
struct Layout {
    big_endian: bool,
    nanos: bool,
}

impl Layout {
    fn u32_at(self, buf: &[u8], at: usize) -> u32 {
        let b = [buf[at], buf[at + 1], buf[at + 2], buf[at + 3]];
        if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    }
}

/// Reads a pcap file and groups its IPv4 TCP/UDP packets into flows, all tagged with `label`.
///
/// The label name defaults to the file stem.
pub fn parse_pcap(path: impl AsRef<Path>, label: ClassId, max_packets_per_flow: usize) -> Result<FlowSet> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("class{label}"));
    parse_pcap_bytes(&bytes, label, &name, max_packets_per_flow)
}

pub fn parse_pcap_bytes(
    bytes: &[u8],
    label: ClassId,
    label_name: &str,
    max_packets_per_flow: usize,
) -> Result<FlowSet> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(AcdcError::Format(format!(
            "pcap global header needs {GLOBAL_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let layout = match u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) {
        MAGIC_MICROS => Layout { big_endian: false, nanos: false },
        MAGIC_NANOS => Layout { big_endian: false, nanos: true },
        m if m.swap_bytes() == MAGIC_MICROS => Layout { big_endian: true, nanos: false },
        m if m.swap_bytes() == MAGIC_NANOS => Layout { big_endian: true, nanos: true },
        m => return Err(AcdcError::Format(format!("unknown pcap magic {m:#010x}"))),
    };
    let linktype = layout.u32_at(bytes, 20);
    if linktype != LINKTYPE_ETHERNET {
        return Err(AcdcError::Format(format!("unsupported link type {linktype}, only Ethernet (1) is handled")));
    }

    let mut packets = Vec::new();
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < bytes.len() {
        if bytes.len() - offset < RECORD_HEADER_LEN {
            return Err(AcdcError::Parse {
                offset: offset as u64,
                message: format!("truncated record header ({} of {RECORD_HEADER_LEN} bytes)", bytes.len() - offset),
            });
        }
        let ts_sec = layout.u32_at(bytes, offset);
        let ts_frac = layout.u32_at(bytes, offset + 4);
        let incl_len = layout.u32_at(bytes, offset + 8) as usize;
        let data_start = offset + RECORD_HEADER_LEN;
        if bytes.len() - data_start < incl_len {
            return Err(AcdcError::Parse {
                offset: offset as u64,
                message: format!("record claims {incl_len} bytes but only {} remain", bytes.len() - data_start),
            });
        }
        let frac_scale = if layout.nanos { 1e-9 } else { 1e-6 };
        let timestamp = ts_sec as f64 + ts_frac as f64 * frac_scale;
        if let Some(p) = decode_frame(&bytes[data_start..data_start + incl_len], timestamp) {
            packets.push(p);
        }
        offset = data_start + incl_len;
    }

    let flows = assemble_flows(packets, label, max_packets_per_flow);
    Ok(FlowSet { flows, label_names: BTreeMap::from([(label, label_name.to_string())]) })
}

/// Extracts a snapshot from one Ethernet frame, or `None` when the frame is not
/// an unfragmented IPv4 TCP/UDP packet with complete headers.
fn decode_frame(frame: &[u8], timestamp: f64) -> Option<PacketSnapshot> {
    if frame.len() < ETHERNET_HEADER_LEN {
        return None;
    }
    let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let mut l3 = ETHERNET_HEADER_LEN;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < l3 + 4 {
            return None;
        }
        ethertype = u16::from_be_bytes([frame[16], frame[17]]);
        l3 += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return None;
    }
    let ip = &frame[l3..];
    if ip.len() < IPV4_MIN_HEADER || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = (ip[0] & 0x0f) as usize * 4;
    if ihl < IPV4_MIN_HEADER || ip.len() < ihl {
        return None;
    }
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
    if frag_offset != 0 {
        return None;
    }
    let transport = TransportProto::from_ip_number(ip[9])?;
    let l4 = &ip[ihl..];
    let thl = match transport {
        TransportProto::Tcp => {
            if l4.len() < TCP_MIN_HEADER {
                return None;
            }
            let doff = (l4[12] >> 4) as usize * 4;
            if doff < TCP_MIN_HEADER || l4.len() < doff {
                return None;
            }
            doff
        }
        TransportProto::Udp => {
            if l4.len() < UDP_HEADER {
                return None;
            }
            UDP_HEADER
        }
    };
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    // Zero total length appears with segmentation offload; fall back to the captured size.
    let ip_len = if total_len == 0 { ip.len() } else { total_len };
    let payload_len = ip_len.saturating_sub(ihl + thl) as u32;
    Some(PacketSnapshot {
        timestamp,
        ip_header: ip[..ihl].to_vec(),
        transport_header: l4[..thl].to_vec(),
        transport,
        payload_len,
    })
}

/// Serializes every packet of `set` as a little-endian microsecond pcap with
/// Ethernet framing. Payload bytes are written as zeros.
pub fn write_pcap_bytes(set: &FlowSet) -> Vec<u8> {
    let mut packets: Vec<&PacketSnapshot> = set.flows.iter().flat_map(|f| f.packets.iter()).collect();
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());

    for p in packets {
        let frame_len = ETHERNET_HEADER_LEN + p.ip_header.len() + p.transport_header.len() + p.payload_len as usize;
        let secs = p.timestamp.floor();
        let micros = ((p.timestamp - secs) * 1e6).round().min(999_999.0);
        out.extend_from_slice(&(secs as u32).to_le_bytes());
        out.extend_from_slice(&(micros as u32).to_le_bytes());
        out.extend_from_slice(&(frame_len as u32).to_le_bytes());
        out.extend_from_slice(&(frame_len as u32).to_le_bytes());
        out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 0, 0x02]);
        out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
        out.extend_from_slice(&p.ip_header);
        out.extend_from_slice(&p.transport_header);
        out.resize(out.len() + p.payload_len as usize, 0);
    }
    out
}

pub fn write_pcap(set: &FlowSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_pcap_bytes(set))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::testutil::tcp_packet;
    use crate::traffic::{FlowRecord, FlowSet};

    fn single_flow_set(n: usize) -> FlowSet {
        let packets: Vec<_> = (0..n).map(|i| tcp_packet(i as f64 * 0.01, i % 2 == 0, 64, 10)).collect();
        FlowSet {
            flows: vec![FlowRecord { key: packets[0].flow_key(), label: 0, packets }],
            label_names: BTreeMap::from([(0, "a".into())]),
        }
    }

    fn arp_record() -> Vec<u8> {
        let mut frame = vec![0xffu8; 6];
        frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        frame.extend_from_slice(&0x0806u16.to_be_bytes());
        // htype, ptype, hlen, plen, op, sha, spa, tha, tpa
        frame.extend_from_slice(&[0, 1, 8, 0, 6, 4, 0, 1]);
        frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01, 10, 0, 0, 1]);
        frame.extend_from_slice(&[0, 0, 0, 0, 0, 0, 10, 0, 0, 2]);
        let mut rec = Vec::new();
        rec.extend_from_slice(&5u32.to_le_bytes());
        rec.extend_from_slice(&0u32.to_le_bytes());
        rec.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        rec.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        rec.extend_from_slice(&frame);
        rec
    }

    #[test]
    fn six_packets_one_connection_keeps_four() {
        let bytes = write_pcap_bytes(&single_flow_set(6));
        let set = parse_pcap_bytes(&bytes, 0, "a", 4).unwrap();
        assert_eq!(set.flows.len(), 1);
        assert_eq!(set.flows[0].packets.len(), 4);
        assert_eq!(set.flows[0].packets[0].payload_len, 10);
    }

    #[test]
    fn arp_frame_is_skipped() {
        let mut bytes = write_pcap_bytes(&single_flow_set(3));
        bytes.extend_from_slice(&arp_record());
        let set = parse_pcap_bytes(&bytes, 0, "a", 4).unwrap();
        assert_eq!(set.flows.len(), 1);
        assert_eq!(set.flows[0].packets.len(), 3);
    }

    #[test]
    fn byte_swapped_header_is_accepted() {
        let mut bytes = write_pcap_bytes(&single_flow_set(2));
        // Rewrite the global header and the record headers as big-endian.
        let mut off = 0;
        for w in [0usize, 8, 12, 16, 20] {
            let v = u32::from_le_bytes(bytes[w..w + 4].try_into().unwrap());
            bytes[w..w + 4].copy_from_slice(&v.to_be_bytes());
        }
        for w in [4usize, 6] {
            let v = u16::from_le_bytes(bytes[w..w + 2].try_into().unwrap());
            bytes[w..w + 2].copy_from_slice(&v.to_be_bytes());
        }
        off += GLOBAL_HEADER_LEN;
        while off < bytes.len() {
            let incl = u32::from_le_bytes(bytes[off + 8..off + 12].try_into().unwrap()) as usize;
            for w in 0..4 {
                let at = off + 4 * w;
                let v = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                bytes[at..at + 4].copy_from_slice(&v.to_be_bytes());
            }
            off += RECORD_HEADER_LEN + incl;
        }
        let set = parse_pcap_bytes(&bytes, 0, "a", 4).unwrap();
        assert_eq!(set.flows[0].packets.len(), 2);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = write_pcap_bytes(&single_flow_set(1));
        bytes[0] = 0;
        assert!(matches!(parse_pcap_bytes(&bytes, 0, "a", 4), Err(AcdcError::Format(_))));
        assert!(matches!(parse_pcap_bytes(&bytes[..10], 0, "a", 4), Err(AcdcError::Format(_))));
    }

    #[test]
    fn truncated_record_names_offset() {
        let bytes = write_pcap_bytes(&single_flow_set(2));
        let cut = &bytes[..bytes.len() - 5];
        match parse_pcap_bytes(cut, 0, "a", 4) {
            Err(AcdcError::Parse { offset, .. }) => {
                let first_len = u32::from_le_bytes(bytes[32..36].try_into().unwrap()) as u64;
                assert_eq!(offset, (GLOBAL_HEADER_LEN + RECORD_HEADER_LEN) as u64 + first_len);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
