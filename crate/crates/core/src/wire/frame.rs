//! Ethernet / IPv4 / IPv6 / ICMP / TCP header encoding and decoding.

use std::net::{Ipv4Addr, Ipv6Addr};

use crate::checksum::{self, accumulate, fold, pseudo_v4, pseudo_v6};

use super::WireError;

pub const ETHERTYPE_V4: u16 = 0x0800;
pub const ETHERTYPE_V6: u16 = 0x86DD;
pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_FRAGMENT: u8 = 44;
pub const PROTO_ICMPV6: u8 = 58;

pub const ICMP_ECHO_REPLY: u8 = 0;
pub const ICMP_ECHO_REQUEST: u8 = 8;
pub const ICMPV6_ECHO_REQUEST: u8 = 128;
pub const ICMPV6_ECHO_REPLY: u8 = 129;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

const ETH_LEN: usize = 14;
const V4_LEN: usize = 20;
const V6_LEN: usize = 40;
const FRAG_LEN: usize = 8;
pub const ICMP_LEN: usize = 8;
const TCP_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EthernetHeader {
    pub dst: [u8; 6],
    pub src: [u8; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Header {
    pub tos: u8,
    pub ident: u16,
    pub dont_fragment: bool,
    pub more_fragments: bool,
    /// In units of 8 bytes.
    pub fragment_offset: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv6Header {
    pub traffic_class: u8,
    pub flow_label: u32,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentHeader {
    /// In units of 8 bytes.
    pub offset: u16,
    pub more: bool,
    pub ident: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    V4(Ipv4Header),
    V6 { header: Ipv6Header, fragment: Option<FragmentHeader>, upper: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcmpHeader {
    pub icmp_type: u8,
    pub code: u8,
    /// `None` computes it over this frame's header and payload.
    pub checksum: Option<u16>,
    pub ident: u16,
    pub seq: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub mss: Option<u16>,
    pub checksum: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Icmp(IcmpHeader),
    Tcp(TcpHeader),
    /// A non-first fragment.
    None,
}

/// Every header field of one frame plus its payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBlueprint {
    pub eth: EthernetHeader,
    pub network: Network,
    pub transport: Transport,
    pub payload: Vec<u8>,
    pub send_index: u32,
}

impl Network {
    fn upper_protocol(&self) -> u8 {
        match self {
            Network::V4(h) => h.protocol,
            Network::V6 { upper, .. } => *upper,
        }
    }

    fn pseudo(&self, len: u32) -> u32 {
        match self {
            Network::V4(h) => pseudo_v4(h.src.octets(), h.dst.octets(), h.protocol, len as u16),
            Network::V6 { header, upper, .. } => pseudo_v6(header.src.octets(), header.dst.octets(), *upper, len),
        }
    }
}

impl FrameBlueprint {
    fn transport_bytes(&self) -> Vec<u8> {
        match &self.transport {
            Transport::None => Vec::new(),
            Transport::Icmp(h) => {
                let mut b = vec![h.icmp_type, h.code, 0, 0];
                b.extend_from_slice(&h.ident.to_be_bytes());
                b.extend_from_slice(&h.seq.to_be_bytes());
                let sum = h.checksum.unwrap_or_else(|| {
                    let mut acc = accumulate(0, &b);
                    acc = accumulate(acc, &self.payload);
                    if let Network::V6 { .. } = self.network {
                        acc += self.network.pseudo((b.len() + self.payload.len()) as u32);
                    }
                    !fold(acc)
                });
                b[2..4].copy_from_slice(&sum.to_be_bytes());
                b
            }
            Transport::Tcp(h) => {
                let hlen = TCP_LEN + if h.mss.is_some() { 4 } else { 0 };
                let mut b = Vec::with_capacity(hlen);
                b.extend_from_slice(&h.src_port.to_be_bytes());
                b.extend_from_slice(&h.dst_port.to_be_bytes());
                b.extend_from_slice(&h.seq.to_be_bytes());
                b.extend_from_slice(&h.ack.to_be_bytes());
                b.push(((hlen / 4) as u8) << 4);
                b.push(h.flags);
                b.extend_from_slice(&h.window.to_be_bytes());
                b.extend_from_slice(&[0, 0, 0, 0]);
                if let Some(mss) = h.mss {
                    b.extend_from_slice(&[2, 4]);
                    b.extend_from_slice(&mss.to_be_bytes());
                }
                let sum = h.checksum.unwrap_or_else(|| {
                    let mut acc = self.network.pseudo((b.len() + self.payload.len()) as u32);
                    acc = accumulate(acc, &b);
                    acc = accumulate(acc, &self.payload);
                    !fold(acc)
                });
                b[16..18].copy_from_slice(&sum.to_be_bytes());
                b
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let upper = self.transport_bytes();
        let body_len = upper.len() + self.payload.len();
        let mut out = Vec::with_capacity(ETH_LEN + V6_LEN + FRAG_LEN + body_len);
        out.extend_from_slice(&self.eth.dst);
        out.extend_from_slice(&self.eth.src);
        match &self.network {
            Network::V4(h) => {
                out.extend_from_slice(&ETHERTYPE_V4.to_be_bytes());
                let start = out.len();
                out.push(0x45);
                out.push(h.tos);
                out.extend_from_slice(&((V4_LEN + body_len) as u16).to_be_bytes());
                out.extend_from_slice(&h.ident.to_be_bytes());
                let flags = (u16::from(h.dont_fragment) << 14) | (u16::from(h.more_fragments) << 13);
                out.extend_from_slice(&(flags | (h.fragment_offset & 0x1FFF)).to_be_bytes());
                out.push(h.ttl);
                out.push(h.protocol);
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&h.src.octets());
                out.extend_from_slice(&h.dst.octets());
                let sum = checksum::checksum(&out[start..]);
                out[start + 10..start + 12].copy_from_slice(&sum.to_be_bytes());
            }
            Network::V6 { header, fragment, upper: proto } => {
                out.extend_from_slice(&ETHERTYPE_V6.to_be_bytes());
                let word = (6u32 << 28) | (u32::from(header.traffic_class) << 20) | (header.flow_label & 0xFFFFF);
                out.extend_from_slice(&word.to_be_bytes());
                let ext = if fragment.is_some() { FRAG_LEN } else { 0 };
                out.extend_from_slice(&((ext + body_len) as u16).to_be_bytes());
                out.push(if fragment.is_some() { PROTO_FRAGMENT } else { *proto });
                out.push(header.hop_limit);
                out.extend_from_slice(&header.src.octets());
                out.extend_from_slice(&header.dst.octets());
                if let Some(f) = fragment {
                    out.push(*proto);
                    out.push(0);
                    out.extend_from_slice(&((f.offset << 3) | u16::from(f.more)).to_be_bytes());
                    out.extend_from_slice(&f.ident.to_be_bytes());
                }
            }
        }
        out.extend_from_slice(&upper);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parse a frame. Checksums are kept as observed, so `encode` reproduces the input.
    pub fn decode(bytes: &[u8], send_index: u32) -> Result<Self, WireError> {
        let short = || WireError::Malformed(format!("frame {send_index} truncated"));
        if bytes.len() < ETH_LEN {
            return Err(short());
        }
        let mut eth = EthernetHeader { dst: [0; 6], src: [0; 6] };
        eth.dst.copy_from_slice(&bytes[0..6]);
        eth.src.copy_from_slice(&bytes[6..12]);
        let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
        let ip = &bytes[ETH_LEN..];
        let (network, rest, first) = match ethertype {
            ETHERTYPE_V4 => {
                if ip.len() < V4_LEN || ip[0] != 0x45 {
                    return Err(WireError::Malformed(format!("frame {send_index}: unsupported IPv4 header")));
                }
                let total = u16::from_be_bytes([ip[2], ip[3]]) as usize;
                if total < V4_LEN || total > ip.len() {
                    return Err(short());
                }
                let ff = u16::from_be_bytes([ip[6], ip[7]]);
                let h = Ipv4Header {
                    tos: ip[1],
                    ident: u16::from_be_bytes([ip[4], ip[5]]),
                    dont_fragment: ff & 0x4000 != 0,
                    more_fragments: ff & 0x2000 != 0,
                    fragment_offset: ff & 0x1FFF,
                    ttl: ip[8],
                    protocol: ip[9],
                    src: Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]),
                    dst: Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]),
                };
                (Network::V4(h), &ip[V4_LEN..total], h.fragment_offset == 0)
            }
            ETHERTYPE_V6 => {
                if ip.len() < V6_LEN || ip[0] >> 4 != 6 {
                    return Err(WireError::Malformed(format!("frame {send_index}: bad IPv6 header")));
                }
                let word = u32::from_be_bytes([ip[0], ip[1], ip[2], ip[3]]);
                let plen = u16::from_be_bytes([ip[4], ip[5]]) as usize;
                if V6_LEN + plen > ip.len() {
                    return Err(short());
                }
                let mut src = [0u8; 16];
                let mut dst = [0u8; 16];
                src.copy_from_slice(&ip[8..24]);
                dst.copy_from_slice(&ip[24..40]);
                let header = Ipv6Header {
                    traffic_class: ((word >> 20) & 0xFF) as u8,
                    flow_label: word & 0xFFFFF,
                    hop_limit: ip[7],
                    src: Ipv6Addr::from(src),
                    dst: Ipv6Addr::from(dst),
                };
                let body = &ip[V6_LEN..V6_LEN + plen];
                if ip[6] == PROTO_FRAGMENT {
                    if body.len() < FRAG_LEN {
                        return Err(short());
                    }
                    let ow = u16::from_be_bytes([body[2], body[3]]);
                    let f = FragmentHeader {
                        offset: ow >> 3,
                        more: ow & 1 != 0,
                        ident: u32::from_be_bytes([body[4], body[5], body[6], body[7]]),
                    };
                    (Network::V6 { header, fragment: Some(f), upper: body[0] }, &body[FRAG_LEN..], f.offset == 0)
                } else {
                    (Network::V6 { header, fragment: None, upper: ip[6] }, body, true)
                }
            }
            other => return Err(WireError::Malformed(format!("frame {send_index}: ethertype {other:#06x}"))),
        };
        let (transport, payload) = if !first {
            (Transport::None, rest)
        } else {
            match network.upper_protocol() {
                PROTO_ICMP | PROTO_ICMPV6 => {
                    if rest.len() < ICMP_LEN {
                        return Err(short());
                    }
                    let h = IcmpHeader {
                        icmp_type: rest[0],
                        code: rest[1],
                        checksum: Some(u16::from_be_bytes([rest[2], rest[3]])),
                        ident: u16::from_be_bytes([rest[4], rest[5]]),
                        seq: u16::from_be_bytes([rest[6], rest[7]]),
                    };
                    (Transport::Icmp(h), &rest[ICMP_LEN..])
                }
                PROTO_TCP => {
                    if rest.len() < TCP_LEN {
                        return Err(short());
                    }
                    let hlen = (rest[12] >> 4) as usize * 4;
                    if hlen < TCP_LEN || hlen > rest.len() {
                        return Err(short());
                    }
                    let mss = match &rest[TCP_LEN..hlen] {
                        [] => None,
                        [2, 4, a, b] => Some(u16::from_be_bytes([*a, *b])),
                        _ => return Err(WireError::Malformed(format!("frame {send_index}: unsupported TCP options"))),
                    };
                    let h = TcpHeader {
                        src_port: u16::from_be_bytes([rest[0], rest[1]]),
                        dst_port: u16::from_be_bytes([rest[2], rest[3]]),
                        seq: u32::from_be_bytes([rest[4], rest[5], rest[6], rest[7]]),
                        ack: u32::from_be_bytes([rest[8], rest[9], rest[10], rest[11]]),
                        flags: rest[13],
                        window: u16::from_be_bytes([rest[14], rest[15]]),
                        mss,
                        checksum: Some(u16::from_be_bytes([rest[16], rest[17]])),
                    };
                    (Transport::Tcp(h), &rest[hlen..])
                }
                p => return Err(WireError::Malformed(format!("frame {send_index}: protocol {p}"))),
            }
        };
        Ok(FrameBlueprint { eth, network, transport, payload: payload.to_vec(), send_index })
    }

    /// IPv4 Identification or IPv6 fragment identification, if fragmented.
    pub fn fragment_ident(&self) -> Option<u32> {
        match &self.network {
            Network::V4(h) => Some(u32::from(h.ident)),
            Network::V6 { fragment, .. } => fragment.map(|f| f.ident),
        }
    }

    /// (offset in 8-byte units, more-fragments flag).
    pub fn fragment_position(&self) -> (u16, bool) {
        match &self.network {
            Network::V4(h) => (h.fragment_offset, h.more_fragments),
            Network::V6 { fragment: Some(f), .. } => (f.offset, f.more),
            Network::V6 { fragment: None, .. } => (0, false),
        }
    }

    pub fn is_fragment(&self) -> bool {
        let (off, more) = self.fragment_position();
        off != 0 || more
    }
}
