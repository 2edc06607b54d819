//! Synthesis of test cases into IPv4/IPv6 fragments and TCP sessions, PCAP
//! files, and extraction of echoed reassemblies from reply captures.

mod extract;
mod frame;
mod pcap;
mod synth;

use std::net::{Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ManifestRecord, Protocol, WireKeys};

pub use extract::{extract_replies, reflect};
pub use frame::{
    EthernetHeader, FragmentHeader, FrameBlueprint, IcmpHeader, Ipv4Header, Ipv6Header, Network, TcpHeader, Transport,
    ICMPV6_ECHO_REPLY, ICMPV6_ECHO_REQUEST, ICMP_ECHO_REPLY, ICMP_ECHO_REQUEST, ICMP_LEN, PROTO_ICMP, PROTO_ICMPV6,
    PROTO_TCP, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN,
};
pub use pcap::{decode_pcap, encode_pcap, read_pcap, write_pcap, Frame};
pub use synth::{icmp_echo_header, synth_instance, synth_ip, synth_tcp, TcpMode, CLIENT_ISN, SERVER_ISN};

/// What a target returned for one test case.
pub type ReplyObservation = crate::policy::Observation;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("{0}")]
    Config(String),
    #[error("test case `{0}` has no wire correlation keys")]
    Uncorrelatable(String),
    #[error("{what} overflows for ordinal {ordinal}")]
    KeyOverflow { what: &'static str, ordinal: usize },
    #[error("test case `{id}`: chunk extent exceeds datagram bounds")]
    ExtentTooLarge { id: String },
    #[error("bidirectional TCP synthesis needs a mechanism and policy table")]
    MissingMechanism,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("pcap: {0}")]
    Pcap(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Addressing and correlation parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub src_mac: String,
    pub dst_mac: String,
    pub src_v4: Ipv4Addr,
    pub dst_v4: Ipv4Addr,
    pub src_v6: Ipv6Addr,
    pub dst_v6: Ipv6Addr,
    pub tcp_port: u16,
    pub base_src_port: u16,
    pub icmp_id_base: u16,
    /// Microseconds between consecutive frames; 0 orders frames only.
    pub spacing_us: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            src_mac: "02:00:00:00:00:01".into(),
            dst_mac: "02:00:00:00:00:02".into(),
            src_v4: Ipv4Addr::new(192, 0, 2, 1),
            dst_v4: Ipv4Addr::new(192, 0, 2, 2),
            src_v6: "2001:db8::1".parse().expect("literal"),
            dst_v6: "2001:db8::2".parse().expect("literal"),
            tcp_port: 7,
            base_src_port: 20000,
            icmp_id_base: 0x1000,
            spacing_us: 0,
        }
    }
}

fn parse_mac(s: &str) -> Result<[u8; 6], WireError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || WireError::Config(format!("bad link-layer address `{s}`"));
    if parts.len() != 6 {
        return Err(bad());
    }
    let mut out = [0u8; 6];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = u8::from_str_radix(p, 16).map_err(|_| bad())?;
    }
    Ok(out)
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), WireError> {
        self.eth()?;
        if self.tcp_port == 0 || self.base_src_port == 0 {
            return Err(WireError::Config("ports must be in 1..65535".into()));
        }
        Ok(())
    }

    /// Client-to-target Ethernet header.
    pub fn eth(&self) -> Result<EthernetHeader, WireError> {
        Ok(EthernetHeader { src: parse_mac(&self.src_mac)?, dst: parse_mac(&self.dst_mac)? })
    }
}

/// Give record `k` its correlation keys: IP id `k + 1`, ICMP id and source port offset by `k`.
pub fn assign_wire_keys(records: &mut [ManifestRecord], net: &NetConfig) -> Result<(), WireError> {
    for (k, r) in records.iter_mut().enumerate() {
        let ip_id =
            u32::try_from(k + 1).map_err(|_| WireError::KeyOverflow { what: "IP identification", ordinal: k })?;
        if r.protocol == Protocol::Ipv4 && ip_id > u32::from(u16::MAX) {
            return Err(WireError::KeyOverflow { what: "IPv4 identification", ordinal: k });
        }
        let offset = |base: u16, what| {
            u16::try_from(usize::from(base) + k).map_err(|_| WireError::KeyOverflow { what, ordinal: k })
        };
        let (icmp_id, src_port) = if r.protocol.is_ip() {
            (offset(net.icmp_id_base, "ICMP identifier")?, 0)
        } else {
            (0, offset(net.base_src_port, "TCP source port")?)
        };
        r.wire = Some(WireKeys { ip_id, icmp_id, src_port });
    }
    Ok(())
}

/// Serialize blueprints in order with timestamps `index * spacing`.
pub fn to_frames(blueprints: &[FrameBlueprint], spacing_us: u64) -> Vec<Frame> {
    blueprints.iter().enumerate().map(|(i, b)| Frame { ts_us: i as u64 * spacing_us, data: b.encode() }).collect()
}

pub fn from_frames(frames: &[Frame]) -> Result<Vec<FrameBlueprint>, WireError> {
    frames.iter().enumerate().map(|(i, f)| FrameBlueprint::decode(&f.data, i as u32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, ScenarioSpec};

    #[test]
    fn keys_are_sequential_and_bounded() {
        let corpus = build_corpus(Protocol::Tcp, &ScenarioSpec::all_for(Protocol::Tcp)).unwrap();
        let mut m = corpus.manifest();
        let net = NetConfig::default();
        assign_wire_keys(&mut m, &net).unwrap();
        assert_eq!(m[0].wire.unwrap().src_port, 20000);
        assert_eq!(m[4641].wire.unwrap().ip_id, 4642);
        let tight = NetConfig { base_src_port: 65000, ..NetConfig::default() };
        assert!(matches!(assign_wire_keys(&mut m, &tight), Err(WireError::KeyOverflow { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::default().validate().is_ok());
        let bad = NetConfig { src_mac: "02:00:00".into(), ..NetConfig::default() };
        assert!(bad.validate().is_err());
        let zero = NetConfig { tcp_port: 0, ..NetConfig::default() };
        assert!(zero.validate().is_err());
    }
}
