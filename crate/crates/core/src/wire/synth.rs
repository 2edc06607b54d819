use crate::checksum::{accumulate, fold, pseudo_v6};
use crate::corpus::{Protocol, TestCaseInstance, WireKeys, CELL_LEN};
use crate::simulator::{MechanismConfig, PolicyTable};

use super::frame::*;
use super::{extract, NetConfig, WireError};

pub const CLIENT_ISN: u32 = 0x0100_0000;
/// Server initial sequence number assumed by client-only sessions and used by the reflector.
pub const SERVER_ISN: u32 = 0x0200_0000;
const MSS: u16 = 1460;
const TTL: u8 = 64;
const WINDOW: u16 = 65535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpMode {
    ClientOnly,
    Bidirectional,
}

/// Echo Request header whose checksum is valid for any reassembly of pattern cells.
pub fn icmp_echo_header(protocol: Protocol, ident: u16, net: &NetConfig) -> IcmpHeader {
    let v6 = protocol == Protocol::Ipv6;
    let icmp_type = if v6 { ICMPV6_ECHO_REQUEST } else { ICMP_ECHO_REQUEST };
    let seq = 1u16;
    let mut acc = accumulate(0, &[icmp_type, 0]);
    acc = accumulate(acc, &ident.to_be_bytes());
    acc = accumulate(acc, &seq.to_be_bytes());
    if v6 {
        // every cell sums to -8, cancelling its own 8 bytes of upper-layer length
        acc += pseudo_v6(net.src_v6.octets(), net.dst_v6.octets(), PROTO_ICMPV6, ICMP_LEN as u32);
    }
    IcmpHeader { icmp_type, code: 0, checksum: Some(!fold(acc)), ident, seq }
}

fn network_for(protocol: Protocol, net: &NetConfig, ident: u32, offset: u16, more: bool, upper: u8) -> Network {
    match protocol {
        Protocol::Ipv6 => Network::V6 {
            header: Ipv6Header { traffic_class: 0, flow_label: 0, hop_limit: TTL, src: net.src_v6, dst: net.dst_v6 },
            fragment: Some(FragmentHeader { offset, more, ident }),
            upper,
        },
        _ => Network::V4(Ipv4Header {
            tos: 0,
            ident: ident as u16,
            dont_fragment: false,
            more_fragments: more,
            fragment_offset: offset,
            ttl: TTL,
            protocol: upper,
            src: net.src_v4,
            dst: net.dst_v4,
        }),
    }
}

/// One fragment per chunk, in time order. Cell `c` sits at fragment offset `c + 1`.
pub fn synth_ip(
    instance: &TestCaseInstance,
    keys: WireKeys,
    net: &NetConfig,
) -> Result<Vec<FrameBlueprint>, WireError> {
    let eth = net.eth()?;
    let family = instance.family();
    let too_large = || WireError::ExtentTooLarge { id: instance.id.clone() };
    if instance.protocol == Protocol::Ipv4 && keys.ip_id > u32::from(u16::MAX) {
        return Err(WireError::KeyOverflow { what: "IPv4 identification", ordinal: instance.ordinal });
    }
    let header = icmp_echo_header(instance.protocol, keys.icmp_id, net);
    let upper = if instance.protocol == Protocol::Ipv6 { PROTO_ICMPV6 } else { PROTO_ICMP };
    let mut out = Vec::with_capacity(instance.chunks.len());
    for (i, c) in instance.chunks.iter().enumerate() {
        let end_bytes = (c.end_cell as usize + 1) * CELL_LEN;
        if end_bytes > 65535 - 60 {
            return Err(too_large());
        }
        let (offset, transport) = if c.start_cell == 0 {
            (0u16, Transport::Icmp(header))
        } else {
            (u16::try_from(c.start_cell + 1).map_err(|_| too_large())?, Transport::None)
        };
        out.push(FrameBlueprint {
            eth,
            network: network_for(instance.protocol, net, keys.ip_id, offset, !c.mf_unset, upper),
            transport,
            payload: c.payload(family),
            send_index: i as u32,
        });
    }
    Ok(out)
}

fn tcp_frame(net: &NetConfig, eth: EthernetHeader, h: TcpHeader, payload: Vec<u8>) -> FrameBlueprint {
    FrameBlueprint {
        eth,
        network: Network::V4(Ipv4Header {
            tos: 0,
            ident: 0,
            dont_fragment: true,
            more_fragments: false,
            fragment_offset: 0,
            ttl: TTL,
            protocol: PROTO_TCP,
            src: net.src_v4,
            dst: net.dst_v4,
        }),
        transport: Transport::Tcp(h),
        payload,
        send_index: 0,
    }
}

/// End of the contiguous run from cell 0 in `covered`.
fn frontier(covered: &[bool]) -> u32 {
    covered.iter().position(|c| !c).unwrap_or(covered.len()) as u32
}

/// SYN, one data segment per chunk in time order, FIN. Client acknowledgments
/// assume the target echoes the contiguous prefix immediately.
/// `Bidirectional` adds the server side produced by the simulator.
pub fn synth_tcp(
    instance: &TestCaseInstance,
    keys: WireKeys,
    net: &NetConfig,
    mode: TcpMode,
    server: Option<(&PolicyTable, MechanismConfig)>,
) -> Result<Vec<FrameBlueprint>, WireError> {
    let eth = net.eth()?;
    let family = instance.family();
    let max_end = instance.chunks.iter().map(|c| c.end_cell).max().unwrap_or(0);
    if (max_end as usize) * CELL_LEN > 65535 - 60 {
        return Err(WireError::ExtentTooLarge { id: instance.id.clone() });
    }
    let base = TcpHeader {
        src_port: keys.src_port,
        dst_port: net.tcp_port,
        seq: CLIENT_ISN,
        ack: 0,
        flags: TCP_SYN,
        window: WINDOW,
        mss: None,
        checksum: None,
    };
    let mut out = vec![tcp_frame(net, eth, TcpHeader { mss: Some(MSS), ..base }, Vec::new())];
    let mut covered = vec![false; max_end as usize];
    for c in &instance.chunks {
        let ack = SERVER_ISN.wrapping_add(1 + CELL_LEN as u32 * frontier(&covered));
        let seq = CLIENT_ISN.wrapping_add(1 + CELL_LEN as u32 * c.start_cell);
        let h = TcpHeader { seq, ack, flags: TCP_PSH | TCP_ACK, ..base };
        out.push(tcp_frame(net, eth, h, c.payload(family)));
        for cell in c.cells() {
            covered[cell as usize] = true;
        }
    }
    let ack = SERVER_ISN.wrapping_add(1 + CELL_LEN as u32 * frontier(&covered));
    let seq = CLIENT_ISN.wrapping_add(1 + CELL_LEN as u32 * max_end);
    out.push(tcp_frame(net, eth, TcpHeader { seq, ack, flags: TCP_FIN | TCP_ACK, ..base }, Vec::new()));

    let out = match mode {
        TcpMode::ClientOnly => out,
        TcpMode::Bidirectional => {
            let (table, mech) = server.ok_or(WireError::MissingMechanism)?;
            extract::serve_tcp(&out, family, table, mech)?
        }
    };
    Ok(out.into_iter().enumerate().map(|(i, f)| FrameBlueprint { send_index: i as u32, ..f }).collect())
}

/// Requests for one instance: fragments for IP, a client-only session for TCP.
pub fn synth_instance(
    instance: &TestCaseInstance,
    keys: WireKeys,
    net: &NetConfig,
) -> Result<Vec<FrameBlueprint>, WireError> {
    if instance.protocol.is_ip() {
        synth_ip(instance, keys, net)
    } else {
        synth_tcp(instance, keys, net, TcpMode::ClientOnly, None)
    }
}
