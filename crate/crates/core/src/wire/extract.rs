use std::collections::HashMap;

use crate::corpus::{parse_pattern, pattern_for, ChunkSpec, Family, ManifestRecord, Role, CELL_LEN};
use crate::interval::Interval;
use crate::policy::Observation;
use crate::simulator::{simulate_ip, MechanismConfig, PolicyTable, Status, TcpEngine};

use super::frame::*;
use super::synth::SERVER_ISN;
use super::WireError;

fn reverse_eth(e: EthernetHeader) -> EthernetHeader {
    EthernetHeader { src: e.dst, dst: e.src }
}

fn reverse_network(n: &Network, upper: u8) -> Network {
    match n {
        Network::V4(h) => Network::V4(Ipv4Header {
            src: h.dst,
            dst: h.src,
            more_fragments: false,
            fragment_offset: 0,
            protocol: upper,
            ..*h
        }),
        Network::V6 { header, .. } => {
            Network::V6 { header: Ipv6Header { src: header.dst, dst: header.src, ..*header }, fragment: None, upper }
        }
    }
}

fn family_of(n: &Network) -> Family {
    match n {
        Network::V4(_) => Family::V4,
        Network::V6 { .. } => Family::V6,
    }
}

fn owner_of(payload: &[u8], family: Family, index: u32) -> Result<u32, WireError> {
    payload
        .get(..CELL_LEN)
        .and_then(|c| parse_pattern(c, family))
        .map(|(id, _)| id)
        .ok_or_else(|| WireError::Malformed(format!("frame {index}: payload is not a test pattern")))
}

fn render_cells(owners: &[u32], first: u32, family: Family) -> Vec<u8> {
    owners
        .iter()
        .enumerate()
        .flat_map(|(i, &o)| pattern_for(o, first + i as u32, family).expect("ids in range"))
        .collect()
}

struct TcpFlow<'a> {
    isn: u32,
    engine: TcpEngine<'a>,
}

fn server_tcp(
    client: &FrameBlueprint,
    h: &TcpHeader,
    seq: u32,
    ack: u32,
    flags: u8,
    payload: Vec<u8>,
) -> FrameBlueprint {
    FrameBlueprint {
        eth: reverse_eth(client.eth),
        network: reverse_network(&client.network, PROTO_TCP),
        transport: Transport::Tcp(TcpHeader {
            src_port: h.dst_port,
            dst_port: h.src_port,
            seq,
            ack,
            flags,
            window: h.window,
            mss: (flags & TCP_SYN != 0).then_some(1460),
            checksum: None,
        }),
        payload,
        send_index: 0,
    }
}

impl<'a> TcpFlow<'a> {
    fn answer(
        &mut self,
        f: &FrameBlueprint,
        h: &TcpHeader,
        family: Family,
    ) -> Result<Option<FrameBlueprint>, WireError> {
        let cell_bytes = CELL_LEN as u32;
        if h.flags & TCP_SYN != 0 {
            self.isn = h.seq;
            let ack = h.seq.wrapping_add(1);
            return Ok(Some(server_tcp(f, h, SERVER_ISN, ack, TCP_SYN | TCP_ACK, Vec::new())));
        }
        let rel = h.seq.wrapping_sub(self.isn.wrapping_add(1));
        if !f.payload.is_empty() {
            let ext = Interval { start: rel / cell_bytes, end: rel / cell_bytes + (f.payload.len() / CELL_LEN) as u32 };
            let got = self.engine.push(owner_of(&f.payload, family, f.send_index)?, ext);
            let ack = self.isn.wrapping_add(1 + cell_bytes * self.engine.next_expected());
            let seq = SERVER_ISN.wrapping_add(1 + cell_bytes * got.start);
            let data = render_cells(&self.engine.stream()[got.start as usize..got.end as usize], got.start, family);
            let flags = if data.is_empty() { TCP_ACK } else { TCP_PSH | TCP_ACK };
            return Ok(Some(server_tcp(f, h, seq, ack, flags, data)));
        }
        if h.flags & TCP_FIN != 0 {
            let delivered = self.engine.next_expected();
            let seq = SERVER_ISN.wrapping_add(1 + cell_bytes * delivered);
            let ack = if rel == cell_bytes * delivered {
                h.seq.wrapping_add(1)
            } else {
                self.isn.wrapping_add(1 + cell_bytes * delivered)
            };
            return Ok(Some(server_tcp(f, h, seq, ack, TCP_FIN | TCP_ACK, Vec::new())));
        }
        Ok(None)
    }
}

/// Interleave server replies for one client-only session.
pub(crate) fn serve_tcp(
    client: &[FrameBlueprint],
    family: Family,
    table: &PolicyTable,
    mech: MechanismConfig,
) -> Result<Vec<FrameBlueprint>, WireError> {
    let mut flow = TcpFlow { isn: 0, engine: TcpEngine::new(table, mech) };
    let mut out = Vec::with_capacity(client.len() * 2);
    for f in client {
        out.push(f.clone());
        if let Transport::Tcp(h) = &f.transport {
            if let Some(reply) = flow.answer(f, h, family)? {
                out.push(reply);
            }
        }
    }
    Ok(out)
}

fn is_echo_reply(f: &FrameBlueprint) -> Option<&IcmpHeader> {
    match &f.transport {
        Transport::Icmp(h) if h.icmp_type == ICMP_ECHO_REPLY || h.icmp_type == ICMPV6_ECHO_REPLY => Some(h),
        _ => None,
    }
}

fn ip_key(f: &FrameBlueprint) -> Option<(bool, u32)> {
    if is_echo_reply(f).is_some() || matches!(f.transport, Transport::Tcp(_)) {
        return None;
    }
    let v6 = matches!(f.network, Network::V6 { .. });
    f.fragment_ident().map(|id| (v6, id))
}

/// Loopback target: reassemble every request flow with the simulator and
/// insert the replies it would send.
pub fn reflect(
    frames: &[FrameBlueprint],
    table: &PolicyTable,
    mech: MechanismConfig,
) -> Result<Vec<FrameBlueprint>, WireError> {
    let mut last: HashMap<(bool, u32), usize> = HashMap::new();
    for (i, f) in frames.iter().enumerate() {
        if let Some(k) = ip_key(f) {
            last.insert(k, i);
        }
    }
    let mut fragments: HashMap<(bool, u32), Vec<&FrameBlueprint>> = HashMap::new();
    let mut flows: HashMap<u16, TcpFlow<'_>> = HashMap::new();
    let mut out = Vec::with_capacity(frames.len() * 2);
    for (i, f) in frames.iter().enumerate() {
        out.push(f.clone());
        if let Transport::Tcp(h) = &f.transport {
            if mech.is_tcp() {
                let flow =
                    flows.entry(h.src_port).or_insert_with(|| TcpFlow { isn: 0, engine: TcpEngine::new(table, mech) });
                if let Some(reply) = flow.answer(f, h, family_of(&f.network))? {
                    out.push(reply);
                }
            }
            continue;
        }
        let Some(key) = ip_key(f) else { continue };
        fragments.entry(key).or_default().push(f);
        if last[&key] != i || mech.is_tcp() {
            continue;
        }
        if let Some(reply) = ip_reply(&fragments[&key], table, mech)? {
            out.push(reply);
        }
    }
    Ok(out.into_iter().enumerate().map(|(i, f)| FrameBlueprint { send_index: i as u32, ..f }).collect())
}

fn ip_reply(
    frags: &[&FrameBlueprint],
    table: &PolicyTable,
    mech: MechanismConfig,
) -> Result<Option<FrameBlueprint>, WireError> {
    let family = family_of(&frags[0].network);
    let mut chunks = Vec::with_capacity(frags.len());
    let mut echo = None;
    for (t, f) in frags.iter().enumerate() {
        let (offset, more) = f.fragment_position();
        if let Transport::Icmp(h) = f.transport {
            echo = Some(h);
        }
        let start = if offset == 0 { 0 } else { u32::from(offset) - 1 };
        let cells = (f.payload.len() / CELL_LEN) as u32;
        if cells == 0 {
            continue;
        }
        chunks.push(ChunkSpec {
            chunk_id: owner_of(&f.payload, family, f.send_index)?,
            time_index: t as u32,
            start_cell: start,
            end_cell: start + cells,
            role: Role::Test,
            carries_header: offset == 0,
            mf_unset: !more,
        });
    }
    let Some(echo) = echo else { return Ok(None) };
    let outcome = simulate_ip(&chunks, table, mech);
    if outcome.status != Status::Delivered {
        return Ok(None);
    }
    let upper = if family == Family::V6 { PROTO_ICMPV6 } else { PROTO_ICMP };
    let reply_type = if family == Family::V6 { ICMPV6_ECHO_REPLY } else { ICMP_ECHO_REPLY };
    Ok(Some(FrameBlueprint {
        eth: reverse_eth(frags[0].eth),
        network: reverse_network(&frags[0].network, upper),
        transport: Transport::Icmp(IcmpHeader { icmp_type: reply_type, checksum: None, ..echo }),
        payload: outcome.payload(family).expect("delivered"),
        send_index: 0,
    }))
}

/// Stitch server-to-client bytes in sequence order from the first byte after the server ISN.
fn stitch(segments: &[(u32, &[u8])], base: u32) -> Vec<u8> {
    let mut sorted: Vec<(u32, &[u8])> = segments.iter().map(|&(s, b)| (s.wrapping_sub(base), b)).collect();
    sorted.sort_by_key(|&(o, _)| o);
    let mut out = Vec::new();
    for (off, bytes) in sorted {
        let cur = out.len() as u32;
        if off > cur {
            break;
        }
        let end = off + bytes.len() as u32;
        if end > cur {
            out.extend_from_slice(&bytes[(cur - off) as usize..]);
        }
    }
    out
}

/// One observation per manifest record, correlated by the record's wire keys.
pub fn extract_replies(frames: &[FrameBlueprint], records: &[ManifestRecord]) -> Result<Vec<Observation>, WireError> {
    let mut last_request: HashMap<(bool, u32), usize> = HashMap::new();
    let mut replies: HashMap<(bool, u16), (usize, &FrameBlueprint)> = HashMap::new();
    let mut server: HashMap<u16, Vec<&FrameBlueprint>> = HashMap::new();
    for (i, f) in frames.iter().enumerate() {
        let v6 = matches!(f.network, Network::V6 { .. });
        if let Some(k) = ip_key(f) {
            last_request.insert(k, i);
        }
        if let Some(h) = is_echo_reply(f) {
            if !f.is_fragment() {
                replies.entry((v6, h.ident)).or_insert((i, f));
            }
        }
        if let Transport::Tcp(h) = &f.transport {
            server.entry(h.dst_port).or_default().push(f);
        }
    }
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let keys = r.wire.ok_or_else(|| WireError::Uncorrelatable(r.id.clone()))?;
        let v6 = r.protocol == crate::corpus::Protocol::Ipv6;
        let obs = if r.protocol.is_ip() {
            let reply = replies.get(&(v6, keys.icmp_id));
            let last = last_request.get(&(v6, keys.ip_id)).copied();
            Observation {
                test_case_id: r.id.clone(),
                payload: reply.map(|(_, f)| f.payload.clone()),
                reply_before_complete: matches!((reply, last), (Some((ri, _)), Some(li)) if *ri < li),
                session_terminated: None,
            }
        } else {
            let frames = server.get(&keys.src_port).map(Vec::as_slice).unwrap_or(&[]);
            let mut isn = None;
            let mut terminated = false;
            let mut data: Vec<(u32, &[u8])> = Vec::new();
            for f in frames {
                let Transport::Tcp(h) = &f.transport else { continue };
                if h.src_port == keys.src_port {
                    continue;
                }
                if h.flags & TCP_SYN != 0 {
                    isn = Some(h.seq);
                }
                terminated |= h.flags & (TCP_FIN | TCP_RST) != 0;
                if !f.payload.is_empty() {
                    data.push((h.seq, &f.payload));
                }
            }
            let base = match isn {
                Some(s) => s.wrapping_add(1),
                None => data.iter().map(|&(s, _)| s).min().unwrap_or(0),
            };
            let bytes = stitch(&data, base);
            Observation {
                test_case_id: r.id.clone(),
                payload: (!bytes.is_empty()).then_some(bytes),
                reply_before_complete: false,
                session_terminated: Some(terminated),
            }
        };
        out.push(obs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stitch_strict_order() {
        let a: &[u8] = b"AAAA";
        let b: &[u8] = b"BBBB";
        let c: &[u8] = b"CCCC";
        assert_eq!(stitch(&[(108, c), (100, a), (104, b)], 100), b"AAAABBBBCCCC");
        assert_eq!(stitch(&[(100, a), (108, c)], 100), b"AAAA");
        assert_eq!(stitch(&[(100, a), (102, b)], 100), b"AAAABB");
    }
}
