//! Classic little-endian PCAP with Ethernet link type and microsecond timestamps.

use std::fs;
use std::path::Path;

use super::WireError;

const MAGIC: u32 = 0xa1b2_c3d4;
const LINKTYPE_ETHERNET: u32 = 1;
const SNAPLEN: u32 = 65535;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ts_us: u64,
    pub data: Vec<u8>,
}

pub fn encode_pcap(frames: &[Frame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + frames.iter().map(|f| 16 + f.data.len()).sum::<usize>());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&SNAPLEN.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    for f in frames {
        out.extend_from_slice(&((f.ts_us / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((f.ts_us % 1_000_000) as u32).to_le_bytes());
        let len = f.data.len() as u32;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&f.data);
    }
    out
}

pub fn decode_pcap(bytes: &[u8]) -> Result<Vec<Frame>, WireError> {
    let u32_at = |i: usize| -> Result<u32, WireError> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| WireError::Pcap(format!("truncated at byte {i}")))
    };
    if u32_at(0)? != MAGIC {
        return Err(WireError::Pcap("not a little-endian microsecond pcap".into()));
    }
    let link = u32_at(20)?;
    if link != LINKTYPE_ETHERNET {
        return Err(WireError::Pcap(format!("unsupported link type {link}")));
    }
    let mut frames = Vec::new();
    let mut i = 24;
    while i < bytes.len() {
        let (sec, usec, incl) = (u32_at(i)?, u32_at(i + 4)?, u32_at(i + 8)? as usize);
        let data =
            bytes.get(i + 16..i + 16 + incl).ok_or_else(|| WireError::Pcap(format!("record at byte {i} truncated")))?;
        frames.push(Frame { ts_us: u64::from(sec) * 1_000_000 + u64::from(usec), data: data.to_vec() });
        i += 16 + incl;
    }
    Ok(frames)
}

pub fn write_pcap(frames: &[Frame], path: &Path) -> Result<(), WireError> {
    fs::write(path, encode_pcap(frames))?;
    Ok(())
}

pub fn read_pcap(path: &Path) -> Result<Vec<Frame>, WireError> {
    decode_pcap(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let frames = vec![Frame { ts_us: 0, data: vec![1, 2, 3] }, Frame { ts_us: 1_500_000, data: vec![9; 70] }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pcap");
        write_pcap(&frames, &p).unwrap();
        assert_eq!(read_pcap(&p).unwrap(), frames);
    }

    #[test]
    fn empty_file_has_only_global_header() {
        let b = encode_pcap(&[]);
        assert_eq!(b.len(), 24);
        assert!(decode_pcap(&b).unwrap().is_empty());
    }

    #[test]
    fn rejects_other_link_types() {
        let mut b = encode_pcap(&[]);
        b[20] = 101;
        assert!(matches!(decode_pcap(&b), Err(WireError::Pcap(_))));
        assert!(decode_pcap(&b[..10]).is_err());
    }
}
