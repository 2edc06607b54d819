//! Checksum-impactless 8-byte payload cells.
//!
//! A cell is three ASCII digits of chunk id, three ASCII digits of cell
//! index, then a 16-bit correction word chosen so the one's-complement sum
//! of the whole cell equals a fixed target. For the IPv4 family the target
//! is `0xFFFF` (negative zero), so any number of cells leaves a checksum
//! unchanged. For IPv6 the target is `0xFFF7` (minus eight), cancelling the
//! eight bytes each cell adds to the ICMPv6 pseudo-header length.

use serde::{Deserialize, Serialize};

use crate::checksum;

/// Bytes per cell; also the IP fragment offset unit.
pub const CELL_LEN: usize = 8;

/// Largest chunk id / cell index encodable in three digits.
pub const MAX_ID: u32 = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V4,
    V6,
}

impl Family {
    /// Per-cell one's-complement sum target.
    pub fn target(self) -> u16 {
        match self {
            Family::V4 => 0xFFFF,
            Family::V6 => 0xFFF7,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("pattern id out of range: chunk {chunk_id}, cell {cell_index} (max {MAX_ID})")]
pub struct PatternRangeError {
    pub chunk_id: u32,
    pub cell_index: u32,
}

fn digits(chunk_id: u32, cell_index: u32) -> [u8; 6] {
    let mut out = [0u8; 6];
    out.copy_from_slice(format!("{chunk_id:03}{cell_index:03}").as_bytes());
    out
}

/// Correction word for the six leading digit bytes.
pub fn correction(prefix: &[u8; 6], family: Family) -> u16 {
    checksum::sub(family.target(), checksum::sum(prefix))
}

pub fn pattern_for(chunk_id: u32, cell_index: u32, family: Family) -> Result<[u8; CELL_LEN], PatternRangeError> {
    if chunk_id > MAX_ID || cell_index > MAX_ID {
        return Err(PatternRangeError { chunk_id, cell_index });
    }
    let prefix = digits(chunk_id, cell_index);
    let w = correction(&prefix, family).to_be_bytes();
    let mut out = [0u8; CELL_LEN];
    out[..6].copy_from_slice(&prefix);
    out[6..].copy_from_slice(&w);
    Ok(out)
}

/// Decode a cell back to `(chunk_id, cell_index)` if it is a valid pattern of `family`.
pub fn parse_pattern(cell: &[u8], family: Family) -> Option<(u32, u32)> {
    if cell.len() != CELL_LEN || !cell[..6].iter().all(u8::is_ascii_digit) {
        return None;
    }
    let mut prefix = [0u8; 6];
    prefix.copy_from_slice(&cell[..6]);
    if correction(&prefix, family).to_be_bytes() != cell[6..] {
        return None;
    }
    let text = std::str::from_utf8(&prefix).ok()?;
    Some((text[..3].parse().ok()?, text[3..].parse().ok()?))
}

/// Render cells as space-separated text, non-printable bytes shown as `.`.
pub fn render(payload: &[u8]) -> String {
    payload
        .chunks(CELL_LEN)
        .map(|c| c.iter().map(|&b| if b.is_ascii_graphic() { b as char } else { '.' }).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}
