//! One's-complement 16-bit arithmetic (RFC 1071).

/// Fold a 32-bit accumulator into 16 bits with end-around carry.
pub fn fold(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum as u16
}

/// One's-complement addition of two 16-bit words.
pub fn add(a: u16, b: u16) -> u16 {
    fold(a as u32 + b as u32)
}

/// One's-complement subtraction `a - b`.
pub fn sub(a: u16, b: u16) -> u16 {
    add(a, !b)
}

/// Unfolded big-endian word sum of `data`; an odd trailing byte is padded with zero.
pub fn accumulate(mut acc: u32, data: &[u8]) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for w in &mut chunks {
        acc += u16::from_be_bytes([w[0], w[1]]) as u32;
        // keep headroom for arbitrarily long inputs
        if acc > 0xFFFF_0000 {
            acc = fold(acc) as u32;
        }
    }
    if let [last] = chunks.remainder() {
        acc += (*last as u32) << 8;
    }
    acc
}

/// Folded one's-complement sum of `data`.
pub fn sum(data: &[u8]) -> u16 {
    fold(accumulate(0, data))
}

/// Internet checksum: complement of the folded sum.
pub fn checksum(data: &[u8]) -> u16 {
    !sum(data)
}

/// Checksum over several slices, as if concatenated (all but the last must be even-length).
pub fn checksum_parts(parts: &[&[u8]]) -> u16 {
    let mut acc = 0u32;
    for p in parts {
        acc = accumulate(acc, p);
    }
    !fold(acc)
}

/// IPv4 pseudo-header sum for an upper-layer protocol.
pub fn pseudo_v4(src: [u8; 4], dst: [u8; 4], proto: u8, len: u16) -> u32 {
    let mut acc = accumulate(0, &src);
    acc = accumulate(acc, &dst);
    acc + proto as u32 + len as u32
}

/// IPv6 pseudo-header sum for an upper-layer protocol.
pub fn pseudo_v6(src: [u8; 16], dst: [u8; 16], next_header: u8, len: u32) -> u32 {
    let mut acc = accumulate(0, &src);
    acc = accumulate(acc, &dst);
    acc = accumulate(acc, &len.to_be_bytes());
    acc + next_header as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc1071_sample() {
        // RFC 1071 section 3 example words
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(sum(&data), 0xddf2);
        assert_eq!(checksum(&data), !0xddf2);
    }

    #[test]
    fn odd_length_pads() {
        assert_eq!(sum(&[0x12]), 0x1200);
        assert_eq!(sum(&[0x12, 0x34, 0x56]), 0x1234 + 0x5600);
    }

    #[test]
    fn sub_inverts_add() {
        for (a, b) in [(0x9091u16, 0x6F6Eu16), (0xFFF7, 0x9193), (1, 0xFFFF)] {
            assert_eq!(add(sub(a, b), b), if a == 0 { 0xFFFF } else { a });
        }
        assert_eq!(sub(0xFFFF, 0x9091), 0x6F6E);
    }
}
