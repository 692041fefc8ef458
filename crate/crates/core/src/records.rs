//! Packed record encodings.
//!
//! Model words are Θ(log n) bits, so a constant number of coordinate-sized
//! fields fits in one word. Labels, locations, and ranks are z-indices or
//! counts below 2^16 (side ≤ 256); counts reach 2^17.

use crate::engine::Word;

/// Four 16-bit fields in one word, highest field first.
pub fn pack4(a: u16, b: u16, c: u16, d: u16) -> Word {
    ((a as u64) << 48) | ((b as u64) << 32) | ((c as u64) << 16) | d as u64
}

pub fn unpack4(w: Word) -> (u16, u16, u16, u16) {
    (
        (w >> 48) as u16,
        (w >> 32) as u16,
        (w >> 16) as u16,
        w as u16,
    )
}

/// A 16-bit tag plus two 24-bit counters.
pub fn pack_tag2(tag: u16, a: u32, b: u32) -> Word {
    debug_assert!(a < (1 << 24) && b < (1 << 24));
    ((tag as u64) << 48) | ((a as u64) << 24) | b as u64
}

pub fn unpack_tag2(w: Word) -> (u16, u32, u32) {
    (
        (w >> 48) as u16,
        ((w >> 24) & 0xFF_FFFF) as u32,
        (w & 0xFF_FFFF) as u32,
    )
}

/// Relabeling entry `old → new`.
pub fn pack_map(old: u16, new: u16) -> Word {
    pack4(0, 0, old, new)
}

pub fn unpack_map(w: Word) -> (u16, u16) {
    let (_, _, old, new) = unpack4(w);
    (old, new)
}

/// Seam edge between two piece labels.
pub fn pack_edge(a: u16, b: u16) -> Word {
    pack4(0, 1, a, b)
}

pub fn unpack_edge(w: Word) -> (u16, u16) {
    let (_, _, a, b) = unpack4(w);
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert_eq!(unpack4(pack4(1, 2, 3, 65535)), (1, 2, 3, 65535));
        assert_eq!(unpack_tag2(pack_tag2(9, 70000, 5)), (9, 70000, 5));
        assert_eq!(unpack_map(pack_map(17, 3)), (17, 3));
    }
}
