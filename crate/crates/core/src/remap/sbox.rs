//! Default substitution tables.

/// PRESENT 4-bit S-box.
pub const PRESENT: [u8; 16] = [
    0xc, 0x5, 0x6, 0xb, 0x9, 0x0, 0xa, 0xd, 0x3, 0xe, 0xf, 0x8, 0x4, 0x7, 0x1, 0x2,
];

/// SPONGENT 4-bit S-box.
pub const SPONGENT: [u8; 16] = [
    0xe, 0xd, 0xb, 0x0, 0x2, 0x1, 0x4, 0xf, 0x7, 0xa, 0x8, 0x5, 0x9, 0xc, 0x3, 0x6,
];

/// 3-bit bijections with nonlinearity 2 (the maximum for n = 3) and
/// differential uniformity 2, picked from an exhaustive search over all 8!
/// permutations.
pub const SBOX3_DEFAULTS: [[u8; 8]; 2] = [
    [0x1, 0x0, 0x3, 0x4, 0x2, 0x6, 0x7, 0x5],
    [0x1, 0x0, 0x3, 0x5, 0x6, 0x2, 0x7, 0x4],
];

pub fn is_bijection(table: &[u8]) -> bool {
    let n = table.len();
    let mut seen = vec![false; n];
    for &v in table {
        let v = v as usize;
        if v >= n || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// Nonlinearity of an n-bit S-box: the minimum, over nonzero output masks,
/// of the Hamming distance between the component Boolean function and the
/// closest affine function.
pub fn nonlinearity(table: &[u8]) -> u32 {
    let n = table.len();
    let bits = n.trailing_zeros();
    let mut nl = u32::MAX;
    for out_mask in 1..n {
        // max |Walsh coefficient| over all input masks
        let mut max_walsh = 0i32;
        for in_mask in 0..n {
            let mut w = 0i32;
            for (x, &y) in table.iter().enumerate() {
                let a = (x & in_mask).count_ones() & 1;
                let b = ((y as usize) & out_mask).count_ones() & 1;
                w += if a == b { 1 } else { -1 };
            }
            max_walsh = max_walsh.max(w.abs());
        }
        let d = ((1u32 << bits) - max_walsh as u32) / 2;
        nl = nl.min(d);
    }
    nl
}
