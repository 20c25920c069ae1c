//! Fixed-width bit vectors and the small bit-twiddling helpers shared by the
//! remapping functions and the baseline index logic.

use crate::error::{Error, Result};
use std::fmt;

/// A packed binary value of a fixed width between 1 and 128 bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitVec {
    width: u32,
    bits: u128,
}

impl BitVec {
    pub fn new(width: u32, bits: u128) -> Result<Self> {
        if width == 0 || width > 128 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(Self { width, bits: bits & mask(width) })
    }

    pub fn zero(width: u32) -> Result<Self> {
        Self::new(width, 0)
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn bits(&self) -> u128 {
        self.bits
    }

    #[inline]
    pub fn bit(&self, i: u32) -> bool {
        i < self.width && (self.bits >> i) & 1 == 1
    }

    pub fn flip(&self, i: u32) -> Self {
        debug_assert!(i < self.width);
        Self { width: self.width, bits: self.bits ^ (1u128 << i) }
    }

    /// Concatenates `hi` above `self`: result = hi << self.width | self.
    pub fn concat(&self, hi: &BitVec) -> Result<Self> {
        let w = self.width + hi.width;
        if w > 128 {
            return Err(Error::InvalidWidth(w));
        }
        Ok(Self { width: w, bits: self.bits | (hi.bits << self.width) })
    }

    /// Bits `[lo, lo + width)` as a new vector.
    pub fn slice(&self, lo: u32, width: u32) -> Result<Self> {
        if lo + width > self.width {
            return Err(Error::WidthMismatch { expected: self.width, got: lo + width });
        }
        Self::new(width, self.bits >> lo)
    }

    pub fn hamming(&self, other: &BitVec) -> Result<u32> {
        if self.width != other.width {
            return Err(Error::WidthMismatch { expected: self.width, got: other.width });
        }
        Ok((self.bits ^ other.bits).count_ones())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({}'h{:x})", self.width, self.bits)
    }
}

#[inline]
pub fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

#[inline]
pub fn mask64(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Bits `[lo, lo + width)` of `x`.
#[inline]
pub fn bits64(x: u64, lo: u32, width: u32) -> u64 {
    if lo >= 64 {
        return 0;
    }
    (x >> lo) & mask64(width)
}

/// XOR-folds the low `src_width` bits of `x` into `out_width`-bit chunks.
#[inline]
pub fn xor_fold(x: u64, src_width: u32, out_width: u32) -> u64 {
    if out_width == 0 {
        return 0;
    }
    let mut v = x & mask64(src_width);
    let mut acc = 0;
    let m = mask64(out_width);
    while v != 0 {
        acc ^= v & m;
        v = if out_width >= 64 { 0 } else { v >> out_width };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_bounds() {
        assert!(BitVec::new(0, 1).is_err());
        assert!(BitVec::new(129, 1).is_err());
        assert_eq!(BitVec::new(4, 0xff).unwrap().bits(), 0xf);
        assert_eq!(BitVec::new(128, u128::MAX).unwrap().bits(), u128::MAX);
    }

    #[test]
    fn concat_and_slice() {
        let lo = BitVec::new(4, 0b1010).unwrap();
        let hi = BitVec::new(4, 0b0011).unwrap();
        let c = lo.concat(&hi).unwrap();
        assert_eq!(c.width(), 8);
        assert_eq!(c.bits(), 0b0011_1010);
        assert_eq!(c.slice(4, 4).unwrap(), hi);
        assert!(c.slice(6, 4).is_err());
    }

    #[test]
    fn fold() {
        assert_eq!(xor_fold(0b1100_1010, 8, 4), 0b0110);
        assert_eq!(xor_fold(0xffff, 16, 8), 0);
        assert_eq!(xor_fold(0x1_0001, 17, 16), 0);
        assert_eq!(xor_fold(u64::MAX, 64, 64), u64::MAX);
    }
}
