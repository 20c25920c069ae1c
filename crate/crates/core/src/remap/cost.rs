use serde::{Deserialize, Serialize};

/// Maximum transistors allowed on the critical path for a single-cycle
/// remapping (constraint C1).
pub const C1_MAX_CRITICAL_PATH: u32 = 45;

/// Per-primitive transistor costs. Depths are transistors on the longest
/// path through the primitive; totals are transistor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub sbox4_depth: u32,
    pub sbox4_total: u32,
    pub sbox3_depth: u32,
    pub sbox3_total: u32,
    /// Depth of one level of 2-input XOR gates.
    pub xor_level_depth: u32,
    /// Transistors per 2-input XOR gate.
    pub xor2_total: u32,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            sbox4_depth: 6,
            sbox4_total: 28,
            sbox3_depth: 5,
            sbox3_total: 18,
            xor_level_depth: 4,
            xor2_total: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareCost {
    pub critical_path_transistors: u32,
    pub total_transistors: u32,
    /// Largest transistor count of any single layer (transistors in parallel).
    pub max_breadth: u32,
    /// Largest number of other wires any single P-box wire crosses.
    pub wire_crossovers: u32,
}

impl HardwareCost {
    pub fn satisfies_c1(&self) -> bool {
        self.critical_path_transistors <= C1_MAX_CRITICAL_PATH
    }

    /// Cost of a layer placed after `self`.
    pub fn then(&self, layer: &HardwareCost) -> HardwareCost {
        HardwareCost {
            critical_path_transistors: self.critical_path_transistors
                + layer.critical_path_transistors,
            total_transistors: self.total_transistors + layer.total_transistors,
            max_breadth: self.max_breadth.max(layer.max_breadth),
            wire_crossovers: self.wire_crossovers.max(layer.wire_crossovers),
        }
    }

    /// Cost of two primitives side by side in one layer.
    pub fn beside(&self, other: &HardwareCost) -> HardwareCost {
        HardwareCost {
            critical_path_transistors: self
                .critical_path_transistors
                .max(other.critical_path_transistors),
            total_transistors: self.total_transistors + other.total_transistors,
            max_breadth: self.max_breadth + other.max_breadth,
            wire_crossovers: self.wire_crossovers.max(other.wire_crossovers),
        }
    }
}

/// Number of XOR levels needed to reduce `fan_in` inputs to one.
pub fn xor_levels(fan_in: usize) -> u32 {
    if fan_in <= 1 {
        0
    } else {
        usize::BITS - (fan_in - 1).leading_zeros()
    }
}

/// Per-wire crossing counts of a permutation (output j driven by input perm[j]);
/// returns the maximum.
pub fn max_crossovers(perm: &[u16]) -> u32 {
    let n = perm.len();
    let mut best = 0;
    for a in 0..n {
        let mut c = 0;
        for b in 0..n {
            if a != b && ((perm[a] < perm[b]) != (a < b)) {
                c += 1;
            }
        }
        best = best.max(c);
    }
    best
}
