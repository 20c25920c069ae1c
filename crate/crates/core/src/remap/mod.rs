//! Remapping functions built from layers of hardware primitives.
//!
//! A [`LayeredFunction`] is an ordered list of [`Layer`]s. Each layer places
//! primitives side by side over disjoint bit ranges of its input; bits not
//! covered by any primitive pass through as plain wires. The layer output is
//! assembled in ascending input position, each primitive emitting its output
//! bits where its input range began.

mod cost;
mod netlist;
pub mod sbox;

pub use cost::{max_crossovers, xor_levels, CostTable, HardwareCost, C1_MAX_CRITICAL_PATH};
pub use netlist::{parse_netlist, serialize_netlist};

use crate::bits::{mask, BitVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Sbox4,
    Sbox3,
    Pbox,
    Csbox,
    XorFold,
}

/// One hardware building block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Primitive {
    /// 4 → 4 substitution.
    Sbox4([u8; 16]),
    /// 3 → 3 substitution.
    Sbox3([u8; 8]),
    /// n → n wire permutation: output bit j is input bit `perm[j]`.
    Pbox(Vec<u16>),
    /// m → n XOR compression: output bit j is the XOR of input bits `rows[j]`.
    Csbox { inputs: u32, rows: Vec<Vec<u16>>, masks: Vec<u128> },
    /// 2k → k pairwise XOR of the low and high halves.
    XorFold { half: u32 },
}

impl Primitive {
    pub fn sbox4(table: [u8; 16]) -> Result<Self> {
        if !sbox::is_bijection(&table) {
            return Err(Error::InvalidPrimitive("sbox4 table is not a bijection".into()));
        }
        Ok(Primitive::Sbox4(table))
    }

    pub fn sbox3(table: [u8; 8]) -> Result<Self> {
        if !sbox::is_bijection(&table) {
            return Err(Error::InvalidPrimitive("sbox3 table is not a bijection".into()));
        }
        Ok(Primitive::Sbox3(table))
    }

    pub fn pbox(perm: Vec<u16>) -> Result<Self> {
        if perm.is_empty() || perm.len() > 128 {
            return Err(Error::InvalidPrimitive("pbox width must be 1..=128".into()));
        }
        let mut seen = vec![false; perm.len()];
        for p in perm.iter().map(|&p| p as usize) {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidPrimitive("pbox is not a permutation".into()));
            }
            seen[p] = true;
        }
        Ok(Primitive::Pbox(perm))
    }

    pub fn csbox(inputs: u32, rows: Vec<Vec<u16>>) -> Result<Self> {
        if inputs == 0 || inputs > 128 {
            return Err(Error::InvalidPrimitive("csbox input width must be 1..=128".into()));
        }
        if rows.is_empty() || rows.len() as u32 >= inputs {
            return Err(Error::InvalidPrimitive(format!(
                "csbox output width {} must be in 1..{}",
                rows.len(),
                inputs
            )));
        }
        let mut used = vec![false; inputs as usize];
        let mut masks = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidPrimitive(format!("csbox output {j} has no inputs")));
            }
            let mut m = 0u128;
            for &i in row {
                if i as u32 >= inputs {
                    return Err(Error::InvalidPrimitive(format!(
                        "csbox output {j} wires input {i} beyond width {inputs}"
                    )));
                }
                if m & (1 << i) != 0 {
                    return Err(Error::InvalidPrimitive(format!(
                        "csbox output {j} wires input {i} twice"
                    )));
                }
                m |= 1 << i;
                used[i as usize] = true;
            }
            masks.push(m);
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPrimitive(format!("csbox input {i} is not wired")));
        }
        Ok(Primitive::Csbox { inputs, rows, masks })
    }

    pub fn xor_fold(inputs: u32) -> Result<Self> {
        if inputs < 2 || inputs % 2 != 0 || inputs > 128 {
            return Err(Error::InvalidPrimitive("xor_fold input width must be even, 2..=128".into()));
        }
        Ok(Primitive::XorFold { half: inputs / 2 })
    }

    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Sbox4(_) => PrimitiveKind::Sbox4,
            Primitive::Sbox3(_) => PrimitiveKind::Sbox3,
            Primitive::Pbox(_) => PrimitiveKind::Pbox,
            Primitive::Csbox { .. } => PrimitiveKind::Csbox,
            Primitive::XorFold { .. } => PrimitiveKind::XorFold,
        }
    }

    pub fn input_width(&self) -> u32 {
        match self {
            Primitive::Sbox4(_) => 4,
            Primitive::Sbox3(_) => 3,
            Primitive::Pbox(p) => p.len() as u32,
            Primitive::Csbox { inputs, .. } => *inputs,
            Primitive::XorFold { half } => 2 * half,
        }
    }

    pub fn output_width(&self) -> u32 {
        match self {
            Primitive::Sbox4(_) => 4,
            Primitive::Sbox3(_) => 3,
            Primitive::Pbox(p) => p.len() as u32,
            Primitive::Csbox { rows, .. } => rows.len() as u32,
            Primitive::XorFold { half } => *half,
        }
    }

    /// Evaluates the primitive on its local input bits.
    #[inline]
    pub fn eval(&self, x: u128) -> u128 {
        match self {
            Primitive::Sbox4(t) => t[(x & 0xf) as usize] as u128,
            Primitive::Sbox3(t) => t[(x & 0x7) as usize] as u128,
            Primitive::Pbox(perm) => {
                let mut y = 0u128;
                for (j, &src) in perm.iter().enumerate() {
                    y |= ((x >> src) & 1) << j;
                }
                y
            }
            Primitive::Csbox { masks, .. } => {
                let mut y = 0u128;
                for (j, &m) in masks.iter().enumerate() {
                    y |= ((x & m).count_ones() as u128 & 1) << j;
                }
                y
            }
            Primitive::XorFold { half } => (x ^ (x >> half)) & mask(*half),
        }
    }

    pub fn cost(&self, table: &CostTable) -> HardwareCost {
        let (depth, total, crossovers) = match self {
            Primitive::Sbox4(_) => (table.sbox4_depth, table.sbox4_total, 0),
            Primitive::Sbox3(_) => (table.sbox3_depth, table.sbox3_total, 0),
            Primitive::Pbox(p) => (0, 0, max_crossovers(p)),
            Primitive::Csbox { rows, .. } => {
                let max_fan_in = rows.iter().map(Vec::len).max().unwrap_or(0);
                let gates: usize = rows.iter().map(|r| r.len() - 1).sum();
                (
                    table.xor_level_depth * xor_levels(max_fan_in),
                    table.xor2_total * gates as u32,
                    0,
                )
            }
            Primitive::XorFold { half } => (table.xor_level_depth, table.xor2_total * half, 0),
        };
        HardwareCost {
            critical_path_transistors: depth,
            total_transistors: total,
            max_breadth: total,
            wire_crossovers: crossovers,
        }
    }
}

/// A primitive placed at input bit `lo` of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub lo: u32,
    pub prim: Primitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    /// Copy `len` bits from `src` to `dst`.
    Pass { src: u32, len: u32, dst: u32 },
    /// Run placement `idx` and write its output at `dst`.
    Prim { idx: usize, dst: u32 },
}

/// A parallel placement of primitives covering part of the layer input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    input_width: u32,
    output_width: u32,
    placements: Vec<Placement>,
    plan: Vec<Step>,
}

impl Layer {
    pub fn new(input_width: u32, mut placements: Vec<Placement>) -> Result<Self> {
        if input_width == 0 || input_width > 128 {
            return Err(Error::InvalidWidth(input_width));
        }
        placements.sort_by_key(|p| p.lo);
        let mut plan = Vec::new();
        let mut pos = 0u32;
        let mut out = 0u32;
        for (idx, p) in placements.iter().enumerate() {
            let w = p.prim.input_width();
            if p.lo < pos {
                return Err(Error::InvalidPrimitive(format!(
                    "placement at bit {} overlaps previous placement",
                    p.lo
                )));
            }
            if p.lo + w > input_width {
                return Err(Error::WidthMismatch { expected: input_width, got: p.lo + w });
            }
            if p.lo > pos {
                plan.push(Step::Pass { src: pos, len: p.lo - pos, dst: out });
                out += p.lo - pos;
            }
            plan.push(Step::Prim { idx, dst: out });
            out += p.prim.output_width();
            pos = p.lo + w;
        }
        if pos < input_width {
            plan.push(Step::Pass { src: pos, len: input_width - pos, dst: out });
            out += input_width - pos;
        }
        if out > 128 {
            return Err(Error::InvalidWidth(out));
        }
        Ok(Self { input_width, output_width: out, placements, plan })
    }

    pub fn input_width(&self) -> u32 {
        self.input_width
    }

    pub fn output_width(&self) -> u32 {
        self.output_width
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    #[inline]
    pub fn eval(&self, x: u128) -> u128 {
        let mut y = 0u128;
        for step in &self.plan {
            match *step {
                Step::Pass { src, len, dst } => y |= ((x >> src) & mask(len)) << dst,
                Step::Prim { idx, dst } => {
                    let p = &self.placements[idx];
                    let local = (x >> p.lo) & mask(p.prim.input_width());
                    y |= p.prim.eval(local) << dst;
                }
            }
        }
        y
    }

    pub fn cost(&self, table: &CostTable) -> HardwareCost {
        self.placements
            .iter()
            .map(|p| p.prim.cost(table))
            .fold(HardwareCost::default(), |acc, c| acc.beside(&c))
    }

    /// Maps a per-input-bit flag (e.g. "touched by a primitive") to the
    /// layer output: passthrough bits keep their flag, primitive outputs
    /// become `true`.
    fn propagate_touched(&self, touched: &[bool]) -> Vec<bool> {
        let mut out = vec![false; self.output_width as usize];
        for step in &self.plan {
            match *step {
                Step::Pass { src, len, dst } => {
                    for k in 0..len {
                        out[(dst + k) as usize] = touched[(src + k) as usize];
                    }
                }
                Step::Prim { idx, dst } => {
                    for k in 0..self.placements[idx].prim.output_width() {
                        out[(dst + k) as usize] = true;
                    }
                }
            }
        }
        out
    }
}

/// A remapping function: an ordered composition of layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredFunction {
    name: String,
    input_width: u32,
    output_width: u32,
    layers: Vec<Layer>,
}

impl LayeredFunction {
    pub fn new(name: impl Into<String>, input_width: u32, layers: Vec<Layer>) -> Result<Self> {
        if input_width == 0 || input_width > 128 {
            return Err(Error::InvalidWidth(input_width));
        }
        let mut w = input_width;
        for (k, layer) in layers.iter().enumerate() {
            if layer.input_width != w {
                return Err(Error::NetlistLayer {
                    layer: k,
                    msg: format!("input width {} does not match previous width {}", layer.input_width, w),
                });
            }
            w = layer.output_width;
        }
        Ok(Self { name: name.into(), input_width, output_width: w, layers })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn input_width(&self) -> u32 {
        self.input_width
    }

    pub fn output_width(&self) -> u32 {
        self.output_width
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Appends a layer; its input width must equal the current output width.
    pub fn push_layer(&mut self, layer: Layer) -> Result<()> {
        if layer.input_width != self.output_width {
            return Err(Error::NetlistLayer {
                layer: self.layers.len(),
                msg: format!(
                    "input width {} does not match previous width {}",
                    layer.input_width, self.output_width
                ),
            });
        }
        self.output_width = layer.output_width;
        self.layers.push(layer);
        Ok(())
    }

    pub fn apply(&self, input: &BitVec) -> Result<BitVec> {
        if input.width() != self.input_width {
            return Err(Error::WidthMismatch { expected: self.input_width, got: input.width() });
        }
        BitVec::new(self.output_width, self.eval(input.bits()))
    }

    /// Unchecked evaluation on a raw value; bits above the input width are ignored.
    #[inline]
    pub fn eval(&self, x: u128) -> u128 {
        let mut v = x & mask(self.input_width);
        for layer in &self.layers {
            v = layer.eval(v);
        }
        v
    }

    pub fn cost(&self) -> HardwareCost {
        self.cost_with(&CostTable::default())
    }

    pub fn cost_with(&self, table: &CostTable) -> HardwareCost {
        self.layers
            .iter()
            .fold(HardwareCost::default(), |acc, l| acc.then(&l.cost(table)))
    }

    /// Index of the first output bit that is an untouched passthrough of an
    /// input bit, if any.
    pub fn unconsumed_output(&self) -> Option<usize> {
        let mut touched = vec![false; self.input_width as usize];
        for layer in &self.layers {
            touched = layer.propagate_touched(&touched);
        }
        touched.iter().position(|t| !t)
    }
}

/// Aggregate hardware cost under the default cost table.
pub fn cost_of(f: &LayeredFunction) -> HardwareCost {
    f.cost()
}

pub fn apply(f: &LayeredFunction, input: &BitVec) -> Result<BitVec> {
    f.apply(input)
}
