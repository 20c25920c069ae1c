//! Constraint-driven generation of remapping functions, their statistical
//! validation, and final selection per role.
//!
//! Candidates grow one layer at a time. After each layer the design is
//! checked against the hardware constraints and lands in one of three
//! states: complete (stored), violating (discarded, generation restarts),
//! or incomplete (continue, with primitive-selection weights shifted toward
//! compression when the remaining width budget gets tight).

mod quality;
mod select;

pub use quality::{
    eval_avalanche, eval_uniformity, eval_uniformity_field, evaluate, ideal_uniformity_cv,
    score_candidate, AvalancheStats, BitFunction, QualityReport, DEFAULT_WEIGHTS, MAX_BIN_BITS,
};
pub use select::{select_remaps, EvalSettings, LedgerRow, Role, Selection};

use crate::error::{Error, Result};
use crate::remap::{sbox, HardwareCost, Layer, LayeredFunction, Placement, Primitive, C1_MAX_CRITICAL_PATH};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Attempts per candidate before giving up.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConstraints {
    pub input_width: u32,
    pub output_width: u32,
    pub max_critical_path: u32,
    pub max_breadth: u32,
    pub max_total_transistors: u32,
    pub max_layers: u32,
    pub max_wire_crossover: u32,
    /// Substitution layers required after the last compression.
    pub min_final_mix_layers: u32,
    pub seed: u64,
}

impl GenConstraints {
    pub fn new(input_width: u32, output_width: u32, seed: u64) -> Self {
        Self {
            input_width,
            output_width,
            max_critical_path: C1_MAX_CRITICAL_PATH,
            max_breadth: 2_000,
            max_total_transistors: 6_000,
            max_layers: 10,
            max_wire_crossover: 128,
            min_final_mix_layers: 2,
            seed,
        }
    }

    pub fn for_role(role: Role, seed: u64) -> Self {
        Self::new(role.input_width(), role.output_width(), seed)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.input_width,
            self.output_width,
            self.max_critical_path,
            self.max_breadth,
            self.max_total_transistors,
            self.max_layers,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("generation constraints must be positive".into()));
        }
        if self.input_width > 128 || self.output_width > self.input_width {
            return Err(Error::Config(format!(
                "cannot generate {}→{} functions",
                self.input_width, self.output_width
            )));
        }
        Ok(())
    }

    fn admits(&self, c: &HardwareCost) -> bool {
        c.critical_path_transistors <= self.max_critical_path
            && c.max_breadth <= self.max_breadth
            && c.total_transistors <= self.max_total_transistors
            && c.wire_crossovers <= self.max_wire_crossover
    }
}

/// Primitives the generator may draw from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitivePool {
    pub sbox4: Vec<[u8; 16]>,
    pub sbox3: Vec<[u8; 8]>,
    pub pbox: bool,
    pub csbox: bool,
    pub xor_fold: bool,
}

impl Default for PrimitivePool {
    fn default() -> Self {
        Self {
            sbox4: vec![sbox::PRESENT, sbox::SPONGENT],
            sbox3: sbox::SBOX3_DEFAULTS.to_vec(),
            pbox: true,
            csbox: true,
            xor_fold: true,
        }
    }
}

impl PrimitivePool {
    pub fn is_empty(&self) -> bool {
        self.sbox4.is_empty() && self.sbox3.is_empty() && !self.pbox && !self.csbox && !self.xor_fold
    }

    fn can_mix(&self) -> bool {
        !self.sbox4.is_empty() || !self.sbox3.is_empty()
    }

    fn can_compress(&self) -> bool {
        self.csbox || self.xor_fold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Mix,
    Permute,
    Compress,
}

struct Weights {
    mix: f64,
    permute: f64,
    compress: f64,
}

/// Gain applied to (width − output) / layers_remaining when boosting compression.
const COMPRESS_GAIN: f64 = 0.15;
/// Probability that a compression input also feeds a second XOR tree.
const SECOND_TAP_PROB: f64 = 0.5;

pub fn generate_candidates(
    c: &GenConstraints,
    pool: &PrimitivePool,
    count: usize,
) -> Result<Vec<LayeredFunction>> {
    c.validate()?;
    if pool.is_empty() {
        return Err(Error::Config("primitive pool is empty".into()));
    }
    if count == 0 {
        return Err(Error::Config("candidate count must be positive".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(c, pool, derive_seed(c.seed, i as u64), i))
        .collect()
}

fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step over (seed, index)
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn generate_one(c: &GenConstraints, pool: &PrimitivePool, seed: u64, index: usize) -> Result<LayeredFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(mut f) = attempt(c, pool, &mut rng)? {
            f.set_name(format!("cand{index}"));
            return Ok(f);
        }
    }
    Err(Error::Unsatisfiable { attempts: MAX_ATTEMPTS })
}

/// One growth attempt; `None` when the design was discarded.
fn attempt(c: &GenConstraints, pool: &PrimitivePool, rng: &mut ChaCha8Rng) -> Result<Option<LayeredFunction>> {
    let mut f = LayeredFunction::new("candidate", c.input_width, Vec::new())?;
    let mut last: Option<LayerKind> = None;
    let mut mixes_since_compress = 0u32;
    let mut compressed_once = c.input_width == c.output_width;

    for depth in 0..c.max_layers {
        let width = f.output_width();
        let remaining = (c.max_layers - depth) as f64;
        let mut w = Weights { mix: 1.0, permute: 0.8, compress: 0.2 };
        w.compress += COMPRESS_GAIN * (width - c.output_width) as f64 / remaining;
        if last == Some(LayerKind::Permute) || !pool.pbox || width < 2 {
            w.permute = 0.0;
        }
        if last == Some(LayerKind::Mix) {
            w.mix = 0.0;
        }
        if width == c.output_width || !pool.can_compress() {
            w.compress = 0.0;
        }
        if !pool.can_mix() || width < 3 {
            w.mix = 0.0;
        }
        let total = w.mix + w.permute + w.compress;
        if total == 0.0 {
            return Ok(None);
        }
        let pick = rng.gen::<f64>() * total;
        let kind = if pick < w.mix {
            LayerKind::Mix
        } else if pick < w.mix + w.permute {
            LayerKind::Permute
        } else {
            LayerKind::Compress
        };

        let layer = match kind {
            LayerKind::Mix => mix_layer(width, pool, rng)?,
            LayerKind::Permute => match permute_layer(width, c.max_wire_crossover, pool, rng)? {
                Some(l) => l,
                None => return Ok(None),
            },
            LayerKind::Compress => match compress_layer(width, c.output_width, pool, rng)? {
                Some(l) => l,
                None => return Ok(None),
            },
        };
        f.push_layer(layer)?;

        // ii) violation: discard
        if !c.admits(&f.cost()) {
            return Ok(None);
        }
        match kind {
            LayerKind::Mix => mixes_since_compress += 1,
            LayerKind::Compress => {
                mixes_since_compress = 0;
                compressed_once = true;
            }
            LayerKind::Permute => {}
        }
        last = Some(kind);

        // i) complete: store
        if f.output_width() == c.output_width
            && compressed_once
            && kind == LayerKind::Mix
            && mixes_since_compress >= c.min_final_mix_layers
        {
            return Ok(Some(f));
        }
        // iii) incomplete: continue with adjusted weights
    }
    Ok(None)
}

fn mix_layer(width: u32, pool: &PrimitivePool, rng: &mut ChaCha8Rng) -> Result<Layer> {
    let (fours, threes) = tile(width, !pool.sbox4.is_empty(), !pool.sbox3.is_empty());
    let sizes = std::iter::repeat(4).take(fours).chain(std::iter::repeat(3).take(threes));
    let mut placements = Vec::with_capacity(fours + threes);
    let mut lo = 0;
    for s in sizes {
        let prim = if s == 4 {
            Primitive::sbox4(*pool.sbox4.choose(rng).expect("sbox4 pool"))?
        } else {
            Primitive::sbox3(*pool.sbox3.choose(rng).expect("sbox3 pool"))?
        };
        placements.push(Placement { lo, prim });
        lo += s;
    }
    Layer::new(width, placements)
}

/// Number of 4-bit and 3-bit boxes covering as much of `width` as possible.
fn tile(width: u32, have4: bool, have3: bool) -> (usize, usize) {
    let w = width as usize;
    match (have4, have3) {
        (true, false) => (w / 4, 0),
        (false, true) => (0, w / 3),
        (false, false) => (0, 0),
        (true, true) => {
            let threes = match w % 4 {
                0 => 0,
                1 => 3,
                2 => 2,
                _ => 1,
            };
            if threes * 3 > w {
                (0, w / 3)
            } else {
                ((w - threes * 3) / 4, threes)
            }
        }
    }
}

fn permute_layer(width: u32, max_cross: u32, pool: &PrimitivePool, rng: &mut ChaCha8Rng) -> Result<Option<Layer>> {
    let (fours, threes) = tile(width, !pool.sbox4.is_empty(), !pool.sbox3.is_empty());
    let mut groups: Vec<u32> = std::iter::repeat(4).take(fours).chain(std::iter::repeat(3).take(threes)).collect();
    let covered: u32 = groups.iter().sum();
    groups.extend(std::iter::repeat(1).take((width - covered) as usize));
    for _ in 0..32 {
        let Some(perm) = spread_permutation(&groups, rng) else { continue };
        if crate::remap::max_crossovers(&perm) <= max_cross {
            let prim = Primitive::pbox(perm)?;
            return Ok(Some(Layer::new(width, vec![Placement { lo: 0, prim }])?));
        }
    }
    Ok(None)
}

fn compress_layer(
    width: u32,
    out: u32,
    pool: &PrimitivePool,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Layer>> {
    let target = if width <= 8 * out {
        out
    } else {
        let k = rng.gen_range(2..=4);
        out.max(width.div_ceil(k))
    };
    let use_fold = pool.xor_fold && (!pool.csbox || (width == 2 * target && rng.gen_bool(0.5)));
    if use_fold {
        if width % 2 != 0 || width / 2 < out {
            return Ok(None);
        }
        let prim = Primitive::xor_fold(width)?;
        return Ok(Some(Layer::new(width, vec![Placement { lo: 0, prim }])?));
    }
    if !pool.csbox || target >= width {
        return Ok(None);
    }
    for _ in 0..32 {
        let rows = xor_wiring(width, target, rng);
        if gf2_rank(&rows) == target as usize {
            let prim = Primitive::csbox(width, rows)?;
            return Ok(Some(Layer::new(width, vec![Placement { lo: 0, prim }])?));
        }
    }
    Ok(None)
}

/// Random wiring between consecutive substitution tilings such that the
/// output bits of each source box land in pairwise distinct destination
/// boxes. `groups` lists box widths in bit order (same tiling on both sides).
fn spread_permutation(groups: &[u32], rng: &mut ChaCha8Rng) -> Option<Vec<u16>> {
    let starts: Vec<u32> = groups
        .iter()
        .scan(0, |acc, &g| {
            let s = *acc;
            *acc += g;
            Some(s)
        })
        .collect();
    let width: u32 = groups.iter().sum();
    'retry: for _ in 0..64 {
        let mut free: Vec<Vec<u32>> = groups
            .iter()
            .zip(&starts)
            .map(|(&g, &s)| {
                let mut slots: Vec<u32> = (s..s + g).collect();
                slots.shuffle(rng);
                slots
            })
            .collect();
        // perm[dst] = src
        let mut perm = vec![0u16; width as usize];
        let mut order: Vec<usize> = (0..groups.len()).collect();
        // largest boxes first: they are hardest to place
        order.shuffle(rng);
        order.sort_by_key(|&b| std::cmp::Reverse(groups[b]));
        for b in order {
            let mut used = Vec::with_capacity(4);
            for src in starts[b]..starts[b] + groups[b] {
                let mut options: Vec<usize> = (0..groups.len())
                    .filter(|d| !free[*d].is_empty() && !used.contains(d))
                    .collect();
                if options.is_empty() && groups.len() < groups[b] as usize {
                    // too few boxes to keep outputs apart
                    options = (0..groups.len()).filter(|d| !free[*d].is_empty()).collect();
                }
                let Some(&d) = options.choose(rng) else { continue 'retry };
                let dst = free[d].pop().expect("free slot");
                perm[dst as usize] = src as u16;
                used.push(d);
            }
        }
        return Some(perm);
    }
    None
}

/// Every input feeds one tree chosen round-robin over a shuffled order, and
/// with probability `SECOND_TAP_PROB` one more tree.
fn xor_wiring(width: u32, target: u32, rng: &mut ChaCha8Rng) -> Vec<Vec<u16>> {
    let mut order: Vec<u16> = (0..width as u16).collect();
    order.shuffle(rng);
    let mut rows = vec![Vec::new(); target as usize];
    for (k, &i) in order.iter().enumerate() {
        let r = k % target as usize;
        rows[r].push(i);
        if target > 1 && rng.gen_bool(SECOND_TAP_PROB) {
            let mut r2 = rng.gen_range(0..target as usize - 1);
            if r2 >= r {
                r2 += 1;
            }
            rows[r2].push(i);
        }
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    rows
}

fn gf2_rank(rows: &[Vec<u16>]) -> usize {
    let mut m: Vec<u128> = rows
        .iter()
        .map(|r| r.iter().fold(0u128, |acc, &i| acc | (1u128 << i)))
        .collect();
    let mut rank = 0;
    for bit in 0..128 {
        let Some(p) = (rank..m.len()).find(|&k| (m[k] >> bit) & 1 == 1) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank];
        for (k, row) in m.iter_mut().enumerate() {
            if k != rank && (*row >> bit) & 1 == 1 {
                *row ^= pivot;
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r1_constraints(seed: u64) -> GenConstraints {
        GenConstraints { max_layers: 8, ..GenConstraints::new(80, 22, seed) }
    }

    #[test]
    fn r1_candidates_meet_constraints() {
        let c = r1_constraints(7);
        let fs = generate_candidates(&c, &PrimitivePool::default(), 10).unwrap();
        assert_eq!(fs.len(), 10);
        for f in &fs {
            assert_eq!(f.input_width(), 80);
            assert_eq!(f.output_width(), 22);
            let cost = f.cost();
            assert!(cost.critical_path_transistors <= 45);
            assert!(cost.satisfies_c1());
            assert!(f.unconsumed_output().is_none());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = r1_constraints(11);
        let a = generate_candidates(&c, &PrimitivePool::default(), 4).unwrap();
        let b = generate_candidates(&c, &PrimitivePool::default(), 4).unwrap();
        assert_eq!(a, b);
        let d = generate_candidates(&r1_constraints(12), &PrimitivePool::default(), 4).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn impossible_critical_path() {
        let c = GenConstraints { max_critical_path: 1, ..r1_constraints(7) };
        assert_eq!(
            generate_candidates(&c, &PrimitivePool::default(), 1).unwrap_err(),
            Error::Unsatisfiable { attempts: MAX_ATTEMPTS }
        );
    }

    #[test]
    fn bad_inputs() {
        let c = r1_constraints(1);
        assert!(generate_candidates(&c, &PrimitivePool::default(), 0).is_err());
        let empty = PrimitivePool { sbox4: vec![], sbox3: vec![], pbox: false, csbox: false, xor_fold: false };
        assert!(generate_candidates(&c, &empty, 1).is_err());
        let c = GenConstraints { output_width: 90, ..c };
        assert!(generate_candidates(&c, &PrimitivePool::default(), 1).is_err());
    }

    #[test]
    fn tiling_covers_width() {
        for w in 6..=128u32 {
            let (f, t) = tile(w, true, true);
            assert_eq!(f as u32 * 4 + t as u32 * 3, w, "width {w}");
        }
        assert_eq!(tile(5, true, true), (0, 1));
        assert_eq!(tile(10, true, false), (2, 0));
    }

    #[test]
    fn wiring_is_full_rank_when_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = compress_layer(80, 22, &PrimitivePool::default(), &mut rng).unwrap().unwrap();
        assert_eq!(layer.output_width(), 22);
        match &layer.placements()[0].prim {
            Primitive::Csbox { rows, .. } => assert_eq!(gf2_rank(rows), 22),
            p => panic!("unexpected {p:?}"),
        }
        assert_eq!(gf2_rank(&[vec![0, 1], vec![1, 2], vec![0, 2]]), 2);
    }
}
