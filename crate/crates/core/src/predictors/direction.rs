//! Conditional-direction predictors: gshare PHT, TAGE-lite and a perceptron.

use super::config::{DirectionKind, PredictorConfig};
use super::remaps::RemapSet;
use crate::bits::{mask64, xor_fold};
use serde::{Deserialize, Serialize};

/// Inputs that decide how a structure is indexed for one lookup.
#[derive(Clone, Copy)]
pub(crate) struct Keying<'a> {
    pub remaps: Option<&'a RemapSet>,
    pub psi: u32,
    /// Thread bit forced into the top index bit (partitioned model).
    pub partition: Option<u64>,
}

impl Keying<'_> {
    pub fn place(&self, idx: u64, bits: u32) -> u64 {
        match self.partition {
            Some(t) if bits > 0 => (idx & mask64(bits - 1)) | (t & 1) << (bits - 1),
            _ => idx & mask64(bits),
        }
    }
}

/// Which component produced a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirSource {
    Pht,
    Bimodal,
    Tagged(u8),
    Perceptron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DirLookup {
    pub taken: bool,
    pub source: DirSource,
    idx: [u32; 5],
    tags: [u16; 4],
    /// Alternate prediction (TAGE) or perceptron output.
    alt: bool,
    y: i32,
}

const TAGE_HIST: [u32; 4] = [4, 8, 16, 32];
const TAGE_TAG_BITS: [u32; 4] = [8, 8, 12, 12];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct TageEntry {
    valid: bool,
    ctr: i8,
    tag: u16,
    u: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Direction {
    Gshare { pht: Vec<u8>, bits: u32, counter_bits: u32, ghr_bits: u32 },
    Tage { base: Vec<u8>, base_bits: u32, banks: [Vec<TageEntry>; 4], bank_bits: [u32; 4] },
    Perceptron { w: Vec<i16>, row_bits: u32, h: u32, theta: i32 },
}

fn pc_fold(pc: u64, w: u32) -> u64 {
    xor_fold(pc >> 2, 30, w)
}

fn counter_taken(c: u8, bits: u32) -> bool {
    c >= 1 << (bits - 1)
}

fn bump(c: &mut u8, taken: bool, bits: u32) {
    let max = mask64(bits) as u8;
    if taken {
        *c = (*c + 1).min(max);
    } else {
        *c = c.saturating_sub(1);
    }
}

impl Direction {
    pub fn new(cfg: &PredictorConfig) -> Self {
        let pb = cfg.pht_index_bits();
        let weak_nt = |bits: u32| ((1u16 << (bits - 1)) - 1) as u8;
        match cfg.model.direction() {
            DirectionKind::Gshare => Direction::Gshare {
                pht: vec![weak_nt(cfg.pht_counter_bits); 1 << pb],
                bits: pb,
                counter_bits: cfg.pht_counter_bits,
                ghr_bits: cfg.ghr_bits,
            },
            DirectionKind::Tage => {
                let base_bits = pb.saturating_sub(2).max(1);
                let narrow = pb.saturating_sub(4).max(1);
                let wide = pb.saturating_sub(1).max(1);
                let bank_bits = [narrow, narrow, wide, wide];
                Direction::Tage {
                    base: vec![1; 1 << base_bits],
                    base_bits,
                    banks: bank_bits.map(|b| vec![TageEntry::default(); 1 << b]),
                    bank_bits,
                }
            }
            DirectionKind::Perceptron => {
                let h = cfg.perceptron_history;
                let row_bits = cfg.perceptron_rows.trailing_zeros();
                Direction::Perceptron {
                    w: vec![0; (1usize << row_bits) * (h as usize + 1)],
                    row_bits,
                    h,
                    theta: (1.93 * h as f64 + 14.0).floor() as i32,
                }
            }
        }
    }

    pub fn flush(&mut self, cfg: &PredictorConfig) {
        *self = Direction::new(cfg);
    }

    /// Checks that every counter is inside its saturating range.
    pub fn counters_in_range(&self) -> bool {
        match self {
            Direction::Gshare { pht, counter_bits, .. } => pht.iter().all(|&c| u64::from(c) <= mask64(*counter_bits)),
            Direction::Tage { base, banks, .. } => {
                base.iter().all(|&c| c <= 3) && banks.iter().flatten().all(|e| (-4..=3).contains(&e.ctr) && e.u <= 3)
            }
            Direction::Perceptron { w, .. } => w.iter().all(|&x| (-128..=127).contains(&x)),
        }
    }

    pub fn predict(&self, k: &Keying, pc: u64, ghr: u64, long_hist: u64) -> DirLookup {
        let mut l = DirLookup { taken: false, source: DirSource::Pht, idx: [0; 5], tags: [0; 4], alt: false, y: 0 };
        match self {
            Direction::Gshare { pht, bits, counter_bits, ghr_bits } => {
                let raw = match k.remaps {
                    Some(r) if *ghr_bits == 0 => r.r3(k.psi, pc),
                    Some(r) => r.r4(k.psi, ghr & mask64(*ghr_bits), pc),
                    None => pc_fold(pc, *bits) ^ xor_fold(ghr, *ghr_bits, *bits),
                };
                let i = k.place(raw, *bits);
                l.idx[0] = i as u32;
                l.taken = counter_taken(pht[i as usize], *counter_bits);
            }
            Direction::Tage { base, base_bits, banks, bank_bits } => {
                let raw = match k.remaps {
                    Some(r) => r.r3(k.psi, pc),
                    None => pc_fold(pc, *base_bits),
                };
                let bi = k.place(raw, *base_bits);
                l.idx[0] = bi as u32;
                let base_taken = counter_taken(base[bi as usize], 2);
                let mut provider: Option<usize> = None;
                let mut alt = base_taken;
                for b in 0..4 {
                    let (i, t) = tage_key(k, b, bank_bits[b], pc, long_hist);
                    l.idx[b + 1] = i as u32;
                    l.tags[b] = t as u16;
                    let e = &banks[b][i as usize];
                    if e.valid && e.tag == t as u16 {
                        if let Some(p) = provider {
                            alt = banks[p][l.idx[p + 1] as usize].ctr >= 0;
                        }
                        provider = Some(b);
                    }
                }
                match provider {
                    Some(p) => {
                        l.taken = banks[p][l.idx[p + 1] as usize].ctr >= 0;
                        l.source = DirSource::Tagged(p as u8);
                        l.alt = alt;
                    }
                    None => {
                        l.taken = base_taken;
                        l.source = DirSource::Bimodal;
                        l.alt = base_taken;
                    }
                }
            }
            Direction::Perceptron { w, row_bits, h, .. } => {
                let raw = match k.remaps {
                    Some(r) => r.rp(k.psi, pc),
                    None => pc_fold(pc, *row_bits),
                };
                let row = k.place(raw, *row_bits) as usize;
                l.idx[0] = row as u32;
                let ws = &w[row * (*h as usize + 1)..(row + 1) * (*h as usize + 1)];
                let mut y = ws[0] as i32;
                for i in 0..*h {
                    let x = if long_hist >> i & 1 == 1 { 1 } else { -1 };
                    y += x * ws[i as usize + 1] as i32;
                }
                l.y = y;
                l.taken = y >= 0;
                l.source = DirSource::Perceptron;
            }
        }
        l
    }

    /// Trains on the outcome. Returns true when a tagged TAGE bank provided
    /// a wrong prediction.
    pub fn update(&mut self, l: &DirLookup, taken: bool, long_hist: u64) -> bool {
        match self {
            Direction::Gshare { pht, counter_bits, .. } => {
                bump(&mut pht[l.idx[0] as usize], taken, *counter_bits);
                false
            }
            Direction::Tage { base, banks, .. } => {
                let misp = l.taken != taken;
                let provider = match l.source {
                    DirSource::Tagged(p) => Some(p as usize),
                    _ => None,
                };
                match provider {
                    Some(p) => {
                        let e = &mut banks[p][l.idx[p + 1] as usize];
                        e.ctr = if taken { (e.ctr + 1).min(3) } else { (e.ctr - 1).max(-4) };
                        if l.taken != l.alt {
                            e.u = if misp { e.u.saturating_sub(1) } else { (e.u + 1).min(3) };
                        }
                    }
                    None => bump(&mut base[l.idx[0] as usize], taken, 2),
                }
                if misp {
                    let start = provider.map_or(0, |p| p + 1);
                    let free = (start..4).find(|&b| banks[b][l.idx[b + 1] as usize].u == 0);
                    match free {
                        Some(b) => {
                            banks[b][l.idx[b + 1] as usize] =
                                TageEntry { valid: true, ctr: if taken { 0 } else { -1 }, tag: l.tags[b], u: 0 };
                        }
                        None => {
                            for b in start..4 {
                                let e = &mut banks[b][l.idx[b + 1] as usize];
                                e.u = e.u.saturating_sub(1);
                            }
                        }
                    }
                }
                misp && provider.is_some()
            }
            Direction::Perceptron { w, h, theta, .. } => {
                if l.taken != taken || l.y.abs() <= *theta {
                    let n = *h as usize + 1;
                    let ws = &mut w[l.idx[0] as usize * n..(l.idx[0] as usize + 1) * n];
                    let t = if taken { 1 } else { -1 };
                    ws[0] = (ws[0] + t).clamp(-128, 127);
                    for i in 0..*h {
                        let x = if long_hist >> i & 1 == 1 { 1 } else { -1 };
                        let v = &mut ws[i as usize + 1];
                        *v = (*v + t * x).clamp(-128, 127);
                    }
                }
                false
            }
        }
    }
}

fn tage_key(k: &Keying, bank: usize, ib: u32, pc: u64, long_hist: u64) -> (u64, u64) {
    let len = TAGE_HIST[bank];
    let tb = TAGE_TAG_BITS[bank];
    let h = long_hist & mask64(len);
    let (i, t) = match k.remaps {
        Some(r) => r.rt(bank >= 2, k.psi, pc, xor_fold(h, len, 16)),
        None => {
            let i = pc_fold(pc, ib) ^ xor_fold(h, len, ib);
            let t = pc_fold(pc >> ib, tb) ^ (xor_fold(h, len, tb.saturating_sub(1)) << 1) ^ bank as u64;
            (i, t)
        }
    };
    (k.place(i, ib), t & mask64(tb))
}
