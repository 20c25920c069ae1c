//! Set-associative branch target buffer with true LRU.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtbEntry {
    pub valid: bool,
    pub tag: u64,
    pub offset: u32,
    /// Low target bits, XOR-encrypted under token models.
    pub stored_target: u64,
    /// 0 is most recently used.
    pub lru_rank: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtbStats {
    pub hits: u64,
    pub allocations: u64,
    pub evictions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Updated,
    Allocated,
    /// A valid entry with a different (tag, offset) was displaced.
    Evicted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Btb {
    sets: usize,
    ways: usize,
    entries: Vec<BtbEntry>,
    pub stats: BtbStats,
}

impl Btb {
    pub fn new(sets: usize, ways: usize) -> Self {
        let mut b = Btb { sets, ways, entries: Vec::new(), stats: BtbStats::default() };
        b.flush();
        b
    }

    pub fn flush(&mut self) {
        self.entries = (0..self.sets * self.ways)
            .map(|i| BtbEntry { lru_rank: (i % self.ways) as u8, ..Default::default() })
            .collect();
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn set(&self, set: usize) -> &[BtbEntry] {
        &self.entries[set * self.ways..(set + 1) * self.ways]
    }

    fn set_mut(&mut self, set: usize) -> &mut [BtbEntry] {
        &mut self.entries[set * self.ways..(set + 1) * self.ways]
    }

    pub fn lookup(&self, set: usize, tag: u64, offset: u32) -> Option<usize> {
        self.set(set).iter().position(|e| e.valid && e.tag == tag && e.offset == offset)
    }

    pub fn read(&self, set: usize, way: usize) -> &BtbEntry {
        &self.set(set)[way]
    }

    pub fn touch(&mut self, set: usize, way: usize) {
        let s = self.set_mut(set);
        let r = s[way].lru_rank;
        for e in s.iter_mut() {
            if e.lru_rank < r {
                e.lru_rank += 1;
            }
        }
        s[way].lru_rank = 0;
    }

    /// Writes (tag, offset) → target, replacing the LRU way on a miss.
    pub fn insert(&mut self, set: usize, tag: u64, offset: u32, stored_target: u64) -> Insert {
        if let Some(w) = self.lookup(set, tag, offset) {
            self.set_mut(set)[w].stored_target = stored_target;
            self.touch(set, w);
            self.stats.hits += 1;
            return Insert::Updated;
        }
        let s = self.set(set);
        let way = s.iter().position(|e| !e.valid).unwrap_or_else(|| {
            s.iter().enumerate().max_by_key(|(_, e)| e.lru_rank).map(|(i, _)| i).expect("ways > 0")
        });
        let evicted = s[way].valid;
        let e = &mut self.set_mut(set)[way];
        e.valid = true;
        e.tag = tag;
        e.offset = offset;
        e.stored_target = stored_target;
        self.touch(set, way);
        self.stats.allocations += 1;
        if evicted {
            self.stats.evictions += 1;
            Insert::Evicted
        } else {
            Insert::Allocated
        }
    }

    pub fn occupancy(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }
}
