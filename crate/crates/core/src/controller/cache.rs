use crate::align::{psu_compare, DeltaSet, ScoreState, TopK};
use crate::error::Result;
use crate::hdc::Hypervector;
use crate::memory::BankMask;
use crate::reasoner::FinalScores;

#[derive(Clone, Debug)]
pub struct CacheLine {
    pub id: u64,
    /// Accumulators; the baseline is the cached query.
    pub state: ScoreState,
    pub output: FinalScores,
    pub topk: TopK,
    pub stamp: u64,
}

impl CacheLine {
    pub fn query(&self) -> &Hypervector {
        self.state.baseline()
    }

    pub fn mask(&self) -> &BankMask {
        self.state.mask()
    }
}

#[derive(Clone, Debug)]
pub struct Lookup {
    /// Position of the best line in the cache.
    pub slot: Option<usize>,
    pub rho: f64,
    pub delta: Option<DeltaSet>,
}

/// Last `K` queries with their accumulators and outputs, LRU evicted.
#[derive(Clone, Debug)]
pub struct QueryCache {
    depth: usize,
    lines: Vec<CacheLine>,
    clock: u64,
    next_id: u64,
}

impl QueryCache {
    pub fn new(depth: usize) -> Self {
        QueryCache {
            depth: depth.max(1),
            lines: Vec::new(),
            clock: 0,
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn lines(&self) -> &[CacheLine] {
        &self.lines
    }

    pub fn line(&self, slot: usize) -> &CacheLine {
        &self.lines[slot]
    }

    pub fn clear(&mut self) {
        self.lines.clear();
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Best line under `mask`; ties go to the most recently used line.
    /// Lines tagged with any other mask are skipped.
    pub fn lookup(&self, q: &Hypervector, mask: &BankMask, capacity: usize) -> Result<Lookup> {
        let mut best: Option<(usize, f64, DeltaSet)> = None;
        for (slot, line) in self.lines.iter().enumerate() {
            if line.mask() != mask {
                continue;
            }
            let (rho, delta) = psu_compare(q, line.query(), mask, capacity)?;
            let better = match &best {
                None => true,
                Some((b, brho, _)) => rho > *brho || (rho == *brho && line.stamp > self.lines[*b].stamp),
            };
            if better {
                best = Some((slot, rho, delta));
            }
        }
        Ok(match best {
            Some((slot, rho, delta)) => Lookup {
                slot: Some(slot),
                rho,
                delta: Some(delta),
            },
            None => Lookup {
                slot: None,
                rho: -1.0,
                delta: None,
            },
        })
    }

    pub fn touch(&mut self, slot: usize) {
        let stamp = self.tick();
        self.lines[slot].stamp = stamp;
    }

    /// Replaces a line's contents after a delta update and marks it MRU.
    pub fn update(&mut self, slot: usize, state: ScoreState, output: FinalScores, topk: TopK) {
        let stamp = self.tick();
        let line = &mut self.lines[slot];
        line.state = state;
        line.output = output;
        line.topk = topk;
        line.stamp = stamp;
    }

    /// Inserts a new MRU line, evicting the least recent beyond depth.
    pub fn insert(&mut self, state: ScoreState, output: FinalScores, topk: TopK) -> u64 {
        let stamp = self.tick();
        let id = self.next_id;
        self.next_id += 1;
        self.lines.push(CacheLine {
            id,
            state,
            output,
            topk,
            stamp,
        });
        while self.lines.len() > self.depth {
            let lru = self
                .lines
                .iter()
                .enumerate()
                .min_by_key(|(_, l)| l.stamp)
                .map(|(i, _)| i)
                .expect("non-empty");
            self.lines.remove(lru);
        }
        id
    }
}
