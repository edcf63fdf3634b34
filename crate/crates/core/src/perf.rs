//! Cycle, traffic-derived energy, and latency accounting.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::hdc::Hypervector;
use crate::memory::{BankMask, ItemMemory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleModel {
    pub clock_hz: f64,
    /// Concepts scored per cycle.
    pub lanes: usize,
    /// Control latch, DMA and FSM cost charged to every window.
    pub overhead_cycles: u64,
    /// Bits compared per PSU cycle.
    pub psu_word_bits: usize,
}

impl Default for CycleModel {
    fn default() -> Self {
        CycleModel {
            clock_hz: 1e9,
            lanes: 8,
            overhead_cycles: 2000,
            psu_word_bits: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockCycles {
    pub psu: u64,
    pub aligner: u64,
    pub reasoner: u64,
    pub overhead: u64,
}

impl BlockCycles {
    pub fn total(&self) -> u64 {
        self.psu + self.aligner + self.reasoner + self.overhead
    }
}

impl CycleModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.clock_hz > 0.0) || self.lanes == 0 || self.psu_word_bits == 0 {
            return Err(Error::Config(
                "cycle model: clock_hz, lanes and psu_word_bits must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn lane_groups(&self, concepts: usize) -> u64 {
        concepts.div_ceil(self.lanes) as u64
    }

    /// `N D' ceil(M/W)` for full, `N |delta| ceil(M/W)` for delta, zero for bypass.
    pub fn aligner_cycles(&self, mode: Mode, n: usize, d_eff: usize, delta_len: usize, concepts: usize) -> u64 {
        let columns = match mode {
            Mode::Full => d_eff,
            Mode::Delta => delta_len,
            Mode::Bypass => 0,
        };
        n as u64 * columns as u64 * self.lane_groups(concepts)
    }

    pub fn psu_cycles(&self, n: usize, d_eff: usize) -> u64 {
        n as u64 * d_eff.div_ceil(self.psu_word_bits) as u64
    }

    pub fn reasoner_cycles(&self, n: usize, concepts: usize, ran: bool) -> u64 {
        if ran {
            n as u64 * self.lane_groups(concepts)
        } else {
            0
        }
    }

    pub fn window_cycles(
        &self,
        mode: Mode,
        n: usize,
        d_eff: usize,
        delta_len: usize,
        concepts: usize,
        reasoner_ran: bool,
    ) -> BlockCycles {
        BlockCycles {
            psu: self.psu_cycles(n, d_eff),
            aligner: self.aligner_cycles(mode, n, d_eff, delta_len, concepts),
            reasoner: self.reasoner_cycles(n, concepts, reasoner_ran && mode != Mode::Bypass),
            overhead: self.overhead_cycles,
        }
    }

    pub fn cycles_to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_hz * 1e3
    }
}

/// Cycle-stepped model of the aligner datapath: an index generator feeds a
/// FIFO one column index per cycle; the lane array pops a column and sweeps
/// it across the concepts one lane group per cycle.
#[derive(Clone, Debug)]
pub struct AlignerSim {
    pub lanes: usize,
    pub fifo_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimResult {
    /// Accumulated contributions of the visited columns.
    pub scores: Vec<i32>,
    /// Cycles in which the lane array did useful work.
    pub busy_cycles: u64,
    /// Elapsed cycles including any pipeline stalls.
    pub elapsed_cycles: u64,
}

impl AlignerSim {
    pub fn new(lanes: usize, fifo_depth: usize) -> Self {
        AlignerSim {
            lanes: lanes.max(1),
            fifo_depth: fifo_depth.max(1),
        }
    }

    /// Full scan of `q` under `mask`, repeated for `n` proposals.
    pub fn full(&self, mem: &ItemMemory, q: &Hypervector, mask: &BankMask, n: usize) -> SimResult {
        let columns: Vec<u32> = mask.active_positions().map(|i| i as u32).collect();
        self.run(mem, q, &columns, 1, n)
    }

    /// Delta pass over the flipped positions, read at the new query.
    pub fn delta(&self, mem: &ItemMemory, q_new: &Hypervector, delta: &[u32], n: usize) -> SimResult {
        self.run(mem, q_new, delta, 2, n)
    }

    fn run(&self, mem: &ItemMemory, q: &Hypervector, columns: &[u32], step: i32, n: usize) -> SimResult {
        let m = mem.concepts();
        let groups = m.div_ceil(self.lanes);
        let mut out = SimResult {
            scores: vec![0; m],
            busy_cycles: 0,
            elapsed_cycles: 0,
        };
        for _ in 0..n {
            let mut scores = vec![0i32; m];
            let mut fifo: VecDeque<u32> = VecDeque::with_capacity(self.fifo_depth);
            let mut next = 0usize;
            let mut current: Option<(u32, usize)> = None;
            loop {
                if next < columns.len() && fifo.len() < self.fifo_depth {
                    fifo.push_back(columns[next]);
                    next += 1;
                }
                if current.is_none() {
                    current = fifo.pop_front().map(|c| (c, 0));
                }
                let Some((col, group)) = current else {
                    if next >= columns.len() {
                        break;
                    }
                    out.elapsed_cycles += 1;
                    continue;
                };
                let i = col as usize;
                let qb = q.bit(i);
                let column = mem.column(i);
                for (j, s) in scores.iter_mut().enumerate().take(((group + 1) * self.lanes).min(m)).skip(group * self.lanes) {
                    let hb = column[j / 64] >> (j % 64) & 1 == 1;
                    *s += if hb == qb { step } else { -step };
                }
                out.busy_cycles += 1;
                out.elapsed_cycles += 1;
                current = if group + 1 == groups { None } else { Some((col, group + 1)) };
            }
            out.scores = scores;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Aligner,
    Reasoner,
    PartialUpdate,
    ScoreBuffer,
    Sorter,
    Controller,
    HostInterface,
    FifoMisc,
    ItemMemory,
    Caches,
}

impl Block {
    pub const ALL: [Block; 10] = [
        Block::Aligner,
        Block::Reasoner,
        Block::PartialUpdate,
        Block::ScoreBuffer,
        Block::Sorter,
        Block::Controller,
        Block::HostInterface,
        Block::FifoMisc,
        Block::ItemMemory,
        Block::Caches,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Aligner => "aligner",
            Block::Reasoner => "reasoner",
            Block::PartialUpdate => "partial_update",
            Block::ScoreBuffer => "score_buffer",
            Block::Sorter => "sorter",
            Block::Controller => "controller",
            Block::HostInterface => "host_interface",
            Block::FifoMisc => "fifo_misc",
            Block::ItemMemory => "item_memory",
            Block::Caches => "caches",
        }
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Synthesized peak power in mW (28 nm, 1 GHz).
    pub fn reference_power_mw(self) -> f64 {
        match self {
            Block::Aligner => 3522.56,
            Block::Reasoner => 504.32,
            Block::PartialUpdate => 220.16,
            Block::ScoreBuffer => 110.08,
            Block::Sorter => 110.08,
            Block::Controller => 55.04,
            Block::HostInterface => 82.56,
            Block::FifoMisc => 55.04,
            Block::ItemMemory => 120.0,
            Block::Caches => 15.0,
        }
    }

    /// Area in mm^2; metadata only.
    pub fn reference_area_mm2(self) -> f64 {
        match self {
            Block::Aligner => 4.488,
            Block::Reasoner => 0.642,
            Block::PartialUpdate => 0.280,
            Block::ScoreBuffer => 0.140,
            Block::Sorter => 0.140,
            Block::Controller => 0.070,
            Block::HostInterface => 0.105,
            Block::FifoMisc => 0.070,
            Block::ItemMemory => 0.50,
            Block::Caches => 0.03,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-block active power plus the fraction of it drawn while idle.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerTable {
    active_mw: [f64; 10],
    pub idle_fraction: f64,
}

impl PowerTable {
    pub fn reference(idle_fraction: f64) -> Self {
        PowerTable {
            active_mw: Block::ALL.map(Block::reference_power_mw),
            idle_fraction,
        }
    }

    /// Replaces the named blocks' active power.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for (name, &mw) in overrides {
            let block = Block::from_name(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown power block `{name}` (known: {})",
                    Block::ALL.map(Block::name).join(", ")
                ))
            })?;
            self.active_mw[block.index()] = mw;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.active_mw.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("block powers must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.idle_fraction) {
            return Err(Error::Config(format!(
                "idle_fraction {} is outside [0, 1]",
                self.idle_fraction
            )));
        }
        Ok(())
    }

    pub fn active_mw(&self, block: Block) -> f64 {
        self.active_mw[block.index()]
    }

    pub fn total_mw(&self) -> f64 {
        self.active_mw.iter().sum()
    }
}

/// Busy cycles attributed to each block in one window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockBusy(pub [u64; 10]);

impl BlockBusy {
    pub fn from_window(mode: Mode, n: usize, concepts: usize, cycles: &BlockCycles, model: &CycleModel) -> Self {
        let mut b = [0u64; 10];
        let sort = if mode == Mode::Bypass {
            0
        } else {
            n as u64 * model.lane_groups(concepts)
        };
        b[Block::Aligner.index()] = cycles.aligner;
        b[Block::ItemMemory.index()] = cycles.aligner;
        b[Block::Reasoner.index()] = cycles.reasoner;
        b[Block::PartialUpdate.index()] = cycles.psu;
        b[Block::Caches.index()] = cycles.psu;
        b[Block::ScoreBuffer.index()] = sort;
        b[Block::Sorter.index()] = sort;
        b[Block::Controller.index()] = cycles.total();
        b[Block::HostInterface.index()] = cycles.overhead;
        b[Block::FifoMisc.index()] = if mode == Mode::Delta { cycles.aligner } else { 0 };
        BlockBusy(b)
    }

    pub fn get(&self, block: Block) -> u64 {
        self.0[block.index()]
    }
}

/// Energy in mJ per block over one frame period.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlockEnergy(pub [f64; 10]);

impl BlockEnergy {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn get(&self, block: Block) -> f64 {
        self.0[block.index()]
    }
}

/// Active power while busy, idle power for the rest of the frame.
pub fn window_energy(busy: &BlockBusy, table: &PowerTable, clock_hz: f64, frame_s: f64) -> BlockEnergy {
    let (active, idle) = energy_terms(busy, table, clock_hz, frame_s);
    BlockEnergy(std::array::from_fn(|i| active[i] + table.idle_fraction * idle[i]))
}

/// Active and unit-idle energy (mJ) per block; energy is `active + f * idle`.
fn energy_terms(busy: &BlockBusy, table: &PowerTable, clock_hz: f64, frame_s: f64) -> ([f64; 10], [f64; 10]) {
    let mut active = [0.0; 10];
    let mut idle = [0.0; 10];
    for block in Block::ALL {
        let i = block.index();
        let t_busy = busy.0[i] as f64 / clock_hz;
        active[i] = table.active_mw[i] * t_busy;
        idle[i] = table.active_mw[i] * (frame_s - t_busy).max(0.0);
    }
    (active, idle)
}

/// Idle fraction that makes the mean power over `windows` equal `target_w`.
/// Each window is its busy profile and its frame period in seconds.
pub fn fit_idle_fraction<'a, I>(windows: I, table: &PowerTable, clock_hz: f64, target_w: f64) -> Result<f64>
where
    I: IntoIterator<Item = (&'a BlockBusy, f64)>,
{
    let (mut a, mut b, mut t) = (0.0, 0.0, 0.0);
    for (busy, frame_s) in windows {
        let (active, idle) = energy_terms(busy, table, clock_hz, frame_s);
        a += active.iter().sum::<f64>();
        b += idle.iter().sum::<f64>();
        t += frame_s;
    }
    if t == 0.0 || b == 0.0 {
        return Err(Error::Empty("calibration windows"));
    }
    // mW * s = mJ; target in W over t seconds is target * t * 1e3 mJ.
    let f = (target_w * t * 1e3 - a) / b;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Validation(format!(
            "target {target_w} W needs idle fraction {f:.4}, outside [0, 1]"
        )));
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyStats {
    pub windows: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub jitter_ms: f64,
    pub headroom_ms: f64,
    pub mean_power_w: f64,
    pub energy_mj: f64,
}

/// Nearest-rank percentile of sorted data: element `ceil(p n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Latency envelope and energy over a run. The frame period is the budget.
pub fn summarize(latencies_ms: &[f64], energies_mj: &[f64], budget_ms: f64) -> Result<LatencyStats> {
    if latencies_ms.is_empty() {
        return Err(Error::Empty("latency series"));
    }
    let mut sorted = latencies_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = nearest_rank(&sorted, 0.5);
    let p95 = nearest_rank(&sorted, 0.95);
    let energy = if energies_mj.is_empty() {
        0.0
    } else {
        energies_mj.iter().sum::<f64>() / energies_mj.len() as f64
    };
    Ok(LatencyStats {
        windows: latencies_ms.len(),
        min_ms: sorted[0],
        median_ms: median,
        p95_ms: p95,
        max_ms: sorted[sorted.len() - 1],
        jitter_ms: p95 - median,
        headroom_ms: budget_ms - p95,
        mean_power_w: energy / budget_ms,
        energy_mj: energy,
    })
}
