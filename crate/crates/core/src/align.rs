//! Associative aligner with persistent per-concept accumulators.
//!
//! A [`ScoreState`] is bound to the query it was computed for (its baseline)
//! and to the bank mask it was computed under. A delta update moves the
//! baseline to a new query by touching only the flipped positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdc::Hypervector;
use crate::kernel::{RowPopcount, SimilarityKernel};
use crate::memory::{BankMask, ItemMemory, TrafficMeter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Exact,
    Int8,
    Int4,
}

impl Precision {
    pub fn bits(self) -> Option<u32> {
        match self {
            Precision::Exact => None,
            Precision::Int8 => Some(8),
            Precision::Int4 => Some(4),
        }
    }

    /// Fractional bits of the cosine-domain fixed point.
    pub fn frac_bits(self) -> Option<u32> {
        self.bits().map(|b| b - 1)
    }

    /// Size of one quantization step in cosine units.
    pub fn ulp(self) -> f64 {
        match self.frac_bits() {
            Some(f) => 1.0 / f64::from(1u32 << f),
            None => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Exact => "exact",
            Precision::Int8 => "int8",
            Precision::Int4 => "int4",
        }
    }

    fn saturate(self, v: i64) -> i32 {
        match self.bits() {
            Some(b) => {
                let hi = (1i64 << (b - 1)) - 1;
                v.clamp(-hi, hi) as i32
            }
            None => v as i32,
        }
    }

    /// `raw / d_eff` in fixed point: round half to even, then saturate.
    fn quantize(self, raw: i64, d_eff: usize) -> i32 {
        let f = self.frac_bits().unwrap_or(0);
        self.saturate(div_round_half_even(raw << f, d_eff as i64))
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `n / d` rounded to nearest, ties to even. `d > 0`.
pub fn div_round_half_even(n: i64, d: i64) -> i64 {
    debug_assert!(d > 0);
    let q = n.div_euclid(d);
    let r = n.rem_euclid(d);
    match (2 * r).cmp(&d) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreState {
    baseline: Hypervector,
    mask: BankMask,
    raw: Vec<i32>,
    precision: Precision,
    /// Cosine-domain fixed point in units of `2^-(bits-1)`; empty when exact.
    quantized: Vec<i32>,
}

impl ScoreState {
    pub fn baseline(&self) -> &Hypervector {
        &self.baseline
    }

    pub fn mask(&self) -> &BankMask {
        &self.mask
    }

    pub fn raw(&self) -> &[i32] {
        &self.raw
    }

    pub fn quantized(&self) -> &[i32] {
        &self.quantized
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn d_eff(&self) -> usize {
        self.mask.d_eff()
    }

    pub fn concepts(&self) -> usize {
        self.raw.len()
    }

    /// Exact cosine of concept `j`.
    pub fn cosine(&self, j: usize) -> f64 {
        f64::from(self.raw[j]) / self.d_eff() as f64
    }

    /// The scores as the datapath sees them: exact cosines, or the fixed-point
    /// accumulators converted back to cosine units.
    pub fn readout(&self) -> Vec<f64> {
        match self.precision {
            Precision::Exact => (0..self.raw.len()).map(|j| self.cosine(j)).collect(),
            p => self.quantized.iter().map(|&v| f64::from(v) * p.ulp()).collect(),
        }
    }

    /// Test hook: overwrite one raw accumulator.
    #[doc(hidden)]
    pub fn corrupt_raw(&mut self, j: usize, value: i32) {
        self.raw[j] = value;
    }
}

/// Flipped active positions between two queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaSet {
    indices: Vec<u32>,
    capacity: usize,
    overflowed: bool,
}

impl DeltaSet {
    pub fn new(indices: Vec<u32>, capacity: usize) -> Self {
        let overflowed = indices.len() > capacity;
        DeltaSet {
            indices,
            capacity,
            overflowed,
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn overflowed(&self) -> bool {
        self.overflowed
    }
}

/// Default flip-FIFO depth: `D / 8`.
pub fn default_delta_capacity(dim: usize) -> usize {
    (dim / 8).max(1)
}

/// Partial-similarity unit: flip set and `rho = 1 - 2|delta|/D'`.
pub fn psu_compare(
    current: &Hypervector,
    cached: &Hypervector,
    mask: &BankMask,
    capacity: usize,
) -> Result<(f64, DeltaSet)> {
    if current.dim() != cached.dim() {
        return Err(Error::DimensionMismatch {
            left: current.dim(),
            right: cached.dim(),
        });
    }
    if mask.dim() != current.dim() {
        return Err(Error::InvalidMask(format!(
            "mask covers D={} but queries have D={}",
            mask.dim(),
            current.dim()
        )));
    }
    mask.require_legal()?;
    let mut indices = Vec::new();
    for (w, ((a, b), m)) in current
        .words()
        .iter()
        .zip(cached.words())
        .zip(mask.word_masks())
        .enumerate()
    {
        let mut diff = (a ^ b) & m;
        while diff != 0 {
            indices.push((w * 64) as u32 + diff.trailing_zeros());
            diff &= diff - 1;
        }
    }
    let rho = 1.0 - 2.0 * indices.len() as f64 / mask.d_eff() as f64;
    Ok((rho, DeltaSet::new(indices, capacity)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopK {
    pub key: Vec<usize>,
    /// Gap between rank `k` and rank `k+1`, in cosine units.
    pub margin: f64,
}

impl TopK {
    pub fn k(&self) -> usize {
        self.key.len()
    }

    pub fn key_string(&self) -> String {
        self.key.iter().map(usize::to_string).collect::<Vec<_>>().join("|")
    }
}

/// Descending raw score, ties by ascending concept index.
pub fn top_k(state: &ScoreState, k: usize) -> Result<TopK> {
    let m = state.concepts();
    if k == 0 || k >= m {
        return Err(Error::InvalidK { k, concepts: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| state.raw[b].cmp(&state.raw[a]).then(a.cmp(&b)));
    let gap = state.raw[order[k - 1]] - state.raw[order[k]];
    Ok(TopK {
        key: order[..k].to_vec(),
        margin: f64::from(gap) / state.d_eff() as f64,
    })
}

pub struct Aligner {
    kernel: Box<dyn SimilarityKernel>,
    drop_last_correction: bool,
}

impl std::fmt::Debug for Aligner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Aligner").field("kernel", &self.kernel.name()).finish()
    }
}

impl Default for Aligner {
    fn default() -> Self {
        Aligner::new(Box::new(RowPopcount))
    }
}

impl Aligner {
    pub fn new(kernel: Box<dyn SimilarityKernel>) -> Self {
        Aligner {
            kernel,
            drop_last_correction: false,
        }
    }

    pub fn kernel(&self) -> &dyn SimilarityKernel {
        self.kernel.as_ref()
    }

    /// Mutation hook for negative controls: the delta path silently skips
    /// the last flipped position.
    #[doc(hidden)]
    pub fn inject_delta_fault(&mut self) {
        self.drop_last_correction = true;
    }

    pub fn full_scan(
        &self,
        q: &Hypervector,
        mem: &ItemMemory,
        mask: &BankMask,
        precision: Precision,
        meter: &mut TrafficMeter,
    ) -> Result<ScoreState> {
        mask.require_legal()?;
        let raw = self.kernel.scan(mem, q, mask, meter)?;
        let quantized = match precision {
            Precision::Exact => Vec::new(),
            p => raw.iter().map(|&r| p.quantize(i64::from(r), mask.d_eff())).collect(),
        };
        Ok(ScoreState {
            baseline: q.clone(),
            mask: mask.clone(),
            raw,
            precision,
            quantized,
        })
    }

    /// Moves `state` to `q_new` using only the flipped positions in `delta`.
    pub fn delta_update(
        &self,
        state: &mut ScoreState,
        q_new: &Hypervector,
        delta: &DeltaSet,
        mem: &ItemMemory,
        mask: &BankMask,
        meter: &mut TrafficMeter,
    ) -> Result<()> {
        if &state.mask != mask {
            return Err(Error::StaleAccumulators);
        }
        if delta.overflowed() {
            return Err(Error::DeltaOverflow {
                len: delta.len(),
                capacity: delta.capacity(),
            });
        }
        if q_new.dim() != state.baseline.dim() {
            return Err(Error::DimensionMismatch {
                left: q_new.dim(),
                right: state.baseline.dim(),
            });
        }
        let mut indices = delta.indices();
        if self.drop_last_correction && !indices.is_empty() {
            indices = &indices[..indices.len() - 1];
        }
        let corr = self.kernel.corrections(mem, q_new, indices, mask, meter)?;
        let d_eff = mask.d_eff();
        for (j, c) in corr.into_iter().enumerate() {
            state.raw[j] += c;
            if state.precision != Precision::Exact {
                let step = state.precision.quantize(i64::from(c), d_eff);
                state.quantized[j] =
                    state.precision.saturate(i64::from(state.quantized[j]) + i64::from(step));
            }
        }
        state.baseline = q_new.clone();
        Ok(())
    }
}
