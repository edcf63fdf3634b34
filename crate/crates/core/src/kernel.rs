//! Similarity kernels shared by the aligner and the reasoner weight
//! precompute. Both produce raw bipolar dot products; they differ in which
//! memory layout they walk.

use crate::error::Result;
use crate::hdc::Hypervector;
use crate::memory::{BankMask, ItemMemory, TrafficMeter};
use crate::registry::Registry;

pub trait SimilarityKernel: Send + Sync {
    fn name(&self) -> &'static str;

    /// `raw[j] = dot(q, h_j)` over the active positions of `mask`.
    fn scan(&self, mem: &ItemMemory, q: &Hypervector, mask: &BankMask, meter: &mut TrafficMeter)
        -> Result<Vec<i32>>;

    /// Per-concept correction for the flipped positions `delta`, read at the
    /// new query: `sum_i 2 * q_new[i] * h_j[i]`.
    fn corrections(
        &self,
        mem: &ItemMemory,
        q_new: &Hypervector,
        delta: &[u32],
        mask: &BankMask,
        meter: &mut TrafficMeter,
    ) -> Result<Vec<i32>>;
}

/// Walks the bit-sliced columns one per step, as the hardware does.
#[derive(Debug, Default)]
pub struct ColumnStream;

fn add_column(acc: &mut [i32], column: &[u64], positive: bool, step: i32) {
    // Concepts whose bit equals the query bit gain `step`, the rest lose it.
    for (j, a) in acc.iter_mut().enumerate() {
        let h = column[j / 64] >> (j % 64) & 1 == 1;
        *a += if h == positive { step } else { -step };
    }
}

impl SimilarityKernel for ColumnStream {
    fn name(&self) -> &'static str {
        "column-stream"
    }

    fn scan(&self, mem: &ItemMemory, q: &Hypervector, mask: &BankMask, meter: &mut TrafficMeter)
        -> Result<Vec<i32>> {
        check_query(mem, q)?;
        let mut acc = vec![0i32; mem.concepts()];
        mem.stream_columns(mask, meter, |i, col| add_column(&mut acc, col, q.bit(i), 1))?;
        Ok(acc)
    }

    fn corrections(
        &self,
        mem: &ItemMemory,
        q_new: &Hypervector,
        delta: &[u32],
        mask: &BankMask,
        meter: &mut TrafficMeter,
    ) -> Result<Vec<i32>> {
        check_query(mem, q_new)?;
        let mut acc = vec![0i32; mem.concepts()];
        mem.gather_columns(mask, delta, meter, |i, col| {
            add_column(&mut acc, col, q_new.bit(i), 2)
        })?;
        Ok(acc)
    }
}

/// XOR-popcount over the row layout, one concept at a time. Charges the same
/// traffic as the column walk.
#[derive(Debug, Default)]
pub struct RowPopcount;

impl SimilarityKernel for RowPopcount {
    fn name(&self) -> &'static str {
        "row-popcount"
    }

    fn scan(&self, mem: &ItemMemory, q: &Hypervector, mask: &BankMask, meter: &mut TrafficMeter)
        -> Result<Vec<i32>> {
        check_query(mem, q)?;
        mem.charge_stream(mask, meter)?;
        let d_eff = mask.d_eff() as i32;
        Ok(mem
            .rows()
            .iter()
            .map(|h| {
                let mismatches: u32 = q
                    .words()
                    .iter()
                    .zip(h.words())
                    .zip(mask.word_masks())
                    .map(|((a, b), m)| ((a ^ b) & m).count_ones())
                    .sum();
                d_eff - 2 * mismatches as i32
            })
            .collect())
    }

    fn corrections(
        &self,
        mem: &ItemMemory,
        q_new: &Hypervector,
        delta: &[u32],
        mask: &BankMask,
        meter: &mut TrafficMeter,
    ) -> Result<Vec<i32>> {
        check_query(mem, q_new)?;
        mem.charge_gather(mask, delta, meter)?;
        Ok(mem
            .rows()
            .iter()
            .map(|h| {
                delta
                    .iter()
                    .map(|&i| if h.bit(i as usize) == q_new.bit(i as usize) { 2 } else { -2 })
                    .sum()
            })
            .collect())
    }
}

fn check_query(mem: &ItemMemory, q: &Hypervector) -> Result<()> {
    if q.dim() != mem.dim() {
        return Err(crate::error::Error::DimensionMismatch {
            left: q.dim(),
            right: mem.dim(),
        });
    }
    Ok(())
}

pub fn kernels() -> Registry<dyn SimilarityKernel> {
    Registry::<dyn SimilarityKernel>::new("similarity kernel")
        .with("column-stream", || Box::new(ColumnStream))
        .with("row-popcount", || Box::new(RowPopcount))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_each_other_and_charge_equally() {
        let mem = ItemMemory::random(37, 1024, 8, 5).unwrap();
        let q = Hypervector::random(1024, 77, 0).unwrap();
        let mask = BankMask::leading(1024, 8, 4).unwrap();
        let reg = kernels();
        let mut results = Vec::new();
        for name in ["column-stream", "row-popcount"] {
            let k = reg.create(name).unwrap();
            let mut meter = mem.new_meter();
            let raw = k.scan(&mem, &q, &mask, &mut meter).unwrap();
            let delta = [3u32, 17, 200, 511];
            let corr = k.corrections(&mem, &q, &delta, &mask, &mut meter).unwrap();
            results.push((raw, corr, meter));
        }
        assert_eq!(results[0], results[1]);
        assert_eq!(results[0].2.bits_read(), 37 * 512 + 37 * 4);
        assert_eq!(results[0].2.index_reads(), 4);
    }

    #[test]
    fn unknown_kernel_lists_choices() {
        let err = kernels().create("simd").err().unwrap();
        assert!(err.to_string().contains("column-stream, row-popcount"));
    }
}
