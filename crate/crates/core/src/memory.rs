//! Banked item memory: `M` concept hypervectors split into `B` column banks.
//!
//! The store keeps both the row view (one hypervector per concept) and a
//! bit-sliced column view (one `M`-bit slice per dimension), and charges
//! every column it hands out to a [`TrafficMeter`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hdc::{read_exact, read_u16, read_u32, words_for, Hypervector};

pub const MEMORY_MAGIC: &[u8; 4] = b"TORM";
pub const MEMORY_VERSION: u16 = 1;

/// Per-bank enable mask. `D' = popcount(enabled) * (D / B)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BankMask {
    dim: usize,
    banks: usize,
    enabled: u64,
    word_masks: Vec<u64>,
}

impl BankMask {
    pub fn new(dim: usize, banks: usize, enabled: u64) -> Result<Self> {
        if banks == 0 || banks > 64 {
            return Err(Error::InvalidMask(format!("bank count {banks} not in 1..=64")));
        }
        if dim == 0 || !dim.is_multiple_of(banks) {
            return Err(Error::InvalidMask(format!(
                "D={dim} is not a positive multiple of B={banks}"
            )));
        }
        if enabled == 0 {
            return Err(Error::InvalidMask("no bank enabled".into()));
        }
        if banks < 64 && enabled >> banks != 0 {
            return Err(Error::InvalidMask(format!(
                "mask {enabled:#x} enables banks beyond B={banks}"
            )));
        }
        let width = dim / banks;
        let mut word_masks = vec![0u64; words_for(dim)];
        for bank in (0..banks).filter(|b| enabled >> b & 1 == 1) {
            for i in bank * width..(bank + 1) * width {
                word_masks[i / 64] |= 1u64 << (i % 64);
            }
        }
        Ok(BankMask {
            dim,
            banks,
            enabled,
            word_masks,
        })
    }

    pub fn full(dim: usize, banks: usize) -> Result<Self> {
        Self::leading(dim, banks, banks)
    }

    /// The first `count` banks enabled.
    pub fn leading(dim: usize, banks: usize, count: usize) -> Result<Self> {
        if count == 0 || count > banks {
            return Err(Error::InvalidMask(format!("cannot enable {count} of {banks} banks")));
        }
        let enabled = if count == 64 { u64::MAX } else { (1u64 << count) - 1 };
        Self::new(dim, banks, enabled)
    }

    /// Mask enabling the leading banks that add up to `d_eff` positions.
    pub fn for_d_eff(dim: usize, banks: usize, d_eff: usize) -> Result<Self> {
        let width = dim / banks.max(1);
        if width == 0 || d_eff == 0 || !d_eff.is_multiple_of(width) {
            return Err(Error::IllegalMask(format!(
                "D'={d_eff} is not a positive multiple of the bank width {width}"
            )));
        }
        let mask = Self::leading(dim, banks, d_eff / width)
            .map_err(|e| Error::IllegalMask(e.to_string()))?;
        mask.require_legal()?;
        Ok(mask)
    }

    /// Every controller-legal mask, largest `D'` first.
    pub fn legal_ladder(dim: usize, banks: usize) -> Result<Vec<BankMask>> {
        let mut out = Vec::new();
        let mut count = banks;
        while count >= 1 {
            let m = Self::leading(dim, banks, count)?;
            if m.is_legal() {
                out.push(m);
            }
            count /= 2;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn enabled_bits(&self) -> u64 {
        self.enabled
    }

    pub fn enabled_banks(&self) -> usize {
        self.enabled.count_ones() as usize
    }

    pub fn bank_width(&self) -> usize {
        self.dim / self.banks
    }

    pub fn d_eff(&self) -> usize {
        self.enabled_banks() * self.bank_width()
    }

    pub fn log2_d_eff(&self) -> Option<u32> {
        let d = self.d_eff();
        d.is_power_of_two().then(|| d.trailing_zeros())
    }

    pub fn bank_of(&self, index: usize) -> usize {
        index / self.bank_width()
    }

    pub fn is_bank_enabled(&self, bank: usize) -> bool {
        bank < self.banks && self.enabled >> bank & 1 == 1
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.dim && self.is_bank_enabled(self.bank_of(index))
    }

    pub fn word_masks(&self) -> &[u64] {
        &self.word_masks
    }

    /// Contiguous from bank zero with a power-of-two bank count and `D'`.
    pub fn is_legal(&self) -> bool {
        let count = self.enabled_banks();
        let contiguous = count == 64 || self.enabled == (1u64 << count) - 1;
        contiguous && count.is_power_of_two() && self.d_eff().is_power_of_two()
    }

    pub fn require_legal(&self) -> Result<()> {
        if self.is_legal() {
            Ok(())
        } else {
            Err(Error::IllegalMask(format!(
                "mask {:#x} over {} banks (D'={})",
                self.enabled,
                self.banks,
                self.d_eff()
            )))
        }
    }

    /// Active positions in ascending order.
    pub fn active_positions(&self) -> impl Iterator<Item = usize> + '_ {
        let width = self.bank_width();
        (0..self.banks)
            .filter(move |&b| self.is_bank_enabled(b))
            .flat_map(move |b| b * width..(b + 1) * width)
    }
}

/// Cumulative item-memory traffic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrafficMeter {
    bits_read: u64,
    index_reads: u64,
    per_bank_bits: Vec<u64>,
}

impl TrafficMeter {
    pub fn new(banks: usize) -> Self {
        TrafficMeter {
            bits_read: 0,
            index_reads: 0,
            per_bank_bits: vec![0; banks],
        }
    }

    pub fn bits_read(&self) -> u64 {
        self.bits_read
    }

    pub fn index_reads(&self) -> u64 {
        self.index_reads
    }

    pub fn per_bank_bits(&self) -> &[u64] {
        &self.per_bank_bits
    }

    fn charge_column(&mut self, bank: usize, bits: u64) {
        if self.per_bank_bits.len() <= bank {
            self.per_bank_bits.resize(bank + 1, 0);
        }
        self.per_bank_bits[bank] += bits;
        self.bits_read += bits;
    }

    fn charge_index(&mut self) {
        self.index_reads += 1;
    }
}

/// `M` concept rows of dimension `D` split into `B` banks.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemMemory {
    dim: usize,
    banks: usize,
    labels: Vec<String>,
    rows: Vec<Hypervector>,
    /// Bit-sliced view: column `i` occupies `columns[i*cw..(i+1)*cw]`.
    columns: Vec<u64>,
}

impl ItemMemory {
    pub fn new(labels: Vec<String>, rows: Vec<Hypervector>, banks: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("item memory needs at least one concept".into()));
        }
        if labels.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        let dim = rows[0].dim();
        if banks == 0 || !dim.is_multiple_of(banks) || !(dim / banks).is_multiple_of(64) || banks > 64 {
            return Err(Error::Validation(format!(
                "D={dim} must be a multiple of 64*B with B={banks} (1..=64)"
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.dim(),
            });
        }
        let cw = words_for(rows.len());
        let mut columns = vec![0u64; dim * cw];
        for (j, row) in rows.iter().enumerate() {
            for (w, &word) in row.words().iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let i = w * 64 + bits.trailing_zeros() as usize;
                    columns[i * cw + j / 64] |= 1u64 << (j % 64);
                    bits &= bits - 1;
                }
            }
        }
        Ok(ItemMemory {
            dim,
            banks,
            labels,
            rows,
            columns,
        })
    }

    /// Seeded random memory; concept `j` is `Hypervector::random(D, seed, j)`.
    pub fn random(concepts: usize, dim: usize, banks: usize, seed: u64) -> Result<Self> {
        let rows = (0..concepts)
            .map(|j| Hypervector::random(dim, seed, j as u64))
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..concepts).map(|j| format!("concept-{j:03}")).collect();
        Self::new(labels, rows, banks)
    }

    pub fn concepts(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Hypervector] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &Hypervector {
        &self.rows[j]
    }

    pub fn full_mask(&self) -> BankMask {
        BankMask::full(self.dim, self.banks).expect("validated at construction")
    }

    pub fn new_meter(&self) -> TrafficMeter {
        TrafficMeter::new(self.banks)
    }

    fn column_words(&self) -> usize {
        words_for(self.rows.len())
    }

    /// `M`-bit slice of column `i` across all concepts (bit `j` = `h_{j,i}`).
    pub fn column(&self, i: usize) -> &[u64] {
        let cw = self.column_words();
        &self.columns[i * cw..(i + 1) * cw]
    }

    pub(crate) fn check_mask(&self, mask: &BankMask) -> Result<()> {
        if mask.dim() != self.dim || mask.banks() != self.banks {
            return Err(Error::InvalidMask(format!(
                "mask is for D={} B={}, memory is D={} B={}",
                mask.dim(),
                mask.banks(),
                self.dim,
                self.banks
            )));
        }
        Ok(())
    }

    /// Visits every active column once, ascending, charging `M` bits each.
    pub fn stream_columns<F>(&self, mask: &BankMask, meter: &mut TrafficMeter, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[u64]),
    {
        self.check_mask(mask)?;
        let m = self.concepts() as u64;
        for i in mask.active_positions() {
            meter.charge_column(mask.bank_of(i), m);
            visit(i, self.column(i));
        }
        Ok(())
    }

    /// Visits exactly the listed columns, charging `M` bits plus one index
    /// read per entry. Every index is validated before anything is charged.
    pub fn gather_columns<F>(
        &self,
        mask: &BankMask,
        indices: &[u32],
        meter: &mut TrafficMeter,
        mut visit: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &[u64]),
    {
        self.check_gather(mask, indices)?;
        let m = self.concepts() as u64;
        for &i in indices {
            let i = i as usize;
            meter.charge_index();
            meter.charge_column(mask.bank_of(i), m);
            visit(i, self.column(i));
        }
        Ok(())
    }

    fn check_gather(&self, mask: &BankMask, indices: &[u32]) -> Result<()> {
        self.check_mask(mask)?;
        match indices.iter().find(|&&i| !mask.contains(i as usize)) {
            Some(&bad) => Err(Error::GatingViolation { index: bad as usize }),
            None => Ok(()),
        }
    }

    /// Charges the traffic of a full stream without visiting columns; used
    /// by kernels that read the row layout.
    pub fn charge_stream(&self, mask: &BankMask, meter: &mut TrafficMeter) -> Result<()> {
        self.check_mask(mask)?;
        let per_bank = (mask.bank_width() * self.concepts()) as u64;
        for bank in (0..self.banks).filter(|&b| mask.is_bank_enabled(b)) {
            meter.charge_column(bank, per_bank);
        }
        Ok(())
    }

    /// Charges the traffic of a sparse gather without visiting columns.
    pub fn charge_gather(&self, mask: &BankMask, indices: &[u32], meter: &mut TrafficMeter) -> Result<()> {
        self.check_gather(mask, indices)?;
        let m = self.concepts() as u64;
        for &i in indices {
            meter.charge_index();
            meter.charge_column(mask.bank_of(i as usize), m);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let too_big = |what: &str| Error::Validation(format!("{what} does not fit its header field"));
        out.write_all(MEMORY_MAGIC)?;
        out.write_all(&MEMORY_VERSION.to_le_bytes())?;
        out.write_all(&u32::try_from(self.concepts()).map_err(|_| too_big("M"))?.to_le_bytes())?;
        out.write_all(&u32::try_from(self.dim).map_err(|_| too_big("D"))?.to_le_bytes())?;
        out.write_all(&u16::try_from(self.banks).map_err(|_| too_big("B"))?.to_le_bytes())?;
        for label in &self.labels {
            let len = u16::try_from(label.len()).map_err(|_| too_big("label"))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(label.as_bytes())?;
        }
        for row in &self.rows {
            row.write_payload(out)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(input, &mut magic)?;
        if &magic != MEMORY_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"TORM\"")));
        }
        let version = read_u16(input)?;
        if version != MEMORY_VERSION {
            return Err(Error::Format(format!("unsupported item-memory version {version}")));
        }
        let m = read_u32(input)? as usize;
        let dim = read_u32(input)? as usize;
        let banks = read_u16(input)? as usize;
        if m == 0 {
            return Err(Error::Validation("item-memory header has M = 0".into()));
        }
        if banks == 0 || dim == 0 || !dim.is_multiple_of(64 * banks) {
            return Err(Error::Validation(format!(
                "D={dim} is not a multiple of 64*B with B={banks}"
            )));
        }
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let len = read_u16(input)? as usize;
            let mut buf = vec![0u8; len];
            read_exact(input, &mut buf)?;
            labels.push(
                String::from_utf8(buf).map_err(|_| Error::Format("label is not UTF-8".into()))?,
            );
        }
        let rows = (0..m)
            .map(|_| Hypervector::read_payload(dim, input))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, rows, banks)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
