//! Bipolar hypervector algebra.
//!
//! A hypervector of dimension `D` is an element of `{-1,+1}^D` stored one bit
//! per element: bit 1 is `+1`, bit 0 is `-1`. Under this encoding XNOR is
//! multiplication, so every similarity reduces to popcounts. Padding bits
//! past `D` are always zero.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::BankMask;

pub const HV_MAGIC: &[u8; 4] = b"HDCV";
pub const HV_VERSION: u16 = 1;

/// Fractional bits of the shift-normalized cosine read-out.
pub const COSINE_FRAC_BITS: u32 = 15;

pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

/// Mask of the valid bits in the last word of a `dim`-bit payload.
fn tail_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based pseudo-random word keyed by `(seed, stream, index)`.
///
/// Stateless, so any element of a seeded matrix or vector can be generated
/// independently and the result does not depend on host word order.
pub fn counter_word(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream ^ splitmix64(index).rotate_left(17)))
}

/// FNV-1a, used to key seeded vectors by name.
pub fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Hypervector(D={}, ones={})", self.dim, self.count_ones())
    }
}

impl Hypervector {
    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Validation("hypervector dimension must be positive".into()));
        }
        Ok(())
    }

    /// The all-(+1) vector, identity element of binding.
    pub fn ones(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        let mut words = vec![u64::MAX; words_for(dim)];
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Hypervector { dim, words })
    }

    /// The all-(-1) vector.
    pub fn minus_ones(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        Ok(Hypervector {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// Builds from packed little-endian words. Non-zero padding is rejected so
    /// that equal vectors always have equal payloads.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        Self::check_dim(dim)?;
        if words.len() != words_for(dim) {
            return Err(Error::Validation(format!(
                "expected {} words for D={dim}, got {}",
                words_for(dim),
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(Error::Validation("padding bits beyond D must be zero".into()));
        }
        Ok(Hypervector { dim, words })
    }

    /// Low `dim` bits of `bits` (dim <= 64), handy for exhaustive small tests.
    pub fn from_bits(dim: usize, bits: u64) -> Result<Self> {
        if dim > 64 {
            return Err(Error::Validation("from_bits supports D <= 64".into()));
        }
        Self::from_words(dim, vec![bits & tail_mask(dim)])
    }

    pub fn from_bipolar(values: &[i8]) -> Result<Self> {
        let mut hv = Self::minus_ones(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => hv.set(i, true),
                -1 => {}
                other => {
                    return Err(Error::Validation(format!(
                        "element {i} is {other}, expected -1 or +1"
                    )))
                }
            }
        }
        Ok(hv)
    }

    /// Seeded random vector from the counter-based generator; `stream`
    /// separates independent vectors drawn under one seed.
    pub fn random(dim: usize, seed: u64, stream: u64) -> Result<Self> {
        Self::check_dim(dim)?;
        let mut words: Vec<u64> = (0..words_for(dim) as u64)
            .map(|w| counter_word(seed, stream, w))
            .collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Hypervector { dim, words })
    }

    pub fn from_rng<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        Self::check_dim(dim)?;
        let mut words: Vec<u64> = (0..words_for(dim)).map(|_| rng.random()).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Hypervector { dim, words })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.dim, "index {i} out of range for D={}", self.dim);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Element `i` as `+1` / `-1`.
    pub fn get(&self, i: usize) -> i8 {
        if self.bit(i) {
            1
        } else {
            -1
        }
    }

    pub fn set(&mut self, i: usize, positive: bool) {
        assert!(i < self.dim, "index {i} out of range for D={}", self.dim);
        let bit = 1u64 << (i % 64);
        if positive {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.dim, "index {i} out of range for D={}", self.dim);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    /// Elementwise negation.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        Hypervector {
            dim: self.dim,
            words,
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        (0..self.dim).map(|i| self.get(i)).collect()
    }

    pub(crate) fn write_payload<W: Write>(&self, out: &mut W) -> Result<()> {
        for w in &self.words {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn read_payload<R: Read>(dim: usize, input: &mut R) -> Result<Self> {
        let mut words = Vec::with_capacity(words_for(dim));
        let mut buf = [0u8; 8];
        for _ in 0..words_for(dim) {
            read_exact(input, &mut buf)?;
            words.push(u64::from_le_bytes(buf));
        }
        Self::from_words(dim, words).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes the standalone binary form: magic, version, `D`, payload.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(HV_MAGIC)?;
        out.write_all(&HV_VERSION.to_le_bytes())?;
        out.write_all(&u32::try_from(self.dim).map_err(|_| {
            Error::Validation("dimension does not fit the u32 header field".into())
        })?
        .to_le_bytes())?;
        self.write_payload(out)
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(input, &mut magic)?;
        if &magic != HV_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"HDCV\"")));
        }
        let version = read_u16(input)?;
        if version != HV_VERSION {
            return Err(Error::Format(format!("unsupported hypervector version {version}")));
        }
        let dim = read_u32(input)? as usize;
        if dim == 0 {
            return Err(Error::Format("hypervector header has D = 0".into()));
        }
        Self::read_payload(dim, input)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.words.len() * 8);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

pub(crate) fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("truncated payload".into())
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u16<R: Read>(input: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(input, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn same_dim(a: &Hypervector, b: &Hypervector) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

fn mask_fits(a: &Hypervector, mask: &BankMask) -> Result<()> {
    if mask.dim() != a.dim {
        return Err(Error::InvalidMask(format!(
            "mask covers D={} but vectors have D={}",
            mask.dim(),
            a.dim
        )));
    }
    Ok(())
}

/// Hadamard binding: elementwise product, XNOR on bits.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    same_dim(a, b)?;
    let mut words: Vec<u64> = a.words.iter().zip(&b.words).map(|(x, y)| !(x ^ y)).collect();
    if let Some(last) = words.last_mut() {
        *last &= tail_mask(a.dim);
    }
    Ok(Hypervector { dim: a.dim, words })
}

/// Number of active positions where `a` and `b` differ.
pub fn hamming(a: &Hypervector, b: &Hypervector, active: &BankMask) -> Result<u32> {
    same_dim(a, b)?;
    mask_fits(a, active)?;
    Ok(a.words
        .iter()
        .zip(&b.words)
        .zip(active.word_masks())
        .map(|((x, y), m)| ((x ^ y) & m).count_ones())
        .sum())
}

/// Unnormalized bipolar dot product over the active dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawScore(i32);

impl RawScore {
    pub fn new(value: i32) -> Self {
        RawScore(value)
    }

    pub fn value(self) -> i32 {
        self.0
    }

    /// Exact real cosine `value / d_eff`.
    pub fn cosine(self, d_eff: usize) -> f64 {
        f64::from(self.0) / d_eff as f64
    }

    /// Fixed-point cosine with [`COSINE_FRAC_BITS`] fractional bits, computed
    /// as an arithmetic right shift by `log2(d_eff)`. Exact whenever
    /// `d_eff <= 2^COSINE_FRAC_BITS`.
    pub fn shift_normalized(self, log2_d_eff: u32) -> i32 {
        ((i64::from(self.0) << COSINE_FRAC_BITS) >> log2_d_eff) as i32
    }
}

/// `#matches - #mismatches` over the active positions.
pub fn dot(a: &Hypervector, b: &Hypervector, active: &BankMask) -> Result<RawScore> {
    let mismatches = hamming(a, b, active)? as i64;
    let d_eff = active.d_eff() as i64;
    Ok(RawScore((d_eff - 2 * mismatches) as i32))
}

/// Exact cosine `dot / D'` (reference mode).
pub fn cosine(a: &Hypervector, b: &Hypervector, active: &BankMask) -> Result<f64> {
    Ok(dot(a, b, active)?.cosine(active.d_eff()))
}

/// Shift-normalized fixed-point cosine (hardware mode). Requires a
/// power-of-two `D'`.
pub fn cosine_fixed(a: &Hypervector, b: &Hypervector, active: &BankMask) -> Result<i32> {
    let shift = active
        .log2_d_eff()
        .ok_or_else(|| Error::IllegalMask(format!("D' = {} is not a power of two", active.d_eff())))?;
    Ok(dot(a, b, active)?.shift_normalized(shift))
}

/// Converts a fixed-point cosine back to a real.
pub fn fixed_to_real(fixed: i32) -> f64 {
    f64::from(fixed) / f64::from(1u32 << COSINE_FRAC_BITS)
}

/// Fixed random bipolar projection `R` in `{-1,+1}^{D x d}`.
///
/// Entries are never stored; `R[i,k]` is bit `k mod 64` of
/// `counter_word(seed, i, k / 64)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection {
    input_width: usize,
    output_width: usize,
    seed: u64,
}

impl Projection {
    pub fn new(input_width: usize, output_width: usize, seed: u64) -> Result<Self> {
        if input_width == 0 || output_width == 0 {
            return Err(Error::Validation("projection widths must be positive".into()));
        }
        Ok(Projection {
            input_width,
            output_width,
            seed,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `R[row, col]` as `+1` / `-1`.
    pub fn entry(&self, row: usize, col: usize) -> i8 {
        assert!(row < self.output_width && col < self.input_width);
        if (counter_word(self.seed, row as u64, (col / 64) as u64) >> (col % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }
}

/// `sign(R z)` with `sign(0) = +1`.
pub fn project_and_sign(features: &[f64], proj: &Projection) -> Result<Hypervector> {
    if features.len() != proj.input_width {
        return Err(Error::DimensionMismatch {
            left: features.len(),
            right: proj.input_width,
        });
    }
    let mut out = Hypervector::minus_ones(proj.output_width)?;
    for row in 0..proj.output_width {
        let mut acc = 0.0f64;
        for (block, chunk) in features.chunks(64).enumerate() {
            let bits = counter_word(proj.seed, row as u64, block as u64);
            for (k, &x) in chunk.iter().enumerate() {
                if (bits >> k) & 1 == 1 {
                    acc += x;
                } else {
                    acc -= x;
                }
            }
        }
        if acc >= 0.0 {
            out.set(row, true);
        }
    }
    Ok(out)
}
