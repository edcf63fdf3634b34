//! Synthetic workloads: DVS event-window accumulation and hypervector-space
//! query streams with tunable temporal coherence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::controller::LoadSample;
use crate::error::{Error, Result};
use crate::hdc::{project_and_sign, read_exact, read_u16, read_u32, Hypervector, Projection};
use crate::memory::ItemMemory;

pub const TRACE_MAGIC: &[u8; 4] = b"TORT";
pub const TRACE_VERSION: u16 = 1;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Microseconds.
    pub t: u64,
    /// `+1` or `-1`.
    pub p: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sensor {
    pub width: u16,
    pub height: u16,
}

impl Default for Sensor {
    fn default() -> Self {
        Sensor {
            width: 128,
            height: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventWindow {
    pub t0: u64,
    pub dt: u64,
    pub sensor: Sensor,
    /// Summed polarity per pixel, row-major.
    pub accumulated: Vec<i32>,
    /// `accumulated / (max |accumulated| + eps)`.
    pub normalized: Vec<f64>,
}

impl EventWindow {
    pub fn at(&self, x: u16, y: u16) -> (i32, f64) {
        let i = y as usize * self.sensor.width as usize + x as usize;
        (self.accumulated[i], self.normalized[i])
    }
}

/// Sums polarities of the events in `[t0, t0 + dt)` and normalizes.
pub fn accumulate(events: &[Event], t0: u64, dt: u64, eps: f64, sensor: Sensor) -> Result<EventWindow> {
    if dt == 0 {
        return Err(Error::Validation("window width must be positive".into()));
    }
    let (w, h) = (sensor.width as usize, sensor.height as usize);
    let mut acc = vec![0i32; w * h];
    for e in events.iter().filter(|e| e.t >= t0 && e.t - t0 < dt) {
        if e.x as usize >= w || e.y as usize >= h {
            return Err(Error::Validation(format!(
                "event at ({}, {}) outside a {w}x{h} sensor",
                e.x, e.y
            )));
        }
        if e.p != 1 && e.p != -1 {
            return Err(Error::Validation(format!("polarity {} is not +1/-1", e.p)));
        }
        acc[e.y as usize * w + e.x as usize] += i32::from(e.p);
    }
    let peak = acc.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    let denom = f64::from(peak) + eps;
    let normalized = acc.iter().map(|&v| f64::from(v) / denom).collect();
    Ok(EventWindow {
        t0,
        dt,
        sensor,
        accumulated: acc,
        normalized,
    })
}

/// Event-path query: the normalized map projected and signed.
pub fn encode_window(window: &EventWindow, proj: &Projection) -> Result<Hypervector> {
    project_and_sign(&window.normalized, proj)
}

/// Per-task coherence and load model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    pub name: String,
    /// Independent per-bit flip probability applied to the concept vector at
    /// the start of each segment.
    pub base_flip_rate: f64,
    /// Mean and standard deviation of the per-window flip fraction `|delta|/D`.
    pub flip_rate_mean: f64,
    pub flip_rate_sd: f64,
    /// Fraction of positions allowed to drift.
    pub volatile_fraction: f64,
    /// Mean windows per ground-truth concept; unset keeps one concept.
    pub segment_mean: Option<f64>,
    /// Object count: AR(1) around `n_mean`, rounded and clamped.
    pub n_mean: f64,
    pub n_floor: u32,
    pub n_cap: u32,
    pub n_phi: f64,
    pub n_sigma: f64,
    /// Poisson mean of the queue depth.
    pub queue_lambda: f64,
}

impl TaskProfile {
    #[allow(clippy::too_many_arguments)]
    fn preset(name: &str, flip: f64, segment: f64, n_mean: f64, floor: u32, cap: u32, lambda: f64) -> Self {
        TaskProfile {
            name: name.to_string(),
            base_flip_rate: 0.03,
            flip_rate_mean: flip,
            flip_rate_sd: flip / 2.0,
            volatile_fraction: 0.10,
            segment_mean: Some(segment),
            n_mean,
            n_floor: floor,
            n_cap: cap,
            n_phi: 0.9,
            n_sigma: 1.0,
            queue_lambda: lambda,
        }
    }

    /// The five shipped profiles, steadiest first.
    pub fn defaults() -> Vec<TaskProfile> {
        vec![
            Self::preset("have-breakfast", 0.005, 150.0, 4.0, 2, 9, 1.2),
            Self::preset("take-a-rest", 0.006, 110.0, 4.5, 3, 10, 1.3),
            Self::preset("cooking", 0.012, 40.0, 6.0, 3, 12, 1.8),
            Self::preset("pour-wine", 0.020, 12.0, 8.0, 4, 13, 2.2),
            Self::preset("sports", 0.025, 10.0, 10.0, 5, 16, 2.6),
        ]
    }

    /// A single-concept stream with constant load.
    pub fn steady(name: &str, flip_rate: f64) -> Self {
        TaskProfile {
            name: name.to_string(),
            base_flip_rate: 0.0,
            flip_rate_mean: flip_rate,
            flip_rate_sd: 0.0,
            volatile_fraction: 1.0,
            segment_mean: None,
            n_mean: 1.0,
            n_floor: 1,
            n_cap: 1,
            n_phi: 0.0,
            n_sigma: 0.0,
            queue_lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("profile `{}`: {what}", self.name)));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.base_flip_rate) || !unit(self.flip_rate_mean) || !unit(self.volatile_fraction) {
            return bad("flip rates and volatile_fraction must lie in [0, 1]");
        }
        if !(self.flip_rate_sd >= 0.0) || !(self.n_sigma >= 0.0) || !(self.queue_lambda >= 0.0) {
            return bad("flip_rate_sd, n_sigma and queue_lambda must be non-negative");
        }
        if !(self.n_phi.abs() < 1.0) {
            return bad("n_phi must lie in (-1, 1)");
        }
        if self.n_floor > self.n_cap || self.n_cap > u32::from(u16::MAX) {
            return bad("need n_floor <= n_cap <= 65535");
        }
        if matches!(self.segment_mean, Some(m) if !(m >= 1.0)) {
            return bad("segment_mean must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamWindow {
    pub query: Hypervector,
    pub load: LoadSample,
    pub truth: usize,
}

/// Generates `windows` queries over `mem`; deterministic in `seed`.
pub fn generate_stream(profile: &TaskProfile, mem: &ItemMemory, windows: usize, seed: u64) -> Result<Vec<StreamWindow>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mem.dim();
    let m = mem.concepts();
    let volatile_len = ((profile.volatile_fraction * dim as f64).round() as usize).min(dim);
    let volatile: Vec<usize> = sample(&mut rng, dim, volatile_len).into_vec();

    let flips = Normal::new(profile.flip_rate_mean * dim as f64, profile.flip_rate_sd * dim as f64)
        .map_err(|e| Error::Config(format!("flip distribution: {e}")))?;
    let noise = Normal::new(0.0, profile.n_sigma.max(0.0))
        .map_err(|e| Error::Config(format!("object-count noise: {e}")))?;
    let queue = (profile.queue_lambda > 0.0)
        .then(|| Poisson::new(profile.queue_lambda))
        .transpose()
        .map_err(|e| Error::Config(format!("queue distribution: {e}")))?;
    let segment = profile
        .segment_mean
        .map(|mean| Geometric::new(1.0 / mean))
        .transpose()
        .map_err(|e| Error::Config(format!("segment distribution: {e}")))?;

    let mut truth = rng.random_range(0..m);
    let mut remaining = segment.as_ref().map_or(u64::MAX, |g| g.sample(&mut rng) + 1);
    let mut query = perturbed(mem.row(truth), profile.base_flip_rate, &mut rng);
    let mut latent = 0.0f64;
    let mut out = Vec::with_capacity(windows);

    for w in 0..windows {
        if w > 0 {
            if remaining == 0 {
                if m > 1 {
                    let next = rng.random_range(0..m - 1);
                    truth = if next >= truth { next + 1 } else { next };
                }
                query = perturbed(mem.row(truth), profile.base_flip_rate, &mut rng);
                remaining = segment.as_ref().map_or(u64::MAX, |g| g.sample(&mut rng) + 1);
            } else {
                let k = (flips.sample(&mut rng).max(0.0).round() as usize).min(volatile_len);
                for idx in sample(&mut rng, volatile_len, k) {
                    query.flip(volatile[idx]);
                }
            }
        }
        remaining = remaining.saturating_sub(1);

        latent = profile.n_phi * latent + noise.sample(&mut rng);
        let n = (profile.n_mean + latent)
            .round()
            .clamp(f64::from(profile.n_floor), f64::from(profile.n_cap)) as u32;
        let q = queue.as_ref().map_or(0, |p| p.sample(&mut rng) as u32);
        out.push(StreamWindow {
            query: query.clone(),
            load: LoadSample::new(n, q),
            truth,
        });
    }
    Ok(out)
}

fn perturbed(base: &Hypervector, rate: f64, rng: &mut ChaCha8Rng) -> Hypervector {
    let mut hv = base.clone();
    if rate > 0.0 {
        for i in 0..hv.dim() {
            if rng.random_bool(rate) {
                hv.flip(i);
            }
        }
    }
    hv
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub dim: usize,
    pub windows: Vec<StreamWindow>,
}

impl Trace {
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let narrow = |v: u64, what: &str| {
            u16::try_from(v).map_err(|_| Error::Validation(format!("{what} {v} does not fit in u16")))
        };
        out.write_all(TRACE_MAGIC)?;
        out.write_all(&TRACE_VERSION.to_le_bytes())?;
        out.write_all(&u32::try_from(self.dim).map_err(|_| Error::Validation("D too large".into()))?.to_le_bytes())?;
        out.write_all(
            &u32::try_from(self.windows.len())
                .map_err(|_| Error::Validation("too many windows".into()))?
                .to_le_bytes(),
        )?;
        for w in &self.windows {
            if w.query.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    left: w.query.dim(),
                    right: self.dim,
                });
            }
            w.query.write_payload(out)?;
            out.write_all(&narrow(u64::from(w.load.n), "N")?.to_le_bytes())?;
            out.write_all(&narrow(u64::from(w.load.q), "q")?.to_le_bytes())?;
            out.write_all(&narrow(w.truth as u64, "concept")?.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(input, &mut magic)?;
        if &magic != TRACE_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"TORT\"")));
        }
        let version = read_u16(input)?;
        if version != TRACE_VERSION {
            return Err(Error::Format(format!("unsupported trace version {version}")));
        }
        let dim = read_u32(input)? as usize;
        if dim == 0 {
            return Err(Error::Format("trace header has D = 0".into()));
        }
        let count = read_u32(input)? as usize;
        let mut windows = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let query = Hypervector::read_payload(dim, input)?;
            let n = read_u16(input)?;
            let q = read_u16(input)?;
            let truth = read_u16(input)?;
            windows.push(StreamWindow {
                query,
                load: LoadSample::new(u32::from(n), u32::from(q)),
                truth: usize::from(truth),
            });
        }
        Ok(Trace { dim, windows })
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
