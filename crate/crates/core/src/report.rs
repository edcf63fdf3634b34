//! Telemetry rows and table writers. Column order is part of the schema.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::controller::{Mode, RtTarget, WindowOutcome};
use crate::error::{Error, Result};
use crate::perf::{Block, LatencyStats};

/// Bumped whenever a column is added, removed or reordered.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: u64,
    pub task: String,
    pub rt: String,
    pub mode: Mode,
    pub rho: f64,
    pub delta_len: usize,
    pub d_eff: usize,
    pub precision: String,
    pub n: u32,
    pub q: u32,
    pub cyc_psu: u64,
    pub cyc_aligner: u64,
    pub cyc_reasoner: u64,
    pub cyc_overhead: u64,
    pub cycles_total: u64,
    pub bits_read: u64,
    pub index_reads: u64,
    pub latency_ms: f64,
    pub energy_mj: f64,
    pub e_aligner: f64,
    pub e_reasoner: f64,
    pub e_partial_update: f64,
    pub e_score_buffer: f64,
    pub e_sorter: f64,
    pub e_controller: f64,
    pub e_host_interface: f64,
    pub e_fifo_misc: f64,
    pub e_item_memory: f64,
    pub e_caches: f64,
    /// Top-k concept indices joined by `|`.
    pub topk: String,
    pub margin: f64,
    pub reasoner_gated: bool,
    /// Aligner top-1 concept.
    pub argmax: usize,
    /// Top-1 concept of the final (task-weighted) scores.
    pub task_argmax: usize,
    pub truth: usize,
    pub overrun: bool,
    pub overflow_fallback: bool,
}

impl WindowReport {
    pub fn from_outcome(task: &str, rt: RtTarget, truth: usize, o: &WindowOutcome) -> Self {
        let e = |b: Block| o.energy.get(b);
        WindowReport {
            window: o.window,
            task: task.to_string(),
            rt: rt.as_str().to_string(),
            mode: o.mode(),
            rho: o.rho,
            delta_len: o.delta_len,
            d_eff: o.d_eff(),
            precision: o.decision.precision.as_str().to_string(),
            n: o.load.n,
            q: o.load.q,
            cyc_psu: o.cycles.psu,
            cyc_aligner: o.cycles.aligner,
            cyc_reasoner: o.cycles.reasoner,
            cyc_overhead: o.cycles.overhead,
            cycles_total: o.cycles.total(),
            bits_read: o.bits_read,
            index_reads: o.index_reads,
            latency_ms: o.latency_ms,
            energy_mj: o.energy.total(),
            e_aligner: e(Block::Aligner),
            e_reasoner: e(Block::Reasoner),
            e_partial_update: e(Block::PartialUpdate),
            e_score_buffer: e(Block::ScoreBuffer),
            e_sorter: e(Block::Sorter),
            e_controller: e(Block::Controller),
            e_host_interface: e(Block::HostInterface),
            e_fifo_misc: e(Block::FifoMisc),
            e_item_memory: e(Block::ItemMemory),
            e_caches: e(Block::Caches),
            topk: o.topk.key_string(),
            margin: o.topk.margin,
            reasoner_gated: o.reasoner_gated,
            argmax: o.topk.key[0],
            task_argmax: o.argmax(),
            truth,
            overrun: o.overrun,
            overflow_fallback: o.overflow_fallback,
        }
    }

    pub fn block_energies(&self) -> [f64; 10] {
        [
            self.e_aligner,
            self.e_reasoner,
            self.e_partial_update,
            self.e_score_buffer,
            self.e_sorter,
            self.e_controller,
            self.e_host_interface,
            self.e_fifo_misc,
            self.e_item_memory,
            self.e_caches,
        ]
    }
}

/// One row of the per-task runtime table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub task: String,
    pub rt: String,
    pub windows: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub jitter_ms: f64,
    pub headroom_ms: f64,
    pub mean_power_w: f64,
    pub energy_mj: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub bypass_frac: f64,
    pub delta_frac: f64,
    pub full_frac: f64,
    pub mean_rho: f64,
    pub accuracy: f64,
    pub overruns: usize,
}

impl RuntimeRow {
    pub fn build(task: &str, rt: RtTarget, rows: &[WindowReport]) -> Result<Self> {
        let lat: Vec<f64> = rows.iter().map(|r| r.latency_ms).collect();
        let energy: Vec<f64> = rows.iter().map(|r| r.energy_mj).collect();
        let s: LatencyStats = crate::perf::summarize(&lat, &energy, rt.budget_ms())?;
        let n = rows.len() as f64;
        let frac = |m: Mode| rows.iter().filter(|r| r.mode == m).count() as f64 / n;
        Ok(RuntimeRow {
            task: task.to_string(),
            rt: rt.as_str().to_string(),
            windows: rows.len(),
            median_ms: s.median_ms,
            p95_ms: s.p95_ms,
            jitter_ms: s.jitter_ms,
            headroom_ms: s.headroom_ms,
            mean_power_w: s.mean_power_w,
            energy_mj: s.energy_mj,
            min_ms: s.min_ms,
            max_ms: s.max_ms,
            bypass_frac: frac(Mode::Bypass),
            delta_frac: frac(Mode::Delta),
            full_frac: frac(Mode::Full),
            mean_rho: rows.iter().map(|r| r.rho).sum::<f64>() / n,
            accuracy: rows.iter().filter(|r| r.argmax == r.truth).count() as f64 / n,
            overruns: rows.iter().filter(|r| r.overrun).count(),
        })
    }
}

/// Global min/max latency per target and the task holding each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub rt: String,
    pub global_min_ms: f64,
    pub min_task: String,
    pub global_max_ms: f64,
    pub max_task: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEnvelopeRow {
    pub rt: String,
    pub task: String,
    pub mode: Mode,
    pub windows: usize,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Envelope over runs; ties keep the earlier task.
pub fn envelope(runtime: &[RuntimeRow]) -> Vec<EnvelopeRow> {
    let mut out = Vec::new();
    for rt in RtTarget::ALL {
        let rows: Vec<&RuntimeRow> = runtime.iter().filter(|r| r.rt == rt.as_str()).collect();
        let Some(first) = rows.first() else { continue };
        let (mut lo, mut hi) = (*first, *first);
        for r in &rows[1..] {
            if r.min_ms < lo.min_ms {
                lo = r;
            }
            if r.max_ms > hi.max_ms {
                hi = r;
            }
        }
        out.push(EnvelopeRow {
            rt: rt.as_str().to_string(),
            global_min_ms: lo.min_ms,
            min_task: lo.task.clone(),
            global_max_ms: hi.max_ms,
            max_task: hi.task.clone(),
        });
    }
    out
}

pub fn mode_envelope(task: &str, rt: RtTarget, rows: &[WindowReport]) -> Vec<ModeEnvelopeRow> {
    [Mode::Bypass, Mode::Delta, Mode::Full]
        .into_iter()
        .filter_map(|mode| {
            let lat: Vec<f64> = rows.iter().filter(|r| r.mode == mode).map(|r| r.latency_ms).collect();
            (!lat.is_empty()).then(|| ModeEnvelopeRow {
                rt: rt.as_str().to_string(),
                task: task.to_string(),
                mode,
                windows: lat.len(),
                min_ms: lat.iter().copied().fold(f64::INFINITY, f64::min),
                max_ms: lat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], format: OutputFormat) -> Result<()> {
    let file = File::create(path)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            for r in rows {
                w.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| Error::Format(format!("json: {e}")))?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Reads rows written by [`write_rows`]; the format is sniffed from content.
pub fn read_rows<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    match first {
        None => Err(Error::Format("empty report".into())),
        Some(b'[') => serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("json report: {e}"))),
        Some(_) => {
            let mut r = csv::Reader::from_reader(bytes);
            r.deserialize()
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|e| Error::Format(format!("csv report: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: Mode, lat: f64) -> WindowReport {
        WindowReport {
            window: 0,
            task: "t".into(),
            rt: "RT-60".into(),
            mode,
            rho: 0.5,
            delta_len: 1,
            d_eff: 8192,
            precision: "int8".into(),
            n: 1,
            q: 0,
            cyc_psu: 0,
            cyc_aligner: 0,
            cyc_reasoner: 0,
            cyc_overhead: 0,
            cycles_total: 0,
            bits_read: 0,
            index_reads: 0,
            latency_ms: lat,
            energy_mj: 50.0,
            e_aligner: 0.0,
            e_reasoner: 0.0,
            e_partial_update: 0.0,
            e_score_buffer: 0.0,
            e_sorter: 0.0,
            e_controller: 0.0,
            e_host_interface: 0.0,
            e_fifo_misc: 0.0,
            e_item_memory: 0.0,
            e_caches: 0.0,
            topk: "1|2|3".into(),
            margin: 0.1,
            reasoner_gated: false,
            argmax: 1,
            task_argmax: 2,
            truth: 1,
            overrun: false,
            overflow_fallback: false,
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(Mode::Full, 1.0), row(Mode::Bypass, 0.5)];
        for f in [OutputFormat::Csv, OutputFormat::Json] {
            let p = dir.path().join(format!("r.{}", f.extension()));
            write_rows(&p, &rows, f).unwrap();
            let back: Vec<WindowReport> = read_rows(&std::fs::read(&p).unwrap()).unwrap();
            assert_eq!(back, rows);
        }
        assert!(read_rows::<WindowReport>(b"").is_err());
        assert!(read_rows::<WindowReport>(b"  \n").is_err());
    }

    #[test]
    fn runtime_and_envelope() {
        let rows: Vec<WindowReport> = (1..=20).map(|i| row(Mode::Delta, f64::from(i))).collect();
        let r = RuntimeRow::build("a", RtTarget::Rt60, &rows).unwrap();
        assert_eq!((r.median_ms, r.p95_ms, r.jitter_ms), (10.0, 19.0, 9.0));
        assert!((r.mean_power_w - 50.0 / 16.67).abs() < 1e-12);
        let mut b = r.clone();
        b.task = "b".into();
        b.min_ms = 0.5;
        b.max_ms = 30.0;
        let env = envelope(&[r, b]);
        assert_eq!(env.len(), 1);
        assert_eq!((env[0].min_task.as_str(), env[0].max_task.as_str()), ("b", "b"));
        let me = mode_envelope("a", RtTarget::Rt60, &rows);
        assert_eq!(me.len(), 1);
        assert_eq!((me[0].min_ms, me[0].max_ms), (1.0, 20.0));
    }
}
