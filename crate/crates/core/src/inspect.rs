//! Human-readable dumps of traces, item memories, hypervectors and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::hdc::Hypervector;
use crate::memory::ItemMemory;
use crate::report::{read_rows, RuntimeRow, WindowReport};
use crate::workload::Trace;

/// Per (task, RT) aggregate of a per-window report.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSummary {
    pub task: String,
    pub rt: String,
    pub windows: usize,
    /// Window counts indexed bypass, delta, full.
    pub modes: [usize; 3],
    pub mean_rho: f64,
    pub overruns: usize,
}

impl TaskSummary {
    pub fn dominant(&self) -> Mode {
        let order = [Mode::Bypass, Mode::Delta, Mode::Full];
        let i = (0..3).max_by_key(|&i| (self.modes[i], std::cmp::Reverse(i))).unwrap_or(0);
        order[i]
    }
}

#[derive(Clone, Debug)]
pub enum Inspection {
    Trace(Trace),
    Memory(ItemMemory),
    Vector(Hypervector),
    Windows(Vec<WindowReport>),
    Runtime(Vec<RuntimeRow>),
}

pub fn inspect_bytes(bytes: &[u8]) -> Result<Inspection> {
    if bytes.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    let mut r = bytes;
    match bytes.get(..4) {
        Some(b"TORT") => return Ok(Inspection::Trace(Trace::read_from(&mut r)?)),
        Some(b"TORM") => return Ok(Inspection::Memory(ItemMemory::read_from(&mut r)?)),
        Some(b"HDCV") => return Ok(Inspection::Vector(Hypervector::read_from(&mut r)?)),
        _ => {}
    }
    if let Ok(rows) = read_rows::<WindowReport>(bytes) {
        if !rows.is_empty() {
            return Ok(Inspection::Windows(rows));
        }
    }
    match read_rows::<RuntimeRow>(bytes) {
        Ok(rows) if !rows.is_empty() => Ok(Inspection::Runtime(rows)),
        _ => Err(Error::Format(
            "not a trace, item memory, hypervector or cachegate report".into(),
        )),
    }
}

pub fn summarize_windows(rows: &[WindowReport]) -> Vec<TaskSummary> {
    let mut groups: BTreeMap<(String, String), Vec<&WindowReport>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.task.clone(), r.rt.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, rt), rs)| {
            let mut modes = [0; 3];
            for r in &rs {
                modes[r.mode as usize] += 1;
            }
            TaskSummary {
                task,
                rt,
                windows: rs.len(),
                modes,
                mean_rho: rs.iter().map(|r| r.rho).sum::<f64>() / rs.len() as f64,
                overruns: rs.iter().filter(|r| r.overrun).count(),
            }
        })
        .collect()
}

/// Renders an inspection; `limit` caps the per-window lines.
pub fn render(ins: &Inspection, limit: usize) -> String {
    let mut s = String::new();
    match ins {
        Inspection::Trace(t) => {
            let _ = writeln!(s, "trace: D={} windows={}", t.dim, t.windows.len());
            let mut truth: BTreeMap<usize, usize> = BTreeMap::new();
            for w in &t.windows {
                *truth.entry(w.truth).or_default() += 1;
            }
            if !t.windows.is_empty() {
                let n = t.windows.len() as f64;
                let mean_n = t.windows.iter().map(|w| f64::from(w.load.n)).sum::<f64>() / n;
                let mean_q = t.windows.iter().map(|w| f64::from(w.load.q)).sum::<f64>() / n;
                let changes = t.windows.windows(2).filter(|p| p[0].truth != p[1].truth).count();
                let _ = writeln!(
                    s,
                    "mean N={mean_n:.2} mean q={mean_q:.2} concepts={} concept changes={changes}",
                    truth.len()
                );
            }
            for (i, w) in t.windows.iter().take(limit).enumerate() {
                let _ = writeln!(s, "  {i:>6}  N={:<3} q={:<3} truth={}", w.load.n, w.load.q, w.truth);
            }
        }
        Inspection::Memory(m) => {
            let _ = writeln!(s, "item memory: M={} D={} B={}", m.concepts(), m.dim(), m.banks());
            for (j, label) in m.labels().iter().enumerate().take(limit) {
                let _ = writeln!(s, "  {j:>4}  {label:<24} ones={}", m.row(j).count_ones());
            }
        }
        Inspection::Vector(v) => {
            let _ = writeln!(s, "hypervector: D={} ones={}", v.dim(), v.count_ones());
        }
        Inspection::Windows(rows) => {
            let _ = writeln!(s, "window report: {} rows", rows.len());
            let _ = writeln!(
                s,
                "{:<16} {:<6} {:>7} {:>8} {:>8} {:>8} {:>9} {:>8}",
                "task", "rt", "windows", "bypass", "delta", "full", "mean_rho", "overrun"
            );
            for t in summarize_windows(rows) {
                let _ = writeln!(
                    s,
                    "{:<16} {:<6} {:>7} {:>8} {:>8} {:>8} {:>9.4} {:>8}",
                    t.task, t.rt, t.windows, t.modes[0], t.modes[1], t.modes[2], t.mean_rho, t.overruns
                );
            }
            for r in rows.iter().take(limit) {
                let _ = writeln!(
                    s,
                    "  {:>6} {:<6} rho={:.4} |d|={:<5} D'={:<5} N={:<3} q={:<3} {:.4} ms {:.3} mJ top={} truth={}",
                    r.window,
                    r.mode.as_str(),
                    r.rho,
                    r.delta_len,
                    r.d_eff,
                    r.n,
                    r.q,
                    r.latency_ms,
                    r.energy_mj,
                    r.topk,
                    r.truth
                );
            }
        }
        Inspection::Runtime(rows) => {
            let _ = writeln!(s, "runtime table: {} rows", rows.len());
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<16} {:<6} median={:.4} p95={:.4} jitter={:.4} headroom={:.3} ms  {:.3} W {:.2} mJ  mean_rho={:.4}",
                    r.task, r.rt, r.median_ms, r.p95_ms, r.jitter_ms, r.headroom_ms, r.mean_power_w, r.energy_mj, r.mean_rho
                );
            }
        }
    }
    s
}
