//! Runs every (profile, RT target) pair of a config and writes the tables.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::controller::{Engine, RtTarget};
use crate::error::{Error, Result};
use crate::hdc::{counter_word, name_hash};
use crate::memory::ItemMemory;
use crate::perf::{fit_idle_fraction, BlockBusy, CycleModel, PowerTable};
use crate::reasoner::RelationSet;
use crate::report::{
    envelope, mode_envelope, write_rows, EnvelopeRow, ModeEnvelopeRow, RuntimeRow, WindowReport,
    REPORT_SCHEMA_VERSION,
};
use crate::workload::{generate_stream, StreamWindow, TaskProfile};

const STREAM_SALT: u64 = 0x7374_7265_616d;

/// Stream seed for one profile. Both RT targets replay the same stream.
pub fn stream_seed(seed: u64, profile: &str) -> u64 {
    counter_word(seed, STREAM_SALT, name_hash(profile))
}

#[derive(Clone, Debug)]
pub struct TaskRun {
    pub task: String,
    pub rt: RtTarget,
    pub rows: Vec<WindowReport>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub runs: Vec<TaskRun>,
    pub runtime: Vec<RuntimeRow>,
    pub envelope: Vec<EnvelopeRow>,
    pub mode_envelope: Vec<ModeEnvelopeRow>,
}

impl ExperimentResult {
    pub fn run(&self, task: &str, rt: RtTarget) -> Option<&TaskRun> {
        self.runs.iter().find(|r| r.task == task && r.rt == rt)
    }

    pub fn runtime_row(&self, task: &str, rt: RtTarget) -> Option<&RuntimeRow> {
        self.runtime.iter().find(|r| r.task == task && r.rt == rt.as_str())
    }

    pub fn overruns(&self) -> usize {
        self.runtime.iter().map(|r| r.overruns).sum()
    }
}

/// Shared inputs built once per config.
pub struct Setup {
    pub mem: Arc<ItemMemory>,
    pub rels: RelationSet,
    pub power: PowerTable,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mem = Arc::new(cfg.load_memory()?);
        let rels = cfg.relation_set(mem.dim())?;
        Ok(Setup {
            mem,
            rels,
            power: cfg.power.table()?,
        })
    }
}

pub fn run_stream(
    cfg: &ExperimentConfig,
    setup: &Setup,
    profile: &str,
    rt: RtTarget,
    stream: &[StreamWindow],
) -> Result<TaskRun> {
    let task = cfg.task_for(profile);
    let prompt = task.prompt(setup.mem.dim(), &cfg.base_dir)?;
    let mut engine = Engine::new(
        Arc::clone(&setup.mem),
        &prompt,
        &setup.rels,
        &task.path,
        cfg.policy.clone(),
        cfg.cycle.clone(),
        setup.power.clone(),
        rt,
    )?;
    let rows = stream
        .iter()
        .map(|w| {
            let o = engine.step_window(&w.query, w.load)?;
            Ok(WindowReport::from_outcome(profile, rt, w.truth, &o))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskRun {
        task: profile.to_string(),
        rt,
        rows,
    })
}

pub fn profile_stream(cfg: &ExperimentConfig, mem: &ItemMemory, profile: &TaskProfile) -> Result<Vec<StreamWindow>> {
    generate_stream(profile, mem, cfg.windows, stream_seed(cfg.seed, &profile.name))
}

pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let mut runs = Vec::new();
    for profile in &cfg.profiles {
        let stream = profile_stream(cfg, &setup.mem, profile)?;
        for &rt in &cfg.targets {
            runs.push(run_stream(cfg, &setup, &profile.name, rt, &stream)?);
        }
    }
    let runtime = runs
        .iter()
        .map(|r| RuntimeRow::build(&r.task, r.rt, &r.rows))
        .collect::<Result<Vec<_>>>()?;
    let mode_env = runs.iter().flat_map(|r| mode_envelope(&r.task, r.rt, &r.rows)).collect();
    Ok(ExperimentResult {
        envelope: envelope(&runtime),
        runtime,
        mode_envelope: mode_env,
        runs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub report_schema: u32,
    pub seed: u64,
    pub windows: usize,
    pub format: OutputFormat,
    pub targets: Vec<String>,
    pub profiles: Vec<String>,
    pub idle_fraction: f64,
    pub overruns: usize,
    pub files: Vec<String>,
}

/// Writes per-window tables, the runtime and envelope tables and a manifest.
/// Output is a pure function of the config: no timestamps, fixed order.
pub fn write_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ext = cfg.format.extension();
    std::fs::create_dir_all(out_dir.join("windows"))?;
    let mut files = Vec::new();
    for run in &result.runs {
        let rel = format!("windows/{}_{}.{ext}", run.task, run.rt.as_str());
        write_rows(&out_dir.join(&rel), &run.rows, cfg.format)?;
        files.push(rel);
    }
    let tables: [(&str, &dyn Fn(&Path) -> Result<()>); 3] = [
        ("runtime", &|p| write_rows(p, &result.runtime, cfg.format)),
        ("envelope", &|p| write_rows(p, &result.envelope, cfg.format)),
        ("envelope_by_mode", &|p| write_rows(p, &result.mode_envelope, cfg.format)),
    ];
    for (name, write) in tables {
        let rel = format!("{name}.{ext}");
        write(&out_dir.join(&rel))?;
        files.push(rel);
    }
    let manifest = Manifest {
        tool: "cachegate",
        version: env!("CARGO_PKG_VERSION"),
        report_schema: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        windows: cfg.windows,
        format: cfg.format,
        targets: cfg.targets.iter().map(|t| t.as_str().to_string()).collect(),
        profiles: cfg.profiles.iter().map(|p| p.name.clone()).collect(),
        idle_fraction: cfg.power.idle_fraction,
        overruns: result.overruns(),
        files: files.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
    files.push("manifest.json".into());
    Ok(files.into_iter().map(|f| out_dir.join(f)).collect())
}

/// Busy profile of a reported window, for refitting power without rerunning.
pub fn window_busy(row: &WindowReport, concepts: usize, model: &CycleModel) -> BlockBusy {
    let cycles = crate::perf::BlockCycles {
        psu: row.cyc_psu,
        aligner: row.cyc_aligner,
        reasoner: row.cyc_reasoner,
        overhead: row.cyc_overhead,
    };
    BlockBusy::from_window(row.mode, row.n as usize, concepts, &cycles, model)
}

/// Mean-power target the shipped idle fraction is fitted to.
pub const CALIBRATION_TARGET_W: f64 = 3.27;

/// Fits the global idle fraction so the config's workload averages `target_w`.
/// Busy time does not depend on power, so one run suffices.
pub fn calibrate(cfg: &ExperimentConfig, target_w: f64) -> Result<f64> {
    let result = run_in_memory(cfg)?;
    let concepts = cfg.load_memory()?.concepts();
    let busy: Vec<(BlockBusy, f64)> = result
        .runs
        .iter()
        .flat_map(|run| {
            run.rows
                .iter()
                .map(move |r| (window_busy(r, concepts, &cfg.cycle), run.rt.budget_s()))
        })
        .collect();
    let table = cfg.power.table()?;
    fit_idle_fraction(busy.iter().map(|(b, f)| (b, *f)), &table, cfg.cycle.clock_hz, target_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            windows: 60,
            ..ExperimentConfig::default()
        };
        cfg.memory.concepts = 16;
        cfg.memory.dim = 2048;
        cfg.memory.banks = 8;
        cfg.policy.ladder = vec![2048, 1024, 512, 256];
        cfg
    }

    #[test]
    fn runs_every_pair_and_is_deterministic() {
        let cfg = small();
        let a = run_in_memory(&cfg).unwrap();
        assert_eq!(a.runs.len(), 10);
        assert_eq!(a.runtime.len(), 10);
        assert_eq!(a.envelope.len(), 2);
        let b = run_in_memory(&cfg).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.rows, y.rows);
        }
    }

    #[test]
    fn rt_targets_share_the_stream() {
        let a = run_in_memory(&small()).unwrap();
        let r30 = a.run("cooking", RtTarget::Rt30).unwrap();
        let r60 = a.run("cooking", RtTarget::Rt60).unwrap();
        let truths = |r: &TaskRun| r.rows.iter().map(|w| w.truth).collect::<Vec<_>>();
        assert_eq!(truths(r30), truths(r60));
    }

    #[test]
    fn busy_reconstruction_matches_reported_energy() {
        let cfg = small();
        let a = run_in_memory(&cfg).unwrap();
        let table = cfg.power.table().unwrap();
        for run in &a.runs {
            for r in &run.rows {
                let busy = window_busy(r, 16, &cfg.cycle);
                let e = crate::perf::window_energy(&busy, &table, cfg.cycle.clock_hz, run.rt.budget_s());
                assert!((e.total() - r.energy_mj).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn calibration_hits_its_target() {
        let mut cfg = small();
        let f = calibrate(&cfg, 3.0).unwrap();
        cfg.power.idle_fraction = f;
        let a = run_in_memory(&cfg).unwrap();
        let (mut e, mut t) = (0.0, 0.0);
        for run in &a.runs {
            e += run.rows.iter().map(|r| r.energy_mj).sum::<f64>();
            t += run.rows.len() as f64 * run.rt.budget_s();
        }
        assert!((e / t / 1e3 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn outputs_are_written_without_timestamps() {
        let cfg = small();
        let a = run_in_memory(&cfg).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = write_outputs(&a, &cfg, d1.path()).unwrap();
        write_outputs(&a, &cfg, d2.path()).unwrap();
        assert_eq!(f1.len(), 14);
        for f in &f1 {
            let rel = f.strip_prefix(d1.path()).unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(d2.path().join(rel)).unwrap());
        }
        assert!(d1.path().join("windows/sports_RT-60.csv").is_file());
    }
}
