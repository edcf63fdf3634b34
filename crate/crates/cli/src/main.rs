use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cachegate::config::{ExperimentConfig, OutputFormat};
use cachegate::experiment::{calibrate, profile_stream, run_in_memory, write_outputs, CALIBRATION_TARGET_W};
use cachegate::inspect::{inspect_bytes, render};
use cachegate::memory::ItemMemory;
use cachegate::verify::{checks, run_all, VerifyOptions};
use cachegate::workload::Trace;
use cachegate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "cachegate", version, about = "Cycle-level simulator for a cached, bank-gated HDC aligner")]
struct Cli {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Exit 1 when any window overruns its frame budget.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory (run) or file (gen-memory, gen-trace).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fault {
    Delta,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replay every profile at every RT target and write the tables.
    Run {
        /// Overrides the number of windows per run.
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Run the conformance checks and print one line per check.
    Verify {
        /// Run about 5% of the random cases.
        #[arg(long)]
        quick: bool,
        /// Run only the named check.
        #[arg(long, value_name = "NAME")]
        only: Option<String>,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Dump a trace, item memory, hypervector or report file.
    Inspect {
        path: PathBuf,
        /// Per-window lines to print.
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Write a seeded item-memory file.
    GenMemory {
        #[arg(long)]
        concepts: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        banks: Option<usize>,
    },
    /// Write the query stream of one profile as a trace file.
    GenTrace {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Refit the global idle fraction to a mean-power target.
    Calibrate {
        #[arg(long, default_value_t = CALIBRATION_TARGET_W)]
        target_w: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.strict {
        cfg.strict = true;
    }
    if let Some(f) = cli.format {
        cfg.format = f.into();
    }
    Ok(cfg)
}

fn out_file(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --out FILE")))
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { windows } => {
            let mut cfg = load_config(cli)?;
            if let Some(w) = windows {
                cfg.windows = *w;
            }
            cfg.validate()?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.resolve(&cfg.out_dir));
            let result = run_in_memory(&cfg)?;
            write_outputs(&result, &cfg, &out)?;
            for r in &result.runtime {
                println!(
                    "{:<16} {:<6} median {:.4} ms  p95 {:.4} ms  jitter {:.4} ms  {:.3} W  {:.2} mJ  overruns {}",
                    r.task, r.rt, r.median_ms, r.p95_ms, r.jitter_ms, r.mean_power_w, r.energy_mj, r.overruns
                );
            }
            println!("wrote {}", out.display());
            let overruns = result.overruns();
            if cfg.strict && overruns > 0 {
                eprintln!("strict mode: {overruns} window(s) overran their frame budget");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { quick, only, inject_fault } => {
            let cfg = load_config(cli)?;
            let opts = VerifyOptions {
                seed: cfg.seed,
                scale: if *quick { 0.05 } else { 1.0 },
                inject_delta_fault: matches!(inject_fault, Some(Fault::Delta)),
                policy: cfg.policy.clone(),
            };
            let reports = match only {
                Some(name) => vec![checks().create(name)?.run(&opts)?],
                None => run_all(&opts)?,
            };
            for r in &reports {
                println!("{}", r.line());
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { path, limit } => {
            let bytes = std::fs::read(path)?;
            print!("{}", render(&inspect_bytes(&bytes)?, *limit));
            Ok(ExitCode::SUCCESS)
        }
        Command::GenMemory { concepts, dim, banks } => {
            let cfg = load_config(cli)?;
            let m = &cfg.memory;
            let mem = ItemMemory::random(
                concepts.unwrap_or(m.concepts),
                dim.unwrap_or(m.dim),
                banks.unwrap_or(m.banks),
                cli.seed.unwrap_or(m.seed),
            )
            .map_err(|e| Error::Config(e.to_string()))?;
            let out = out_file(cli, "gen-memory")?;
            mem.store(&out)?;
            println!("wrote {} (M={} D={} B={})", out.display(), mem.concepts(), mem.dim(), mem.banks());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenTrace { profile, windows } => {
            let mut cfg = load_config(cli)?;
            if let Some(w) = windows {
                cfg.windows = *w;
            }
            cfg.validate()?;
            let p = cfg
                .profiles
                .iter()
                .find(|p| &p.name == profile)
                .ok_or_else(|| Error::Config(format!("no profile named `{profile}`")))?;
            let mem = cfg.load_memory()?;
            let trace = Trace {
                dim: mem.dim(),
                windows: profile_stream(&cfg, &mem, p)?,
            };
            let out = out_file(cli, "gen-trace")?;
            trace.store(&out)?;
            println!("wrote {} ({} windows, D={})", out.display(), trace.windows.len(), trace.dim);
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { target_w } => {
            let cfg = load_config(cli)?;
            let f = calibrate(&cfg, *target_w)?;
            println!("[power]\nidle_fraction = {f}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
