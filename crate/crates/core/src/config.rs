//! Experiment configuration: one TOML file describing memory, policy,
//! cycle and power models, relations, workload profiles and tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{PolicyConfig, RtTarget};
use crate::error::{Error, Result};
use crate::memory::ItemMemory;
use crate::perf::{CycleModel, PowerTable};
use crate::reasoner::{RelationSet, TaskDefinition};
use crate::workload::TaskProfile;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (csv, json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Item-memory file; when set the sizes below are taken from it.
    pub file: Option<PathBuf>,
    pub concepts: usize,
    pub dim: usize,
    pub banks: usize,
    pub seed: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            file: None,
            concepts: 80,
            dim: 8192,
            banks: 16,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub idle_fraction: f64,
    /// Per-block active power overrides in mW, keyed by block name.
    pub active_mw: BTreeMap<String, f64>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            idle_fraction: DEFAULT_IDLE_FRACTION,
            active_mw: BTreeMap::new(),
        }
    }
}

/// Fitted against the shipped profiles; see `cachegate calibrate`.
pub const DEFAULT_IDLE_FRACTION: f64 = 0.6816;

impl PowerConfig {
    pub fn table(&self) -> Result<PowerTable> {
        PowerTable::reference(self.idle_fraction).with_overrides(&self.active_mw)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationConfig {
    pub seed: u64,
    pub names: Vec<String>,
}

impl Default for RelationConfig {
    fn default() -> Self {
        RelationConfig {
            seed: 99,
            names: ["used-for", "part-of", "located-at", "held-by"].map(String::from).to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub windows: usize,
    /// Fail the run when any window overruns its budget.
    pub strict: bool,
    pub format: OutputFormat,
    pub out_dir: PathBuf,
    pub targets: Vec<RtTarget>,
    pub memory: MemoryConfig,
    pub policy: PolicyConfig,
    pub cycle: CycleModel,
    pub power: PowerConfig,
    pub relations: RelationConfig,
    pub profiles: Vec<TaskProfile>,
    pub tasks: Vec<TaskDefinition>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_tasks() -> Vec<TaskDefinition> {
    let paths: [(&str, u64, &[&str]); 5] = [
        ("have-breakfast", 11, &["used-for"]),
        ("take-a-rest", 12, &["located-at"]),
        ("cooking", 13, &["used-for", "part-of"]),
        ("pour-wine", 14, &["held-by", "used-for"]),
        ("sports", 15, &["used-for", "held-by"]),
    ];
    paths
        .iter()
        .map(|(id, seed, path)| TaskDefinition {
            id: id.to_string(),
            prompt_seed: Some(*seed),
            prompt_file: None,
            path: path.iter().map(|s| s.to_string()).collect(),
        })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            windows: 2000,
            strict: false,
            format: OutputFormat::Csv,
            out_dir: PathBuf::from("out"),
            targets: RtTarget::ALL.to_vec(),
            memory: MemoryConfig::default(),
            policy: PolicyConfig::default(),
            cycle: CycleModel::default(),
            power: PowerConfig::default(),
            relations: RelationConfig::default(),
            profiles: TaskProfile::defaults(),
            tasks: default_tasks(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::from_toml_str(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.windows == 0 {
            return bad("windows must be positive".into());
        }
        if self.targets.is_empty() {
            return bad("targets must name RT-30 and/or RT-60".into());
        }
        if self.targets.iter().collect::<BTreeSet<_>>().len() != self.targets.len() {
            return bad("targets lists a target twice".into());
        }
        self.policy.validate()?;
        self.cycle.validate()?;
        self.power.table()?;
        match &self.memory.file {
            Some(f) => {
                let path = self.resolve(f);
                if !path.is_file() {
                    return bad(format!("item-memory file {} does not exist", path.display()));
                }
            }
            None => {
                let m = &self.memory;
                if m.concepts < 2 || m.banks == 0 || m.banks > 64 || !m.dim.is_multiple_of(64 * m.banks) {
                    return bad(format!(
                        "memory: need M >= 2 and D a multiple of 64*B (M={}, D={}, B={})",
                        m.concepts, m.dim, m.banks
                    ));
                }
                if self.policy.top_k >= m.concepts {
                    return bad(format!("top_k = {} needs more than M = {}", self.policy.top_k, m.concepts));
                }
                self.policy.ladder_masks(m.dim, m.banks)?;
            }
        }
        if self.profiles.is_empty() {
            return bad("at least one profile is required".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return bad(format!("profile `{}` defined twice", p.name));
            }
        }
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if !names.contains(t.id.as_str()) {
                return bad(format!("task `{}` has no matching profile", t.id));
            }
            if !ids.insert(t.id.as_str()) {
                return bad(format!("task `{}` defined twice", t.id));
            }
            if let Some(r) = t.path.iter().find(|r| !self.relations.names.contains(r)) {
                return bad(format!("task `{}` uses undeclared relation `{r}`", t.id));
            }
            if t.prompt_seed.is_some() && t.prompt_file.is_some() {
                return bad(format!("task `{}` sets both prompt_seed and prompt_file", t.id));
            }
        }
        Ok(())
    }

    pub fn load_memory(&self) -> Result<ItemMemory> {
        let mem = match &self.memory.file {
            Some(f) => ItemMemory::load(self.resolve(f))?,
            None => ItemMemory::random(self.memory.concepts, self.memory.dim, self.memory.banks, self.memory.seed)?,
        };
        if self.policy.top_k >= mem.concepts() {
            return Err(Error::Config(format!(
                "top_k = {} needs more than M = {}",
                self.policy.top_k,
                mem.concepts()
            )));
        }
        self.policy.ladder_masks(mem.dim(), mem.banks())?;
        Ok(mem)
    }

    pub fn relation_set(&self, dim: usize) -> Result<RelationSet> {
        RelationSet::seeded(dim, self.relations.seed, &self.relations.names)
    }

    /// The task attached to a profile; a bare seeded prompt when none is given.
    pub fn task_for(&self, profile: &str) -> TaskDefinition {
        self.tasks
            .iter()
            .find(|t| t.id == profile)
            .cloned()
            .unwrap_or_else(|| TaskDefinition {
                id: profile.to_string(),
                prompt_seed: None,
                prompt_file: None,
                path: Vec::new(),
            })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }
}
