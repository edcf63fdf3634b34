//! Graph reasoner: compose a task hypervector through bound relations,
//! precompute per-concept task weights, and modulate aligner scores.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{div_round_half_even, Aligner, Precision, ScoreState};
use crate::error::{Error, Result};
use crate::hdc::{bind, name_hash, Hypervector};
use crate::memory::{BankMask, ItemMemory};

/// Fractional bits of the stored task weights (signed 8-bit).
pub const WEIGHT_FRAC_BITS: u32 = 7;
const WEIGHT_MAX: i64 = (1 << WEIGHT_FRAC_BITS) - 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RelationSet {
    dim: usize,
    relations: BTreeMap<String, Hypervector>,
}

impl RelationSet {
    pub fn new(dim: usize) -> Self {
        RelationSet {
            dim,
            relations: BTreeMap::new(),
        }
    }

    /// One seeded random relation per name, keyed by the name's hash.
    pub fn seeded<S: AsRef<str>>(dim: usize, seed: u64, names: &[S]) -> Result<Self> {
        let mut set = Self::new(dim);
        for name in names {
            let name = name.as_ref();
            set.insert(name, Hypervector::random(dim, seed, name_hash(name))?)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, name: &str, hv: Hypervector) -> Result<()> {
        if hv.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: hv.dim(),
                right: self.dim,
            });
        }
        if self.relations.contains_key(name) {
            return Err(Error::Validation(format!("relation `{name}` defined twice")));
        }
        self.relations.insert(name.to_string(), hv);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Hypervector> {
        self.relations
            .get(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }
}

/// Left fold of binding over `path`, starting from the prompt `t`.
pub fn compose_path<S: AsRef<str>>(t: &Hypervector, rels: &RelationSet, path: &[S]) -> Result<Hypervector> {
    path.iter()
        .try_fold(t.clone(), |acc, name| bind(&acc, rels.get(name.as_ref())?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskWeights {
    task: String,
    path: Vec<String>,
    composed: Hypervector,
    mask: BankMask,
    weights: Vec<f64>,
    fixed: Vec<i8>,
}

impl TaskWeights {
    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn composed(&self) -> &Hypervector {
        &self.composed
    }

    pub fn mask(&self) -> &BankMask {
        &self.mask
    }

    /// `w_j = cosine(g, h_j)` under the mask.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights in signed Q0.7.
    pub fn fixed(&self) -> &[i8] {
        &self.fixed
    }
}

/// Runs the composed vector through the aligner as if it were a query.
pub fn precompute_weights(
    task: &str,
    path: &[String],
    composed: &Hypervector,
    mem: &ItemMemory,
    mask: &BankMask,
    aligner: &Aligner,
) -> Result<TaskWeights> {
    // Weight precompute happens once per task; its traffic is not part of
    // any window.
    let mut scratch = mem.new_meter();
    let state = aligner.full_scan(composed, mem, mask, Precision::Exact, &mut scratch)?;
    let d_eff = mask.d_eff() as i64;
    let weights = (0..state.concepts()).map(|j| state.cosine(j)).collect();
    let fixed = state
        .raw()
        .iter()
        .map(|&r| {
            div_round_half_even(i64::from(r) << WEIGHT_FRAC_BITS, d_eff).clamp(-WEIGHT_MAX, WEIGHT_MAX)
                as i8
        })
        .collect();
    Ok(TaskWeights {
        task: task.to_string(),
        path: path.to_vec(),
        composed: composed.clone(),
        mask: mask.clone(),
        weights,
        fixed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    Reasoned,
    AlignerOnly,
    BypassedCache,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateDecision {
    Reasoned,
    AlignerOnly,
    BypassedCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalScores {
    pub values: Vec<f64>,
    pub source: ScoreSource,
}

impl FinalScores {
    /// Highest score, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate().skip(1) {
            if v > self.values[best] {
                best = j;
            }
        }
        best
    }

    pub fn with_source(&self, source: ScoreSource) -> FinalScores {
        FinalScores {
            values: self.values.clone(),
            source,
        }
    }
}

/// Output MUX: reasoned product, plain aligner scores, or (handled by the
/// caller) a cached output.
pub fn apply(state: &ScoreState, weights: &TaskWeights, gate: GateDecision) -> Result<FinalScores> {
    match gate {
        GateDecision::BypassedCache => Err(Error::InvalidGate("bypassed-cache")),
        GateDecision::AlignerOnly => Ok(FinalScores {
            values: state.readout(),
            source: ScoreSource::AlignerOnly,
        }),
        GateDecision::Reasoned => {
            if state.mask() != weights.mask() {
                return Err(Error::MaskTagMismatch);
            }
            let values = match state.precision() {
                Precision::Exact => (0..state.concepts())
                    .map(|j| state.cosine(j) * weights.weights[j])
                    .collect(),
                p => {
                    let bits = p.bits().expect("quantized precision");
                    let hi = (1i64 << (bits - 1)) - 1;
                    state
                        .quantized()
                        .iter()
                        .zip(&weights.fixed)
                        .map(|(&s, &w)| {
                            let prod = div_round_half_even(
                                i64::from(s) * i64::from(w),
                                1 << WEIGHT_FRAC_BITS,
                            )
                            .clamp(-hi, hi);
                            prod as f64 * p.ulp()
                        })
                        .collect()
                }
            };
            Ok(FinalScores {
                values,
                source: ScoreSource::Reasoned,
            })
        }
    }
}

/// One task as written in the experiment config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefinition {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_file: Option<PathBuf>,
    #[serde(default)]
    pub path: Vec<String>,
}

impl TaskDefinition {
    /// The prompt hypervector: loaded from file, or seeded by task id.
    pub fn prompt(&self, dim: usize, base_dir: &Path) -> Result<Hypervector> {
        match (&self.prompt_seed, &self.prompt_file) {
            (Some(_), Some(_)) => Err(Error::Config(format!(
                "task `{}` sets both prompt_seed and prompt_file",
                self.id
            ))),
            (_, Some(file)) => {
                let path = base_dir.join(file);
                let f = std::fs::File::open(&path).map_err(|e| {
                    Error::Config(format!("cannot open prompt file {}: {e}", path.display()))
                })?;
                let hv = Hypervector::read_from(&mut std::io::BufReader::new(f))?;
                if hv.dim() != dim {
                    return Err(Error::Config(format!(
                        "prompt file {} has D={}, item memory has D={dim}",
                        path.display(),
                        hv.dim()
                    )));
                }
                Ok(hv)
            }
            (seed, None) => Hypervector::random(dim, seed.unwrap_or(0), name_hash(&self.id)),
        }
    }
}

/// Task weights precomputed for every mask the controller may latch.
#[derive(Clone, Debug)]
pub struct Reasoner {
    task: String,
    path: Vec<String>,
    composed: Hypervector,
    per_mask: Vec<TaskWeights>,
}

impl Reasoner {
    pub fn new(
        task: &str,
        prompt: &Hypervector,
        rels: &RelationSet,
        path: &[String],
        mem: &ItemMemory,
        ladder: &[BankMask],
        aligner: &Aligner,
    ) -> Result<Self> {
        let composed = compose_path(prompt, rels, path)?;
        let per_mask = ladder
            .iter()
            .map(|m| precompute_weights(task, path, &composed, mem, m, aligner))
            .collect::<Result<Vec<_>>>()?;
        Ok(Reasoner {
            task: task.to_string(),
            path: path.to_vec(),
            composed,
            per_mask,
        })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn composed(&self) -> &Hypervector {
        &self.composed
    }

    pub fn weights_for(&self, mask: &BankMask) -> Result<&TaskWeights> {
        self.per_mask
            .iter()
            .find(|w| w.mask() == mask)
            .ok_or(Error::MaskTagMismatch)
    }
}
