//! Path policy, dimension gating, query/output caches and the per-window
//! state machine.

mod cache;
mod dimension;
mod engine;
mod policy;

pub use cache::{CacheLine, Lookup, QueryCache};
pub use dimension::{
    choose_dimension, selectors, CycleBudget, DimensionChoice, DimensionQuery, DimensionSelector, FixedMax,
};
pub use engine::{Engine, WindowOutcome};
pub use policy::{decide, policies, AlwaysFull, NoBypass, PathPolicy, SimilarityPolicy};

use serde::{Deserialize, Serialize};

use crate::align::Precision;
use crate::error::{Error, Result};
use crate::memory::BankMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bypass,
    Delta,
    Full,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bypass => "bypass",
            Mode::Delta => "delta",
            Mode::Full => "full",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RtTarget {
    #[serde(rename = "RT-30")]
    Rt30,
    #[serde(rename = "RT-60")]
    Rt60,
}

impl RtTarget {
    pub const ALL: [RtTarget; 2] = [RtTarget::Rt30, RtTarget::Rt60];

    /// Frame budget, which is also the frame period used for energy.
    pub fn budget_ms(self) -> f64 {
        match self {
            RtTarget::Rt30 => 33.33,
            RtTarget::Rt60 => 16.67,
        }
    }

    pub fn budget_s(self) -> f64 {
        self.budget_ms() / 1e3
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RtTarget::Rt30 => "RT-30",
            RtTarget::Rt60 => "RT-60",
        }
    }
}

impl std::fmt::Display for RtTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSample {
    /// Object proposals this window.
    pub n: u32,
    /// Queue depth at window start.
    pub q: u32,
}

impl LoadSample {
    pub fn new(n: u32, q: u32) -> Self {
        LoadSample { n, q }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub tau_bypass: f64,
    pub tau_gate: f64,
    /// Minimum top-k margin (cosine units) for reusing the previous output.
    pub tau_margin: f64,
    pub n_high: u32,
    pub q_high: u32,
    /// Query cache depth K.
    pub cache_depth: usize,
    pub top_k: usize,
    pub precision: Precision,
    /// Allowed effective dimensions, largest first.
    pub ladder: Vec<usize>,
    /// Flip FIFO depth; `D / 8` when unset.
    pub delta_capacity: Option<usize>,
    pub reasoner_enabled: bool,
    pub reasoner_gating: bool,
    pub path_policy: String,
    pub dimension_selector: String,
    pub kernel: String,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            tau_bypass: 0.95,
            tau_gate: 0.80,
            tau_margin: 0.02,
            n_high: 8,
            q_high: 4,
            cache_depth: 4,
            top_k: 3,
            precision: Precision::Int8,
            ladder: vec![8192, 4096, 2048, 1024, 512],
            delta_capacity: None,
            reasoner_enabled: true,
            reasoner_gating: true,
            path_policy: "similarity".into(),
            dimension_selector: "cycle-budget".into(),
            kernel: "row-popcount".into(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(-1.0..=1.0).contains(&self.tau_gate)
            || !(-1.0..=1.0).contains(&self.tau_bypass)
            || self.tau_gate > self.tau_bypass
        {
            return bad(format!(
                "thresholds must satisfy -1 <= tau_gate ({}) <= tau_bypass ({}) <= 1",
                self.tau_gate, self.tau_bypass
            ));
        }
        if !(self.tau_margin >= 0.0) {
            return bad("tau_margin must be non-negative".into());
        }
        if self.cache_depth == 0 {
            return bad("cache_depth must be at least 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.ladder.is_empty() {
            return bad("ladder must list at least one effective dimension".into());
        }
        if let Some(d) = self.ladder.iter().find(|d| !d.is_power_of_two()) {
            return bad(format!("ladder entry {d} is not a power of two"));
        }
        if self.ladder.windows(2).any(|w| w[0] <= w[1]) {
            return bad("ladder must be strictly descending".into());
        }
        if self.delta_capacity == Some(0) {
            return bad("delta_capacity must be positive".into());
        }
        for (kind, name, known) in [
            ("path_policy", &self.path_policy, policies().contains(&self.path_policy)),
            (
                "dimension_selector",
                &self.dimension_selector,
                selectors().contains(&self.dimension_selector),
            ),
            ("kernel", &self.kernel, crate::kernel::kernels().contains(&self.kernel)),
        ] {
            if !known {
                return bad(format!("unknown {kind} `{name}`"));
            }
        }
        Ok(())
    }

    /// The ladder as masks over a `dim`-wide, `banks`-bank memory.
    pub fn ladder_masks(&self, dim: usize, banks: usize) -> Result<Vec<BankMask>> {
        self.ladder
            .iter()
            .map(|&d| BankMask::for_d_eff(dim, banks, d).map_err(|e| Error::Config(format!("ladder: {e}"))))
            .collect()
    }

    pub fn high_load(&self, load: LoadSample) -> bool {
        load.n >= self.n_high || load.q >= self.q_high
    }
}

/// Control registers latched for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct PathDecision {
    pub mode: Mode,
    pub mask: BankMask,
    pub precision: Precision,
    /// `log2(D')`.
    pub shift: u32,
    /// Id of the matched cache line for bypass and delta.
    pub line: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PolicyConfig::default().validate().unwrap();
        let masks = PolicyConfig::default().ladder_masks(8192, 16).unwrap();
        assert_eq!(masks.len(), 5);
        assert!(masks.iter().all(BankMask::is_legal));
    }

    #[test]
    fn rejects_bad_configs() {
        let cases: Vec<Box<dyn Fn(&mut PolicyConfig)>> = vec![
            Box::new(|c| c.ladder = vec![8192, 3000]),
            Box::new(|c| c.ladder = vec![]),
            Box::new(|c| c.ladder = vec![512, 1024]),
            Box::new(|c| c.tau_gate = 0.99),
            Box::new(|c| c.cache_depth = 0),
            Box::new(|c| c.path_policy = "oracle".into()),
        ];
        for f in cases {
            let mut c = PolicyConfig::default();
            f(&mut c);
            assert!(c.validate().unwrap_err().is_config_error());
        }
        let mut c = PolicyConfig::default();
        c.ladder = vec![8192, 256];
        assert!(c.ladder_masks(8192, 16).is_err(), "256 is below one bank");
    }

    #[test]
    fn budgets() {
        assert_eq!(RtTarget::Rt60.budget_ms(), 16.67);
        assert_eq!(RtTarget::Rt30.budget_ms(), 33.33);
    }
}
