use super::{LoadSample, Mode, PolicyConfig};
use crate::registry::Registry;

/// Chooses the execution path from the best cache similarity and the load.
pub trait PathPolicy: Send + Sync {
    fn name(&self) -> &'static str;
    fn decide(&self, rho: f64, load: LoadSample, cfg: &PolicyConfig) -> Mode;
}

/// Bypass only under high load and high similarity, delta above the gate
/// threshold, otherwise full.
#[derive(Debug, Default)]
pub struct SimilarityPolicy;

impl PathPolicy for SimilarityPolicy {
    fn name(&self) -> &'static str {
        "similarity"
    }

    fn decide(&self, rho: f64, load: LoadSample, cfg: &PolicyConfig) -> Mode {
        if rho >= cfg.tau_bypass && cfg.high_load(load) {
            Mode::Bypass
        } else if rho >= cfg.tau_gate {
            Mode::Delta
        } else {
            Mode::Full
        }
    }
}

/// The similarity policy with bypass disabled.
#[derive(Debug, Default)]
pub struct NoBypass;

impl PathPolicy for NoBypass {
    fn name(&self) -> &'static str {
        "no-bypass"
    }

    fn decide(&self, rho: f64, _load: LoadSample, cfg: &PolicyConfig) -> Mode {
        if rho >= cfg.tau_gate {
            Mode::Delta
        } else {
            Mode::Full
        }
    }
}

/// Recompute everything every window.
#[derive(Debug, Default)]
pub struct AlwaysFull;

impl PathPolicy for AlwaysFull {
    fn name(&self) -> &'static str {
        "always-full"
    }

    fn decide(&self, _rho: f64, _load: LoadSample, _cfg: &PolicyConfig) -> Mode {
        Mode::Full
    }
}

pub fn policies() -> Registry<dyn PathPolicy> {
    Registry::<dyn PathPolicy>::new("path policy")
        .with("similarity", || Box::new(SimilarityPolicy))
        .with("no-bypass", || Box::new(NoBypass))
        .with("always-full", || Box::new(AlwaysFull))
}

/// The default similarity-only decision.
pub fn decide(rho: f64, load: LoadSample, cfg: &PolicyConfig) -> Mode {
    SimilarityPolicy.decide(rho, load, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let cfg = PolicyConfig::default();
        assert_eq!(decide(0.97, LoadSample::new(12, 0), &cfg), Mode::Bypass);
        assert_eq!(decide(0.9, LoadSample::new(2, 0), &cfg), Mode::Delta);
        assert_eq!(decide(0.3, LoadSample::new(12, 9), &cfg), Mode::Full);
        assert_eq!(decide(-1.0, LoadSample::new(0, 0), &cfg), Mode::Full);
        // High similarity without load never bypasses.
        assert_eq!(decide(1.0, LoadSample::new(7, 3), &cfg), Mode::Delta);
        assert_eq!(decide(1.0, LoadSample::new(1, 4), &cfg), Mode::Bypass);
    }

    #[test]
    fn variants() {
        let cfg = PolicyConfig::default();
        let reg = policies();
        let load = LoadSample::new(20, 20);
        assert_eq!(reg.create("no-bypass").unwrap().decide(1.0, load, &cfg), Mode::Delta);
        assert_eq!(reg.create("always-full").unwrap().decide(1.0, load, &cfg), Mode::Full);
        assert_eq!(reg.create("similarity").unwrap().decide(1.0, load, &cfg), Mode::Bypass);
    }
}
