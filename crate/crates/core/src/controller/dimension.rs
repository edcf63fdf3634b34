use super::{LoadSample, Mode};
use crate::memory::BankMask;
use crate::perf::CycleModel;
use crate::registry::Registry;

/// Everything a selector may look at when picking `D'`.
#[derive(Clone, Copy, Debug)]
pub struct DimensionQuery<'a> {
    pub load: LoadSample,
    pub mode: Mode,
    /// Best cache similarity; used to estimate `|delta|` for the delta path.
    pub rho: f64,
    pub concepts: usize,
    pub budget_ms: f64,
    /// Legal masks, largest `D'` first.
    pub ladder: &'a [BankMask],
    pub cycles: &'a CycleModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionChoice {
    pub mask: BankMask,
    /// Nothing on the ladder fits the budget.
    pub overrun: bool,
}

pub trait DimensionSelector: Send + Sync {
    fn name(&self) -> &'static str;
    fn choose(&self, query: &DimensionQuery<'_>) -> DimensionChoice;
}

/// Largest `D'` whose predicted cycles fit the frame budget. The queued
/// backlog is costed as extra proposals at the same `D'`.
#[derive(Debug, Default)]
pub struct CycleBudget;

impl CycleBudget {
    pub fn predicted_ms(query: &DimensionQuery<'_>, mask: &BankMask) -> f64 {
        let d_eff = mask.d_eff();
        let rho = query.rho.clamp(-1.0, 1.0);
        let delta_est = ((1.0 - rho) / 2.0 * d_eff as f64).round() as usize;
        let n = (query.load.n + query.load.q) as usize;
        let c = query
            .cycles
            .window_cycles(query.mode, n, d_eff, delta_est.min(d_eff), query.concepts, true);
        query.cycles.cycles_to_ms(c.total())
    }
}

impl DimensionSelector for CycleBudget {
    fn name(&self) -> &'static str {
        "cycle-budget"
    }

    fn choose(&self, query: &DimensionQuery<'_>) -> DimensionChoice {
        match query
            .ladder
            .iter()
            .find(|m| Self::predicted_ms(query, m) <= query.budget_ms)
        {
            Some(mask) => DimensionChoice {
                mask: mask.clone(),
                overrun: false,
            },
            None => DimensionChoice {
                mask: query.ladder.last().expect("ladder is non-empty").clone(),
                overrun: true,
            },
        }
    }
}

/// Always the largest `D'`; never flags an overrun itself.
#[derive(Debug, Default)]
pub struct FixedMax;

impl DimensionSelector for FixedMax {
    fn name(&self) -> &'static str {
        "fixed-max"
    }

    fn choose(&self, query: &DimensionQuery<'_>) -> DimensionChoice {
        DimensionChoice {
            mask: query.ladder[0].clone(),
            overrun: false,
        }
    }
}

pub fn selectors() -> Registry<dyn DimensionSelector> {
    Registry::<dyn DimensionSelector>::new("dimension selector")
        .with("cycle-budget", || Box::new(CycleBudget))
        .with("fixed-max", || Box::new(FixedMax))
}

pub fn choose_dimension(query: &DimensionQuery<'_>) -> DimensionChoice {
    CycleBudget.choose(query)
}
