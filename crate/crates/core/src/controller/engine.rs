use std::sync::Arc;

use super::{
    policies, selectors, CycleBudget, DimensionQuery, DimensionSelector, LoadSample, Lookup, Mode, PathDecision,
    PathPolicy, PolicyConfig, QueryCache, RtTarget,
};
use crate::align::{default_delta_capacity, top_k, Aligner, ScoreState, TopK};
use crate::error::{Error, Result};
use crate::hdc::Hypervector;
use crate::kernel::kernels;
use crate::memory::{BankMask, ItemMemory};
use crate::perf::{window_energy, BlockBusy, BlockCycles, BlockEnergy, CycleModel, PowerTable};
use crate::reasoner::{apply, FinalScores, GateDecision, Reasoner, RelationSet, ScoreSource};

/// Everything observed about one window.
#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub window: u64,
    pub decision: PathDecision,
    pub rho: f64,
    pub delta_len: usize,
    pub load: LoadSample,
    pub cycles: BlockCycles,
    pub bits_read: u64,
    pub index_reads: u64,
    pub latency_ms: f64,
    pub energy: BlockEnergy,
    pub topk: TopK,
    pub reasoner_gated: bool,
    pub output: FinalScores,
    pub overrun: bool,
    pub overflow_fallback: bool,
    /// Exact accumulators after this window; absent on bypass.
    pub raw: Option<Vec<i32>>,
}

impl WindowOutcome {
    pub fn mode(&self) -> Mode {
        self.decision.mode
    }

    pub fn d_eff(&self) -> usize {
        self.decision.mask.d_eff()
    }

    pub fn argmax(&self) -> usize {
        self.output.argmax()
    }
}

/// One prompt's pipeline: aligner, reasoner, caches and the window FSM.
pub struct Engine {
    mem: Arc<ItemMemory>,
    aligner: Aligner,
    reasoner: Reasoner,
    policy: Box<dyn PathPolicy>,
    selector: Box<dyn DimensionSelector>,
    cfg: PolicyConfig,
    ladder: Vec<BankMask>,
    cycles: CycleModel,
    power: PowerTable,
    rt: RtTarget,
    capacity: usize,
    cache: QueryCache,
    current_mask: BankMask,
    last_topk: Option<TopK>,
    last_output: Option<FinalScores>,
    window: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("policy", &self.policy.name())
            .field("selector", &self.selector.name())
            .field("rt", &self.rt)
            .field("window", &self.window)
            .finish()
    }
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mem: Arc<ItemMemory>,
        prompt: &Hypervector,
        rels: &RelationSet,
        path: &[String],
        cfg: PolicyConfig,
        cycles: CycleModel,
        power: PowerTable,
        rt: RtTarget,
    ) -> Result<Self> {
        cfg.validate()?;
        cycles.validate()?;
        power.validate()?;
        if cfg.top_k >= mem.concepts() {
            return Err(Error::Config(format!(
                "top_k = {} needs more than {} concepts",
                cfg.top_k,
                mem.concepts()
            )));
        }
        let ladder = cfg.ladder_masks(mem.dim(), mem.banks())?;
        let aligner = Aligner::new(kernels().create(&cfg.kernel)?);
        let reasoner = Reasoner::new("task", prompt, rels, path, &mem, &ladder, &aligner)?;
        Ok(Engine {
            capacity: cfg.delta_capacity.unwrap_or_else(|| default_delta_capacity(mem.dim())),
            cache: QueryCache::new(cfg.cache_depth),
            current_mask: ladder[0].clone(),
            policy: policies().create(&cfg.path_policy)?,
            selector: selectors().create(&cfg.dimension_selector)?,
            mem,
            aligner,
            reasoner,
            cfg,
            ladder,
            cycles,
            power,
            rt,
            last_topk: None,
            last_output: None,
            window: 0,
        })
    }

    /// Switches prompt: new task weights, and every cached output is dropped.
    pub fn retarget(&mut self, prompt: &Hypervector, rels: &RelationSet, path: &[String]) -> Result<()> {
        self.reasoner = Reasoner::new("task", prompt, rels, path, &self.mem, &self.ladder, &self.aligner)?;
        self.cache.clear();
        self.last_topk = None;
        self.last_output = None;
        Ok(())
    }

    pub fn cache(&self) -> &QueryCache {
        &self.cache
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &ItemMemory {
        &self.mem
    }

    pub fn reasoner(&self) -> &Reasoner {
        &self.reasoner
    }

    pub fn ladder(&self) -> &[BankMask] {
        &self.ladder
    }

    pub fn rt(&self) -> RtTarget {
        self.rt
    }

    #[doc(hidden)]
    pub fn aligner_mut(&mut self) -> &mut Aligner {
        &mut self.aligner
    }

    fn resolve_mode(&self, look: &Lookup, load: LoadSample) -> Mode {
        match self.policy.decide(look.rho, load, &self.cfg) {
            Mode::Bypass | Mode::Delta if look.slot.is_none() => Mode::Full,
            m => m,
        }
    }

    /// One pass of the window state machine.
    pub fn step_window(&mut self, q: &Hypervector, load: LoadSample) -> Result<WindowOutcome> {
        let window = self.window;
        self.window += 1;
        let mut meter = self.mem.new_meter();

        let mut mask = self.current_mask.clone();
        let mut look = self.cache.lookup(q, &mask, self.capacity)?;
        let mut mode = self.resolve_mode(&look, load);
        let mut selector_overrun = false;
        if mode != Mode::Bypass {
            let choice = self.selector.choose(&DimensionQuery {
                load,
                mode,
                rho: look.rho,
                concepts: self.mem.concepts(),
                budget_ms: self.rt.budget_ms(),
                ladder: &self.ladder,
                cycles: &self.cycles,
            });
            selector_overrun = choice.overrun;
            if choice.mask != mask {
                mask = choice.mask;
                look = self.cache.lookup(q, &mask, self.capacity)?;
                mode = self.resolve_mode(&look, load);
            }
        }
        self.current_mask = mask.clone();
        let d_eff = mask.d_eff();
        let rho = look.rho;
        let delta_len = look.delta.as_ref().map_or(d_eff, |d| d.len());
        let line_id = look.slot.map(|s| self.cache.line(s).id);

        if mode == Mode::Bypass {
            let slot = look.slot.expect("bypass needs a matched line");
            let line = self.cache.line(slot);
            let topk = line.topk.clone();
            let output = line.output.with_source(ScoreSource::BypassedCache);
            self.cache.touch(slot);
            self.last_topk = Some(topk.clone());
            self.last_output = Some(output.clone());
            return Ok(self.finish(
                window,
                PathDecision {
                    mode,
                    mask,
                    precision: self.cfg.precision,
                    shift: d_eff.trailing_zeros(),
                    line: line_id,
                },
                rho,
                delta_len,
                load,
                &meter,
                topk,
                false,
                false,
                output,
                selector_overrun,
                false,
                None,
            ));
        }

        let mut overflow_fallback = false;
        let state: ScoreState = match mode {
            Mode::Delta => {
                let slot = look.slot.expect("delta needs a matched line");
                let delta = look.delta.as_ref().expect("matched line has a flip set");
                let mut state = self.cache.line(slot).state.clone();
                match self.aligner.delta_update(&mut state, q, delta, &self.mem, &mask, &mut meter) {
                    Ok(()) => state,
                    Err(Error::DeltaOverflow { .. }) => {
                        overflow_fallback = true;
                        self.aligner.full_scan(q, &self.mem, &mask, self.cfg.precision, &mut meter)?
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => self.aligner.full_scan(q, &self.mem, &mask, self.cfg.precision, &mut meter)?,
        };
        let exec_mode = if overflow_fallback { Mode::Full } else { mode };

        let topk = top_k(&state, self.cfg.top_k)?;
        let gated = self.cfg.reasoner_gating
            && self.last_output.is_some()
            && self.last_topk.as_ref().is_some_and(|t| t.key == topk.key)
            && topk.margin >= self.cfg.tau_margin;
        let output = if gated {
            self.last_output.clone().expect("checked above")
        } else if self.cfg.reasoner_enabled {
            apply(&state, self.reasoner.weights_for(&mask)?, GateDecision::Reasoned)?
        } else {
            apply(&state, self.reasoner.weights_for(&mask)?, GateDecision::AlignerOnly)?
        };
        let reasoner_ran = !gated && self.cfg.reasoner_enabled;
        let raw = state.raw().to_vec();

        match (exec_mode, look.slot) {
            (Mode::Delta, Some(slot)) => self.cache.update(slot, state, output.clone(), topk.clone()),
            _ => {
                self.cache.insert(state, output.clone(), topk.clone());
            }
        }
        self.last_topk = Some(topk.clone());
        self.last_output = Some(output.clone());

        Ok(self.finish(
            window,
            PathDecision {
                mode: exec_mode,
                mask,
                precision: self.cfg.precision,
                shift: d_eff.trailing_zeros(),
                line: if exec_mode == Mode::Delta { line_id } else { None },
            },
            rho,
            delta_len,
            load,
            &meter,
            topk,
            gated,
            reasoner_ran,
            output,
            selector_overrun,
            overflow_fallback,
            Some(raw),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        window: u64,
        decision: PathDecision,
        rho: f64,
        delta_len: usize,
        load: LoadSample,
        meter: &crate::memory::TrafficMeter,
        topk: TopK,
        reasoner_gated: bool,
        reasoner_ran: bool,
        output: FinalScores,
        selector_overrun: bool,
        overflow_fallback: bool,
        raw: Option<Vec<i32>>,
    ) -> WindowOutcome {
        let n = load.n as usize;
        let m = self.mem.concepts();
        let cycles =
            self.cycles
                .window_cycles(decision.mode, n, decision.mask.d_eff(), delta_len, m, reasoner_ran);
        let busy = BlockBusy::from_window(decision.mode, n, m, &cycles, &self.cycles);
        let energy = window_energy(&busy, &self.power, self.cycles.clock_hz, self.rt.budget_s());
        let latency_ms = self.cycles.cycles_to_ms(cycles.total());
        WindowOutcome {
            window,
            rho,
            delta_len,
            load,
            cycles,
            bits_read: meter.bits_read(),
            index_reads: meter.index_reads(),
            latency_ms,
            energy,
            topk,
            reasoner_gated,
            output,
            overrun: selector_overrun || latency_ms > self.rt.budget_ms(),
            overflow_fallback,
            raw,
            decision,
        }
    }

    /// Predicted latency of a hypothetical window; exposed for reports.
    pub fn predicted_ms(&self, load: LoadSample, mode: Mode, rho: f64, mask: &BankMask) -> f64 {
        CycleBudget::predicted_ms(
            &DimensionQuery {
                load,
                mode,
                rho,
                concepts: self.mem.concepts(),
                budget_ms: self.rt.budget_ms(),
                ladder: &self.ladder,
                cycles: &self.cycles,
            },
            mask,
        )
    }
}
