//! Headless conformance checks behind `cachegate verify`.
//!
//! Every check compares the implementation against a separate, simpler
//! computation (bit loops, closed forms, a hand-written table) and reports
//! the worst deviation it saw.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{psu_compare, Aligner, Precision};
use crate::controller::{policies, Engine, LoadSample, Mode, PolicyConfig, RtTarget};
use crate::error::Result;
use crate::hdc::{bind, cosine, counter_word, Hypervector};
use crate::memory::{BankMask, ItemMemory};
use crate::perf::{AlignerSim, CycleModel, PowerTable};
use crate::reasoner::RelationSet;
use crate::registry::Registry;

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Scales random case counts; 1.0 is the full sweep.
    pub scale: f64,
    /// Negative control: corrupt the delta path.
    pub inject_delta_fault: bool,
    pub policy: PolicyConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 2024,
            scale: 1.0,
            inject_delta_fault: false,
            policy: PolicyConfig::default(),
        }
    }
}

impl VerifyOptions {
    fn count(&self, full: usize) -> usize {
        ((full as f64 * self.scale).ceil() as usize).max(1)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(counter_word(self.seed, 0x7665_7269_6679, stream))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
    /// Largest deviation observed, in the check's own unit.
    pub worst: f64,
    pub detail: String,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:<18} cases={} failures={} worst={:.3e} {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.detail
        )
    }
}

pub trait Check: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport>;
}

pub fn checks() -> Registry<dyn Check> {
    Registry::<dyn Check>::new("check")
        .with("delta-exactness", || Box::new(DeltaExactness))
        .with("gate-identity", || Box::new(GateIdentity))
        .with("policy-table", || Box::new(PolicyTable))
        .with("cycle-formula", || Box::new(CycleFormula))
        .with("traffic", || Box::new(Traffic))
        .with("bypass-bound", || Box::new(BypassBound))
        .with("binding-algebra", || Box::new(BindingAlgebra))
}

/// Run order for `run_all`: cheapest first.
pub const CHECK_ORDER: [&str; 7] = [
    "policy-table",
    "gate-identity",
    "cycle-formula",
    "traffic",
    "delta-exactness",
    "bypass-bound",
    "binding-algebra",
];

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let reg = checks();
    CHECK_ORDER.iter().map(|n| reg.create(n)?.run(opts)).collect()
}

#[derive(Default)]
struct Tally {
    cases: u64,
    failures: u64,
    worst: f64,
    first: Option<String>,
}

impl Tally {
    fn record(&mut self, err: f64, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        self.worst = self.worst.max(err);
        if !ok {
            self.failures += 1;
            if self.first.is_none() {
                self.first = Some(what());
            }
        }
    }

    fn report(self, name: &'static str, detail: String) -> CheckReport {
        CheckReport {
            name,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
            detail: self.first.map_or(detail, |f| format!("first failure: {f}")),
        }
    }
}

/// Bitwise reference dot product over the enabled positions.
pub fn reference_dot(a: &Hypervector, b: &Hypervector, mask: &BankMask) -> i64 {
    mask.active_positions()
        .map(|i| i64::from(a.get(i)) * i64::from(b.get(i)))
        .sum()
}

fn random_mask(rng: &mut ChaCha8Rng, dim: usize, banks: usize) -> BankMask {
    let ladder = BankMask::legal_ladder(dim, banks).expect("valid geometry");
    ladder[rng.random_range(0..ladder.len())].clone()
}

/// Iterated delta updates against a fresh full scan, every window.
pub struct DeltaExactness;

impl Check for DeltaExactness {
    fn name(&self) -> &'static str {
        "delta-exactness"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let streams = opts.count(100);
        let windows = opts.count(1000);
        let mut t = Tally::default();
        let mut aligner = Aligner::default();
        if opts.inject_delta_fault {
            aligner.inject_delta_fault();
        }
        let reference = Aligner::default();
        for s in 0..streams {
            let mut rng = opts.rng(s as u64);
            let dim = [256, 8192][s % 2];
            let m = [8, 80][(s / 2) % 2];
            let banks = if dim == 256 { 4 } else { 16 };
            let rate = 0.10 * s as f64 / streams.max(2).saturating_sub(1) as f64;
            let precision = [Precision::Exact, Precision::Int8, Precision::Int4][s % 3];
            let mem = ItemMemory::random(m, dim, banks, rng.random())?;
            let mask = random_mask(&mut rng, dim, banks);
            let mut q = Hypervector::from_rng(dim, &mut rng)?;
            let mut scratch = mem.new_meter();
            let mut state = aligner.full_scan(&q, &mem, &mask, precision, &mut scratch)?;
            for w in 0..windows {
                let mut next = q.clone();
                for i in 0..dim {
                    if rng.random_bool(rate) {
                        next.flip(i);
                    }
                }
                let (_, delta) = psu_compare(&next, &q, &mask, usize::MAX)?;
                aligner.delta_update(&mut state, &next, &delta, &mem, &mask, &mut scratch)?;
                q = next;
                let full = reference.full_scan(&q, &mem, &mask, precision, &mut scratch)?;
                let err = state
                    .raw()
                    .iter()
                    .zip(full.raw())
                    .map(|(a, b)| (a - b).unsigned_abs())
                    .max()
                    .unwrap_or(0);
                t.record(f64::from(err), err == 0, || {
                    format!("stream {s} (D={dim}, M={m}, rate={rate:.3}) window {w}: |raw error| {err}")
                });
            }
        }
        Ok(t.report(self.name(), format!("{streams} streams x {windows} windows, integer accumulators")))
    }
}

/// rho from the PSU against the flip-count formula and a float cosine.
pub struct GateIdentity;

impl Check for GateIdentity {
    fn name(&self) -> &'static str {
        "gate-identity"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let mut t = Tally::default();
        let check = |a: &Hypervector, b: &Hypervector, mask: &BankMask, t: &mut Tally| -> Result<()> {
            let (rho, delta) = psu_compare(a, b, mask, usize::MAX)?;
            let flips = mask.active_positions().filter(|&i| a.bit(i) != b.bit(i)).count();
            let by_count = 1.0 - 2.0 * flips as f64 / mask.d_eff() as f64;
            let by_dot = reference_dot(a, b, mask) as f64 / mask.d_eff() as f64;
            let by_lib = cosine(a, b, mask)?;
            let err = (rho - by_count).abs().max((rho - by_dot).abs()).max((rho - by_lib).abs());
            t.record(err, err == 0.0 && delta.len() == flips, || {
                format!("rho {rho} vs count {by_count} / dot {by_dot} / cosine {by_lib}")
            });
            Ok(())
        };
        let mask16 = BankMask::full(16, 1)?;
        let base = Hypervector::from_bits(16, 0)?;
        for bits in 0..1u64 << 16 {
            check(&Hypervector::from_bits(16, bits)?, &base, &mask16, &mut t)?;
        }
        let mut rng = opts.rng(1);
        for _ in 0..opts.count(2000) {
            let mask = random_mask(&mut rng, 8192, 16);
            let a = Hypervector::from_rng(8192, &mut rng)?;
            let mut b = a.clone();
            let k = rng.random_range(0..=8192);
            for _ in 0..k {
                b.flip(rng.random_range(0..8192));
            }
            check(&a, &b, &mask, &mut t)?;
        }
        Ok(t.report(self.name(), "exhaustive at D'=16, random at D=8192".into()))
    }
}

/// Hand-transcribed decision table for the default path policy.
pub fn policy_oracle(rho: f64, n: u32, q: u32, cfg: &PolicyConfig) -> Mode {
    let busy = n >= cfg.n_high || q >= cfg.q_high;
    match (rho >= cfg.tau_bypass, rho >= cfg.tau_gate, busy) {
        (true, _, true) => Mode::Bypass,
        (true, _, false) => Mode::Delta,
        (false, true, _) => Mode::Delta,
        (false, false, _) => Mode::Full,
    }
}

/// Boundary grid: rho around both thresholds, N and q around theirs.
pub fn policy_grid(cfg: &PolicyConfig) -> Vec<(f64, u32, u32)> {
    let eps = 1e-9;
    let rhos = [
        -1.0,
        0.0,
        cfg.tau_gate - eps,
        cfg.tau_gate,
        cfg.tau_gate + eps,
        cfg.tau_bypass - eps,
        cfg.tau_bypass,
        cfg.tau_bypass + eps,
        1.0,
    ];
    let around = |x: u32| [0, x.saturating_sub(1), x, x + 1, x + 5, 1000];
    let mut grid = Vec::new();
    for rho in rhos {
        for n in around(cfg.n_high) {
            for q in around(cfg.q_high) {
                grid.push((rho, n, q));
            }
        }
    }
    grid
}

pub struct PolicyTable;

impl Check for PolicyTable {
    fn name(&self) -> &'static str {
        "policy-table"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let cfg = &opts.policy;
        let policy = policies().create("similarity")?;
        let grid = policy_grid(cfg);
        let cells = grid.len();
        let mut t = Tally::default();
        for (rho, n, q) in grid {
            let got = policy.decide(rho, LoadSample::new(n, q), cfg);
            let want = policy_oracle(rho, n, q, cfg);
            t.record(f64::from(u8::from(got != want)), got == want, || {
                format!("rho={rho} N={n} q={q}: got {got:?}, want {want:?}")
            });
        }
        Ok(t.report(self.name(), format!("{cells} cells")))
    }
}

/// Cycle-stepped aligner against the closed-form cycle counts.
pub struct CycleFormula;

/// |Delta| values probed for one D': the edges plus a random spread.
pub fn delta_sizes(d_eff: usize, rng: &mut ChaCha8Rng, random: usize) -> Vec<usize> {
    let mut v = vec![0, 1, 2, d_eff / 2, d_eff - 1, d_eff];
    v.extend((0..random).map(|_| rng.random_range(0..=d_eff)));
    v.sort_unstable();
    v.dedup();
    v
}

impl Check for CycleFormula {
    fn name(&self) -> &'static str {
        "cycle-formula"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let mut t = Tally::default();
        let mut rng = opts.rng(3);
        let dim = 8192;
        let banks = 16;
        for m in [8usize, 16, 24, 40, 80] {
            let mem = ItemMemory::random(m, dim, banks, m as u64)?;
            let q = Hypervector::from_rng(dim, &mut rng)?;
            for lanes in [4usize, 8, 16] {
                let model = CycleModel {
                    lanes,
                    ..CycleModel::default()
                };
                let sim = AlignerSim::new(lanes, 16);
                for mask in BankMask::legal_ladder(dim, banks)?.into_iter().filter(|k| k.d_eff() >= 512) {
                    let d = mask.d_eff();
                    let groups = m.div_ceil(lanes) as u64;
                    let r = sim.full(&mem, &q, &mask, 1);
                    let want = d as u64 * groups;
                    let got = model.aligner_cycles(Mode::Full, 1, d, 0, m);
                    let ok = r.elapsed_cycles == want && got == want;
                    t.record(r.elapsed_cycles.abs_diff(want).max(got.abs_diff(want)) as f64, ok, || {
                        format!("full D'={d} M={m} W={lanes}: sim {} model {got} want {want}", r.elapsed_cycles)
                    });
                    let active: Vec<u32> = mask.active_positions().map(|i| i as u32).collect();
                    for k in delta_sizes(d, &mut rng, opts.count(8)) {
                        let r = sim.delta(&mem, &q, &active[..k], 1);
                        let want = k as u64 * groups;
                        let got = model.aligner_cycles(Mode::Delta, 1, d, k, m);
                        let ok = r.elapsed_cycles == want && got == want;
                        t.record(r.elapsed_cycles.abs_diff(want).max(got.abs_diff(want)) as f64, ok, || {
                            format!("delta |D|={k} D'={d} M={m} W={lanes}: sim {} model {got} want {want}", r.elapsed_cycles)
                        });
                    }
                }
            }
        }
        Ok(t.report(self.name(), "D' 512..8192, M 8..80, W 4/8/16".into()))
    }
}

/// Item-memory traffic of live engine windows against the mode formulas.
pub struct Traffic;

impl Check for Traffic {
    fn name(&self) -> &'static str {
        "traffic"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let mut t = Tally::default();
        let mut rng = opts.rng(4);
        let (m, dim, banks) = (80, 8192, 16);
        let mem = Arc::new(ItemMemory::random(m, dim, banks, 5)?);
        let rels = RelationSet::new(dim);
        let prompt = Hypervector::random(dim, 1, 1)?;
        let mut engine = Engine::new(
            Arc::clone(&mem),
            &prompt,
            &rels,
            &[],
            opts.policy.clone(),
            CycleModel::default(),
            PowerTable::reference(0.5),
            RtTarget::Rt60,
        )?;
        let mut q = mem.row(0).clone();
        let mut seen = [0u64; 3];
        for w in 0..opts.count(3000) {
            // Mix of tiny drifts, jumps and idle repeats so every mode shows up.
            match rng.random_range(0..10) {
                0 => q = Hypervector::from_rng(dim, &mut rng)?,
                1..=3 => {}
                _ => {
                    for _ in 0..rng.random_range(1..200) {
                        q.flip(rng.random_range(0..dim));
                    }
                }
            }
            let load = LoadSample::new(rng.random_range(1..16), rng.random_range(0..8));
            let o = engine.step_window(&q, load)?;
            let d = o.d_eff() as u64;
            let k = o.delta_len as u64;
            let (bits, idx) = match o.mode() {
                Mode::Full => (m as u64 * d, 0),
                Mode::Delta => (m as u64 * k, k),
                Mode::Bypass => (0, 0),
            };
            seen[o.mode() as usize] += 1;
            let err = o.bits_read.abs_diff(bits).max(o.index_reads.abs_diff(idx));
            t.record(err as f64, err == 0, || {
                format!(
                    "window {w} {:?}: bits {} index {} want {bits} / {idx}",
                    o.mode(),
                    o.bits_read,
                    o.index_reads
                )
            });
        }
        Ok(t.report(
            self.name(),
            format!("bypass/delta/full windows = {}/{}/{}", seen[0], seen[1], seen[2]),
        ))
    }
}

/// |cos(q,h) - cos(q',h)| <= 2|Delta|/D'.
pub struct BypassBound;

impl BypassBound {
    fn one(q: u64, q2: u64, h: u64, d: u32, t: &mut Tally) {
        let cos = |a: u64, b: u64| 1.0 - 2.0 * f64::from((a ^ b).count_ones()) / f64::from(d);
        let flips = (q ^ q2).count_ones();
        let bound = 2.0 * f64::from(flips) / f64::from(d);
        let gap = (cos(q, h) - cos(q2, h)).abs();
        t.record(gap - bound, gap <= bound, || format!("q={q:#x} q'={q2:#x} h={h:#x}"));
    }
}

impl Check for BypassBound {
    fn name(&self) -> &'static str {
        "bypass-bound"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let mut t = Tally::default();
        // Every triple at D'=8.
        for q in 0..256u64 {
            for q2 in 0..256u64 {
                for h in 0..256u64 {
                    Self::one(q, q2, h, 8, &mut t);
                }
            }
        }
        // D'=16: every flip pattern against sampled (q, h).
        let mut rng = opts.rng(6);
        for _ in 0..opts.count(16) {
            let (q, h) = (rng.random::<u64>() & 0xffff, rng.random::<u64>() & 0xffff);
            for diff in 0..1u64 << 16 {
                Self::one(q, q ^ diff, h, 16, &mut t);
            }
        }
        // D'=8192 through the library cosine.
        for _ in 0..opts.count(100_000) {
            let mask = random_mask(&mut rng, 8192, 16);
            let q = Hypervector::from_rng(8192, &mut rng)?;
            let h = Hypervector::from_rng(8192, &mut rng)?;
            let mut q2 = q.clone();
            for _ in 0..rng.random_range(0..400) {
                q2.flip(rng.random_range(0..8192));
            }
            let (_, delta) = psu_compare(&q2, &q, &mask, usize::MAX)?;
            let bound = 2.0 * delta.len() as f64 / mask.d_eff() as f64;
            let gap = (cosine(&q, &h, &mask)? - cosine(&q2, &h, &mask)?).abs();
            t.record(gap - bound, gap <= bound + 1e-12, || format!("D=8192 gap {gap} bound {bound}"));
        }
        let worst = t.worst;
        let mut r = t.report(self.name(), String::new());
        r.worst = worst.max(0.0);
        if r.passed() {
            r.detail = "worst reported as slack violation (0 = bound never exceeded)".into();
        }
        Ok(r)
    }
}

/// Self-inverse, commutativity and cosine preservation under binding.
pub struct BindingAlgebra;

impl BindingAlgebra {
    fn triple(a: &Hypervector, b: &Hypervector, c: &Hypervector, mask: &BankMask, t: &mut Tally) -> Result<()> {
        let ab = bind(a, b)?;
        let inverse = bind(&ab, b)? == *a;
        let commute = ab == bind(b, a)?;
        let before = cosine(a, b, mask)?;
        let after = cosine(&bind(a, c)?, &bind(b, c)?, mask)?;
        let err = (before - after).abs();
        t.record(err, inverse && commute && err == 0.0, || {
            format!("inverse={inverse} commute={commute} cos {before} vs {after}")
        });
        Ok(())
    }
}

impl Check for BindingAlgebra {
    fn name(&self) -> &'static str {
        "binding-algebra"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<CheckReport> {
        let mut t = Tally::default();
        // Every triple at D=8, then every (a, b) at D=16 with sampled binders.
        let m8 = BankMask::full(8, 1)?;
        let hv = |d: usize, x: u64| Hypervector::from_bits(d, x);
        for a in 0..256 {
            for b in 0..256 {
                for c in 0..256 {
                    Self::triple(&hv(8, a)?, &hv(8, b)?, &hv(8, c)?, &m8, &mut t)?;
                }
            }
        }
        let m16 = BankMask::full(16, 1)?;
        let mut rng = opts.rng(7);
        let c16: Vec<Hypervector> = (0..4).map(|_| hv(16, rng.random::<u64>() & 0xffff)).collect::<Result<_>>()?;
        for a in 0..1u64 << 16 {
            let b = hv(16, rng.random::<u64>() & 0xffff)?;
            for c in &c16 {
                Self::triple(&hv(16, a)?, &b, c, &m16, &mut t)?;
            }
        }
        let full = BankMask::full(8192, 16)?;
        for _ in 0..opts.count(10_000) {
            let [a, b, c] = [0; 3].map(|_| Hypervector::from_rng(8192, &mut rng).expect("D > 0"));
            Self::triple(&a, &b, &c, &full, &mut t)?;
        }
        Ok(t.report(self.name(), "exhaustive at D=8, swept at D=16, random at D=8192".into()))
    }
}
