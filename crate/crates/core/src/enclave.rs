//! Cycle-level model of an enclave protected by the stage-II resume mitigation.
//!
//! Every resume replays the mitigation (restore, PTE check, cache/TLB warmup,
//! optional NOP slide) and then executes victim instructions until either the
//! scheduled interrupt arrives or a boundary page is touched. Instruction
//! windows are half-open: an interrupt exactly at a retire boundary sees the
//! instruction retired.

use crate::cycles::Cycles;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opcode {
    Nop,
    Addl,
    Alu,
    Cmp,
    Jcc,
    Test,
    Inc,
    Load,
    Call,
    Ret,
    Marker,
}

impl Opcode {
    /// Cache-on cost and whether the instruction waits on data memory.
    pub fn default_cost(self) -> (f64, bool) {
        match self {
            Opcode::Nop => (0.25, false),
            Opcode::Addl => (5.0, true),
            Opcode::Alu | Opcode::Cmp | Opcode::Jcc | Opcode::Test | Opcode::Inc => (1.0, false),
            Opcode::Load => (4.0, true),
            Opcode::Call => (3.0, true),
            Opcode::Ret => (2.0, true),
            Opcode::Marker => (1.0, false),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSpec {
    pub opcode: Opcode,
    pub base_cost: Cycles,
    pub memory_dependent: bool,
    pub page_id: u32,
}

impl InstructionSpec {
    pub fn new(opcode: Opcode, page_id: u32) -> Self {
        let (cost, mem) = opcode.default_cost();
        InstructionSpec {
            opcode,
            base_cost: Cycles::from_f64(cost),
            memory_dependent: mem,
            page_id,
        }
    }

    pub fn with_cost(opcode: Opcode, base_cost: f64, memory_dependent: bool, page_id: u32) -> Self {
        InstructionSpec {
            opcode,
            base_cost: Cycles::from_f64(base_cost),
            memory_dependent,
            page_id,
        }
    }
}

/// Cost of one instruction under the attacker's cache setting.
pub fn effective_cost(inst: &InstructionSpec, cache_enabled: bool, slowdown: f64) -> Result<Cycles> {
    if !(slowdown >= 1.0) || !slowdown.is_finite() {
        return Err(Error::Config(format!("slowdown must be >= 1, got {slowdown}")));
    }
    if cache_enabled || !inst.memory_dependent {
        return Ok(inst.base_cost);
    }
    Ok(Cycles::from_ticks((inst.base_cost.ticks() as f64 * slowdown).round() as i64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnclaveParams {
    /// Multiplier on memory-dependent instructions while caching is disabled.
    pub slowdown: f64,
    /// Extra per-instruction cost of fetching code with caching disabled.
    pub uncached_fetch_cycles: Cycles,
    /// Consecutive instructions whose nominal costs fit in one slot retire together.
    pub retire_slot_cycles: Cycles,
    /// Cache state the attacker leaves the core in while the victim runs.
    pub cache_enabled: bool,
}

impl Default for EnclaveParams {
    fn default() -> Self {
        EnclaveParams {
            slowdown: 5.0,
            uncached_fetch_cycles: Cycles::from_f64(9.75),
            retire_slot_cycles: Cycles::from_f64(0.5),
            cache_enabled: false,
        }
    }
}

impl EnclaveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slowdown >= 1.0) || !self.slowdown.is_finite() {
            return Err(Error::Config(format!("enclave.slowdown must be >= 1, got {}", self.slowdown)));
        }
        if self.uncached_fetch_cycles.is_negative() || self.retire_slot_cycles.is_negative() {
            return Err(Error::Config("enclave cycle knobs must be >= 0".into()));
        }
        Ok(())
    }

    /// Execution window of one instruction, including the uncached fetch penalty.
    pub fn window(&self, inst: &InstructionSpec, cache_enabled: bool) -> Result<Cycles> {
        let mut w = effective_cost(inst, cache_enabled, self.slowdown)?;
        if !cache_enabled {
            w += self.uncached_fetch_cycles;
        }
        Ok(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationModel {
    pub restore_cost: Cycles,
    /// Separate ERESUME latency; zero folds it into `restore_cost`.
    #[serde(default)]
    pub eresume_latency: Cycles,
    pub pte_check_cost: Cycles,
    pub warmup_iterations: u32,
    pub warmup_cost_cache_off: Cycles,
    pub warmup_cost_cache_on: Cycles,
    pub nop_slide_length: u32,
    pub nop_cost: Cycles,
    pub nop_probability: f64,
}

impl Default for MitigationModel {
    fn default() -> Self {
        MitigationModel {
            restore_cost: Cycles::from_int(150),
            eresume_latency: Cycles::ZERO,
            pte_check_cost: Cycles::from_int(250),
            warmup_iterations: 12,
            warmup_cost_cache_off: Cycles::from_int(120),
            warmup_cost_cache_on: Cycles::from_int(10),
            nop_slide_length: 20,
            nop_cost: Cycles::from_int(1),
            nop_probability: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationPhase {
    Restore,
    PteCheck,
    Warmup,
    NopSlide,
}

impl MitigationModel {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            self.restore_cost,
            self.eresume_latency,
            self.pte_check_cost,
            self.warmup_cost_cache_off,
            self.warmup_cost_cache_on,
            self.nop_cost,
        ];
        if costs.iter().any(|c| c.is_negative()) {
            return Err(Error::Config("mitigation costs must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.nop_probability) {
            return Err(Error::Config(format!(
                "mitigation.nop_probability must be in [0, 1], got {}",
                self.nop_probability
            )));
        }
        Ok(())
    }

    pub fn warmup_iteration_cost(&self, cache_enabled: bool) -> Cycles {
        if cache_enabled {
            self.warmup_cost_cache_on
        } else {
            self.warmup_cost_cache_off
        }
    }

    pub fn slide_cycles(&self) -> Cycles {
        self.nop_cost * self.nop_slide_length as i64
    }

    /// Phase boundaries relative to resume, in execution order.
    pub fn phases(&self, r: bool, cache_enabled: bool) -> Vec<(MitigationPhase, Cycles, Cycles)> {
        let mut out = Vec::with_capacity(4);
        let mut t = Cycles::ZERO;
        let mut push = |phase, len: Cycles| {
            out.push((phase, t, t + len));
            t += len;
        };
        push(MitigationPhase::Restore, self.restore_cost + self.eresume_latency);
        push(MitigationPhase::PteCheck, self.pte_check_cost);
        push(
            MitigationPhase::Warmup,
            self.warmup_iteration_cost(cache_enabled) * self.warmup_iterations as i64,
        );
        if r {
            push(MitigationPhase::NopSlide, self.slide_cycles());
        }
        out
    }
}

pub fn mitigation_duration(m: &MitigationModel, r: bool, cache_enabled: bool) -> Cycles {
    let mut d = m.restore_cost
        + m.eresume_latency
        + m.pte_check_cost
        + m.warmup_iteration_cost(cache_enabled) * m.warmup_iterations as i64;
    if r {
        d += m.slide_cycles();
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    Always,
    Eq(String, u64),
    Ne(String, u64),
    Ge(String, u64),
    Lt(String, u64),
    All(Vec<Guard>),
}

pub type SecretBinding = BTreeMap<String, u64>;

impl Guard {
    pub fn holds(&self, binding: &SecretBinding) -> Result<bool> {
        let get = |name: &str| {
            binding
                .get(name)
                .copied()
                .ok_or_else(|| Error::MalformedVictim(format!("secret `{name}` is not bound")))
        };
        Ok(match self {
            Guard::Always => true,
            Guard::Eq(v, x) => get(v)? == *x,
            Guard::Ne(v, x) => get(v)? != *x,
            Guard::Ge(v, x) => get(v)? >= *x,
            Guard::Lt(v, x) => get(v)? < *x,
            Guard::All(gs) => {
                for g in gs {
                    if !g.holds(binding)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    fn variables<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Guard::Always => {}
            Guard::Eq(v, _) | Guard::Ne(v, _) | Guard::Ge(v, _) | Guard::Lt(v, _) => out.push(v),
            Guard::All(gs) => gs.iter().for_each(|g| g.variables(out)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub guard: Guard,
    pub instructions: Vec<InstructionSpec>,
}

/// Inclusive value range of a secret variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretDomain {
    pub min: u64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimProgram {
    pub name: String,
    pub blocks: Vec<Block>,
    pub boundary_pages: BTreeSet<u32>,
    pub secret_env: BTreeMap<String, SecretDomain>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathInstr {
    pub block: u32,
    pub index: u32,
    pub spec: InstructionSpec,
}

/// Instruction stream executed for one secret binding, ending on a boundary page.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPath {
    pub instrs: Vec<PathInstr>,
}

impl ResolvedPath {
    /// Instructions that retire before the closing boundary fault.
    pub fn retired_len(&self) -> usize {
        self.instrs.len() - 1
    }
}

const EXHAUSTIVE_CHECK_LIMIT: u64 = 4096;

impl VictimProgram {
    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            let mut vars = Vec::new();
            b.guard.variables(&mut vars);
            if let Some(v) = vars.iter().find(|v| !self.secret_env.contains_key(**v)) {
                return Err(Error::MalformedVictim(format!(
                    "block `{}` references undeclared secret `{v}`",
                    b.label
                )));
            }
        }
        let combos = self
            .secret_env
            .values()
            .try_fold(1u64, |acc, d| acc.checked_mul(d.max.saturating_sub(d.min) + 1));
        if matches!(combos, Some(c) if c <= EXHAUSTIVE_CHECK_LIMIT) {
            let names: Vec<&String> = self.secret_env.keys().collect();
            let mut binding: SecretBinding =
                self.secret_env.iter().map(|(k, d)| (k.clone(), d.min)).collect();
            loop {
                self.resolve(&binding)?;
                // odometer over the declared domains
                let mut i = 0;
                loop {
                    if i == names.len() {
                        return Ok(());
                    }
                    let d = self.secret_env[names[i]];
                    let v = binding.get_mut(names[i]).unwrap();
                    if *v < d.max {
                        *v += 1;
                        break;
                    }
                    *v = d.min;
                    i += 1;
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, binding: &SecretBinding) -> Result<ResolvedPath> {
        for (name, d) in &self.secret_env {
            match binding.get(name) {
                Some(v) if (d.min..=d.max).contains(v) => {}
                Some(v) => {
                    return Err(Error::MalformedVictim(format!(
                        "secret `{name}` = {v} outside [{}, {}]",
                        d.min, d.max
                    )))
                }
                None => return Err(Error::MalformedVictim(format!("secret `{name}` is not bound"))),
            }
        }
        let mut instrs = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            if !b.guard.holds(binding)? {
                continue;
            }
            for (ii, spec) in b.instructions.iter().enumerate() {
                instrs.push(PathInstr {
                    block: bi as u32,
                    index: ii as u32,
                    spec: *spec,
                });
                if self.boundary_pages.contains(&spec.page_id) {
                    return Ok(ResolvedPath { instrs });
                }
            }
        }
        Err(Error::MalformedVictim(format!(
            "`{}` runs off its last block without touching a boundary page",
            self.name
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimActivity {
    Memory,
    Compute,
    Nop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Group {
    first: usize,
    len: usize,
    window: Cycles,
    activity: VictimActivity,
    boundary: bool,
}

#[derive(Clone, Debug)]
struct Schedule {
    groups: Vec<Group>,
    /// Start offset of each group from the first instruction; one extra entry for the end.
    start: Vec<Cycles>,
    group_of: Vec<usize>,
}

/// A resolved path with retire groups and execution windows precomputed for both cache states.
#[derive(Clone, Debug)]
pub struct PreparedVictim {
    pub path: ResolvedPath,
    boundary_pages: BTreeSet<u32>,
    cache_off: Schedule,
    cache_on: Schedule,
}

impl PreparedVictim {
    pub fn new(program: &VictimProgram, binding: &SecretBinding, params: &EnclaveParams) -> Result<Self> {
        let path = program.resolve(binding)?;
        Self::from_path(path, program.boundary_pages.clone(), params)
    }

    pub fn from_path(path: ResolvedPath, boundary_pages: BTreeSet<u32>, params: &EnclaveParams) -> Result<Self> {
        params.validate()?;
        let last = path
            .instrs
            .last()
            .ok_or_else(|| Error::MalformedVictim("empty path".into()))?;
        if !boundary_pages.contains(&last.spec.page_id) {
            return Err(Error::MalformedVictim("path does not end on a boundary page".into()));
        }
        let cache_off = schedule(&path, &boundary_pages, params, false)?;
        let cache_on = schedule(&path, &boundary_pages, params, true)?;
        Ok(PreparedVictim {
            path,
            boundary_pages,
            cache_off,
            cache_on,
        })
    }

    fn schedule(&self, cache_enabled: bool) -> &Schedule {
        if cache_enabled {
            &self.cache_on
        } else {
            &self.cache_off
        }
    }

    /// Cycles from the first victim instruction to the boundary fault.
    pub fn total_cycles(&self, cache_enabled: bool) -> Cycles {
        let s = self.schedule(cache_enabled);
        s.start[s.groups.len() - 1]
    }

    /// Cycles from path position `pos` to the boundary fault.
    pub fn remaining_cycles(&self, pos: usize, cache_enabled: bool) -> Cycles {
        let s = self.schedule(cache_enabled);
        s.start[s.groups.len() - 1] - s.start[s.group_of[pos]]
    }

    pub fn is_boundary_page(&self, page: u32) -> bool {
        self.boundary_pages.contains(&page)
    }
}

fn activity(spec: &InstructionSpec) -> VictimActivity {
    if spec.memory_dependent {
        VictimActivity::Memory
    } else if spec.opcode == Opcode::Nop {
        VictimActivity::Nop
    } else {
        VictimActivity::Compute
    }
}

fn schedule(
    path: &ResolvedPath,
    boundary: &BTreeSet<u32>,
    params: &EnclaveParams,
    cache_enabled: bool,
) -> Result<Schedule> {
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of = Vec::with_capacity(path.instrs.len());
    let mut slot_used = Cycles::ZERO;
    for (i, pi) in path.instrs.iter().enumerate() {
        let is_boundary = boundary.contains(&pi.spec.page_id);
        let window = params.window(&pi.spec, cache_enabled)?;
        let joins = match groups.last() {
            Some(g) => {
                !g.boundary
                    && !is_boundary
                    && slot_used + pi.spec.base_cost <= params.retire_slot_cycles
            }
            None => false,
        };
        if joins {
            let g = groups.last_mut().unwrap();
            g.len += 1;
            g.window += window;
            if pi.spec.memory_dependent {
                g.activity = VictimActivity::Memory;
            } else if g.activity == VictimActivity::Nop && activity(&pi.spec) == VictimActivity::Compute {
                g.activity = VictimActivity::Compute;
            }
            slot_used += pi.spec.base_cost;
        } else {
            groups.push(Group {
                first: i,
                len: 1,
                window,
                activity: activity(&pi.spec),
                boundary: is_boundary,
            });
            slot_used = pi.spec.base_cost;
        }
        group_of.push(groups.len() - 1);
    }
    let mut start = Vec::with_capacity(groups.len() + 1);
    let mut t = Cycles::ZERO;
    for g in &groups {
        start.push(t);
        t += g.window;
    }
    start.push(t);
    Ok(Schedule {
        groups,
        start,
        group_of,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavedParams {
    /// Stand-in for the saved stack/data/code page pointers.
    pub tickle_token: u64,
    pub r_bit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclaveState {
    pub trace_id: u64,
    /// Position in the resolved path; the eRIP analog.
    pub program_counter: usize,
    pub cycle_clock: Cycles,
    pub cache_enabled: bool,
    pub in_mitigation: Option<MitigationPhase>,
    pub saved_params: Option<SavedParams>,
    pub aexnotify_bit: bool,
    pub next_seq: u64,
    pub finished: bool,
}

impl EnclaveState {
    /// A trace starts at stage-II entry with the first victim instruction pending.
    pub fn new(trace_id: u64, cache_enabled: bool) -> Self {
        EnclaveState {
            trace_id,
            program_counter: 0,
            cycle_clock: Cycles::ZERO,
            cache_enabled,
            in_mitigation: None,
            saved_params: None,
            aexnotify_bit: false,
            next_seq: 0,
            finished: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AexCause {
    Ipi,
    PageFault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Erip {
    pub pos: usize,
    pub block: u32,
    pub instr: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Mitigation(MitigationPhase),
    Victim(VictimActivity),
}

/// Activity interval since resume; `retired` marks a victim group that completed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: Cycles,
    pub end: Cycles,
    pub retired: bool,
}

/// Ground truth for one enclave exit. `landing` is evaluation-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AexEvent {
    pub trace_id: u64,
    pub seq: u64,
    pub cause: AexCause,
    pub at_cycle: Cycles,
    pub since_resume: Cycles,
    /// Retired instructions since resume, or -1 when the exit hit the mitigation.
    pub landing: i64,
    pub erip: Erip,
    pub faulting_page: Option<u32>,
    pub mitigation_phase: Option<MitigationPhase>,
    pub r_bit: bool,
    pub mitigation_end: Cycles,
    pub cache_enabled: bool,
    pub timeline: Vec<Segment>,
}

impl AexEvent {
    pub fn in_mitigation(&self) -> bool {
        self.landing < 0
    }
}

pub fn ground_truth_step_count(prev: &AexEvent, cur: &AexEvent) -> Result<i64> {
    if prev.trace_id != cur.trace_id {
        return Err(Error::Usage(format!(
            "events belong to traces {} and {}",
            prev.trace_id, cur.trace_id
        )));
    }
    Ok(cur.erip.pos as i64 - prev.erip.pos as i64)
}

/// Simulator configuration shared by all traces of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Machine {
    pub params: EnclaveParams,
    pub mitigation: MitigationModel,
}

impl Machine {
    pub fn new(params: EnclaveParams, mitigation: MitigationModel) -> Result<Self> {
        params.validate()?;
        mitigation.validate()?;
        Ok(Machine { params, mitigation })
    }

    /// Resumes the enclave and runs until the interrupt (relative to resume) or a boundary fault.
    pub fn resume_and_run<R: Rng + ?Sized>(
        &self,
        state: &EnclaveState,
        victim: &PreparedVictim,
        interrupt_at: Option<Cycles>,
        rng: &mut R,
    ) -> Result<(EnclaveState, AexEvent)> {
        if state.finished {
            return Err(Error::Usage("trace already reached its closing boundary".into()));
        }
        let pos = state.program_counter;
        if pos >= victim.path.instrs.len() {
            return Err(Error::MalformedVictim("program counter beyond the resolved path".into()));
        }
        let cache = state.cache_enabled;
        let r = match state.saved_params {
            Some(sp) => sp.r_bit,
            None => rng.random_bool(self.mitigation.nop_probability),
        };
        let phases = self.mitigation.phases(r, cache);
        let m_end = phases.last().map(|p| p.2).unwrap_or(Cycles::ZERO);
        let mut timeline: Vec<Segment> = Vec::with_capacity(8);
        let mut next = state.clone();
        next.next_seq += 1;
        let seq = state.next_seq;
        let erip_at = |p: usize| {
            let pi = &victim.path.instrs[p];
            Erip {
                pos: p,
                block: pi.block,
                instr: pi.index,
            }
        };

        if let Some(t) = interrupt_at.filter(|t| *t < m_end) {
            let t = t.max(Cycles::ZERO);
            let mut phase = None;
            for &(ph, s, e) in &phases {
                if s >= t {
                    break;
                }
                timeline.push(Segment {
                    kind: SegmentKind::Mitigation(ph),
                    start: s,
                    end: e.min(t),
                    retired: false,
                });
                if t < e {
                    phase = Some(ph);
                }
            }
            if phase.is_none() {
                phase = phases.first().map(|p| p.0);
            }
            next.saved_params = Some(SavedParams {
                tickle_token: pos as u64,
                r_bit: r,
            });
            next.in_mitigation = phase;
            next.aexnotify_bit = false;
            next.cycle_clock += t;
            let ev = AexEvent {
                trace_id: state.trace_id,
                seq,
                cause: AexCause::Ipi,
                at_cycle: next.cycle_clock,
                since_resume: t,
                landing: -1,
                erip: erip_at(pos),
                faulting_page: None,
                mitigation_phase: phase,
                r_bit: r,
                mitigation_end: m_end,
                cache_enabled: cache,
                timeline,
            };
            return Ok((next, ev));
        }

        for &(ph, s, e) in &phases {
            timeline.push(Segment {
                kind: SegmentKind::Mitigation(ph),
                start: s,
                end: e,
                retired: false,
            });
        }
        let sched = victim.schedule(cache);
        let g0 = sched.group_of[pos];
        let base = sched.start[g0];
        let last = sched.groups.len() - 1;
        if !sched.groups[last].boundary {
            return Err(Error::MalformedVictim("victim exhausts its blocks without a boundary fault".into()));
        }
        // Groups that fully retire before the interrupt (retire wins a tie).
        let limit = interrupt_at.map(|t| t - m_end);
        let mut g = g0;
        while g < last {
            let end = sched.start[g + 1] - base;
            match limit {
                Some(x) if end > x => break,
                _ => {}
            }
            let grp = &sched.groups[g];
            timeline.push(Segment {
                kind: SegmentKind::Victim(grp.activity),
                start: m_end + sched.start[g] - base,
                end: m_end + end,
                retired: true,
            });
            g += 1;
        }
        let retired: usize = sched.groups[g0..g].iter().map(|gr| gr.len).sum();
        let new_pos = pos + retired;
        let grp_start = m_end + sched.start[g] - base;
        // A boundary fault fires at the start of its instruction and wins a tie with the interrupt.
        let fault = g == last && limit.map_or(true, |x| sched.start[g] - base <= x);
        next.saved_params = None;
        next.in_mitigation = None;
        next.aexnotify_bit = true;
        next.program_counter = new_pos;
        let (cause, since, faulting_page) = if fault {
            next.finished = true;
            let page = victim.path.instrs[new_pos].spec.page_id;
            debug_assert!(victim.is_boundary_page(page));
            (AexCause::PageFault, grp_start, Some(page))
        } else {
            let t = interrupt_at.expect("interrupt present when no fault");
            let grp = &sched.groups[g];
            if t > grp_start {
                timeline.push(Segment {
                    kind: SegmentKind::Victim(grp.activity),
                    start: grp_start,
                    end: t,
                    retired: false,
                });
            }
            (AexCause::Ipi, t, None)
        };
        next.cycle_clock += since;
        let ev = AexEvent {
            trace_id: state.trace_id,
            seq,
            cause,
            at_cycle: next.cycle_clock,
            since_resume: since,
            landing: retired as i64,
            erip: erip_at(new_pos),
            faulting_page,
            mitigation_phase: None,
            r_bit: r,
            mitigation_end: m_end,
            cache_enabled: cache,
            timeline,
        };
        Ok((next, ev))
    }
}
