//! Deterministic executor and schedule exploration.
//!
//! One scheduling slot executes one primitive of the chosen process (local
//! computation rides along for free); an operation's invocation is recorded
//! when its first primitive runs and its response when its last one does.
//! Exploration enumerates maximal interleavings depth-first by replaying
//! choice prefixes, optionally injecting a single crash at any slot
//! boundary; seeded random walks draw the next process uniformly.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{Event, History, OpId, OpKind, OpResult, Phase, ProcessId, RegisterId};
use crate::registers::{MachineError, RegisterConfig, RegisterMachine, StepOutcome};
use crate::sim::Recorder;

pub mod workload;

pub use workload::Workload;

/// A process's program: the stream of high-level operations it performs.
pub trait ProcessDriver {
    /// The next operation to invoke, or `None` when the program is done.
    fn next_op(&mut self) -> Option<(RegisterId, OpKind)>;

    /// Observe the response of the operation this driver issued last.
    fn on_response(&mut self, kind: &OpKind, result: &OpResult);
}

/// Driver over a fixed operation list.
#[derive(Debug, Clone)]
pub struct ScriptDriver {
    ops: Vec<(RegisterId, OpKind)>,
    pos: usize,
}

impl ScriptDriver {
    pub fn new(ops: Vec<(RegisterId, OpKind)>) -> Self {
        ScriptDriver { ops, pos: 0 }
    }
}

impl ProcessDriver for ScriptDriver {
    fn next_op(&mut self) -> Option<(RegisterId, OpKind)> {
        let op = self.ops.get(self.pos).cloned();
        self.pos += 1;
        op
    }

    fn on_response(&mut self, _kind: &OpKind, _result: &OpResult) {}
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("process {0} is not runnable at this point of the schedule")]
    NotRunnable(ProcessId),
    #[error("operation {op_id} of process {process} exceeded its step budget (wait-freedom violated?)")]
    StepBudgetExceeded { process: ProcessId, op_id: OpId },
    #[error("unknown register {0}")]
    UnknownRegister(RegisterId),
}

/// How many primitives a single operation may take before the executor
/// declares a wait-freedom violation.
fn step_budget(n_readers: usize) -> u32 {
    let n = n_readers as u32;
    16 + n * n * 4
}

/// One live run: register machines plus per-process drivers.
pub struct Executor<D> {
    machines: BTreeMap<RegisterId, RegisterMachine>,
    drivers: BTreeMap<ProcessId, D>,
    recorder: Recorder,
    /// Prefetched next op per process; `None` once the driver is done.
    next: BTreeMap<ProcessId, Option<(RegisterId, OpKind)>>,
    active: BTreeMap<ProcessId, (RegisterId, OpId, OpKind, u32)>,
    crashed: BTreeSet<ProcessId>,
    next_op_id: u32,
    max_op_steps: u32,
    pub slots_taken: u64,
}

impl<D: ProcessDriver> Executor<D> {
    pub fn new(
        registers: Vec<RegisterConfig>,
        drivers: BTreeMap<ProcessId, D>,
    ) -> Result<Self, ExecError> {
        let mut machines = BTreeMap::new();
        let mut max_readers = 1;
        for config in registers {
            max_readers = max_readers.max(config.readers.len());
            machines.insert(config.object, RegisterMachine::new(config)?);
        }
        let mut drivers = drivers;
        let next = drivers
            .iter_mut()
            .map(|(p, d)| (*p, d.next_op()))
            .collect();
        Ok(Executor {
            machines,
            drivers,
            recorder: Recorder::new(),
            next,
            active: BTreeMap::new(),
            crashed: BTreeSet::new(),
            next_op_id: 1,
            max_op_steps: step_budget(max_readers),
            slots_taken: 0,
        })
    }

    pub fn runnable(&self) -> Vec<ProcessId> {
        self.drivers
            .keys()
            .filter(|p| self.is_runnable(**p))
            .copied()
            .collect()
    }

    pub fn is_runnable(&self, p: ProcessId) -> bool {
        !self.crashed.contains(&p)
            && (self.active.contains_key(&p) || matches!(self.next.get(&p), Some(Some(_))))
    }

    pub fn finished(&self) -> bool {
        self.drivers.keys().all(|p| !self.is_runnable(*p))
    }

    /// Run one scheduling slot of `p`: invoke its next operation if it is
    /// idle, then execute exactly one primitive.
    pub fn step_process(&mut self, p: ProcessId) -> Result<(), ExecError> {
        if !self.is_runnable(p) {
            return Err(ExecError::NotRunnable(p));
        }
        self.slots_taken += 1;
        if !self.active.contains_key(&p) {
            let (object, kind) = self
                .next
                .get_mut(&p)
                .and_then(Option::take)
                .expect("runnable idle process has a prefetched op");
            let op_id = OpId(self.next_op_id);
            self.next_op_id += 1;
            let machine = self
                .machines
                .get_mut(&object)
                .ok_or(ExecError::UnknownRegister(object))?;
            machine.invoke(p, op_id, &kind)?;
            let seq = self.recorder.fresh_seq();
            self.recorder.record_event(Event {
                seq,
                process: p,
                object,
                op_id,
                phase: Phase::Invoke,
                kind: kind.clone(),
                result: None,
            });
            self.active.insert(p, (object, op_id, kind, 0));
        }
        let (object, op_id, kind, steps) = self.active.get(&p).cloned().expect("just ensured");
        if steps >= self.max_op_steps {
            return Err(ExecError::StepBudgetExceeded { process: p, op_id });
        }
        let machine = self.machines.get_mut(&object).expect("validated above");
        match machine.step(p, &mut self.recorder)? {
            StepOutcome::Continue => {
                self.active.get_mut(&p).expect("active").3 = steps + 1;
            }
            StepOutcome::Responded(result) => {
                let seq = self.recorder.fresh_seq();
                self.recorder.record_event(Event {
                    seq,
                    process: p,
                    object,
                    op_id,
                    phase: Phase::Respond,
                    kind: kind.clone(),
                    result: Some(result.clone()),
                });
                self.active.remove(&p);
                let driver = self.drivers.get_mut(&p).expect("driver exists");
                driver.on_response(&kind, &result);
                self.next.insert(p, driver.next_op());
            }
        }
        Ok(())
    }

    /// Crash `p`: it takes no further steps; a pending operation stays
    /// pending. Crashing never disturbs other processes.
    pub fn crash(&mut self, p: ProcessId) -> Result<(), ExecError> {
        if !self.is_runnable(p) {
            return Err(ExecError::NotRunnable(p));
        }
        self.crashed.insert(p);
        Ok(())
    }

    pub fn crashed(&self) -> &BTreeSet<ProcessId> {
        &self.crashed
    }

    pub fn drivers(&self) -> &BTreeMap<ProcessId, D> {
        &self.drivers
    }

    pub fn machines(&self) -> &BTreeMap<RegisterId, RegisterMachine> {
        &self.machines
    }

    /// The recorded history so far.
    pub fn history(&self) -> History {
        let objects = self
            .machines
            .iter()
            .map(|(id, m)| {
                (
                    *id,
                    crate::history::ObjectInfo {
                        initial: m.config.initial_value,
                        roles: m.config.roles(),
                    },
                )
            })
            .collect();
        History {
            events: self.recorder.events.clone(),
            objects,
        }
    }
}

/// A scripted schedule: which process takes each slot, plus optional crash
/// points (`crashes[i] = p` crashes `p` just before slot `i`).
#[derive(Debug, Clone, Default)]
pub struct Schedule {
    pub slots: Vec<ProcessId>,
    pub crashes: BTreeMap<u64, ProcessId>,
}

impl Schedule {
    pub fn round_robin_of(slots: Vec<ProcessId>) -> Self {
        Schedule {
            slots,
            crashes: BTreeMap::new(),
        }
    }
}

/// Drive `ex` through `schedule` exactly. Scheduling a non-runnable process
/// is a usage error.
pub fn run_schedule<D: ProcessDriver>(
    ex: &mut Executor<D>,
    schedule: &Schedule,
) -> Result<(), ExecError> {
    for (i, p) in schedule.slots.iter().enumerate() {
        if let Some(victim) = schedule.crashes.get(&(i as u64)) {
            ex.crash(*victim)?;
        }
        ex.step_process(*p)?;
    }
    Ok(())
}

/// Run to completion, rotating over runnable processes.
pub fn run_round_robin<D: ProcessDriver>(ex: &mut Executor<D>) -> Result<(), ExecError> {
    let mut last = None;
    while !ex.finished() {
        let runnable = ex.runnable();
        let p = match last {
            None => runnable[0],
            Some(prev) => *runnable.iter().find(|p| **p > prev).unwrap_or(&runnable[0]),
        };
        ex.step_process(p)?;
        last = Some(p);
    }
    Ok(())
}

/// Run to completion with uniformly random next-process choices.
pub fn run_random<D: ProcessDriver>(ex: &mut Executor<D>, rng: &mut impl Rng) -> Result<(), ExecError> {
    while !ex.finished() {
        let runnable = ex.runnable();
        let p = runnable[rng.gen_range(0..runnable.len())];
        ex.step_process(p)?;
    }
    Ok(())
}

/// [`run_random`] with the generator derived from a seed.
pub fn run_seeded<D: ProcessDriver>(ex: &mut Executor<D>, seed: u64) -> Result<(), ExecError> {
    run_random(ex, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashMode {
    Off,
    /// At most one process crashes per schedule, at any slot boundary.
    SingleProcess,
}

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    pub crash: CrashMode,
    /// Hard cap on slots per schedule; exceeding it aborts the exploration.
    pub step_bound: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            crash: CrashMode::Off,
            step_bound: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Step(ProcessId),
    Crash(ProcessId),
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("schedule exceeded the step bound of {0}")]
    BoundExceeded(usize),
    #[error("random exploration needs count >= 1")]
    EmptyCount,
}

#[derive(Debug, Default, Clone)]
pub struct ExploreStats {
    pub histories: u64,
    pub max_slots: usize,
}

fn legal_choices<D: ProcessDriver>(ex: &Executor<D>, options: &ExploreOptions) -> Vec<Choice> {
    let runnable = ex.runnable();
    let mut out: Vec<Choice> = runnable.iter().map(|p| Choice::Step(*p)).collect();
    if options.crash == CrashMode::SingleProcess && ex.crashed().is_empty() {
        out.extend(runnable.iter().map(|p| Choice::Crash(*p)));
    }
    out
}

fn apply_choice<D: ProcessDriver>(ex: &mut Executor<D>, choice: Choice) -> Result<(), ExecError> {
    match choice {
        Choice::Step(p) => ex.step_process(p),
        Choice::Crash(p) => ex.crash(p),
    }
}

/// Enumerate every maximal interleaving of the executor produced by `mk`,
/// exactly once each (distinct choice sequences), calling `visit` with the
/// finished run. Depth-first with prefix replay; choice order is steps by
/// ascending process, then crashes by ascending process.
pub fn explore_exhaustive<D, M, F>(
    mut mk: M,
    options: &ExploreOptions,
    mut visit: F,
) -> Result<ExploreStats, ExploreError>
where
    D: ProcessDriver,
    M: FnMut() -> Result<Executor<D>, ExecError>,
    F: FnMut(u64, &Executor<D>) -> ControlFlow<()>,
{
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut stats = ExploreStats::default();
    loop {
        let mut ex = mk()?;
        for &(idx, _) in &stack {
            let choices = legal_choices(&ex, options);
            apply_choice(&mut ex, choices[idx])?;
        }
        loop {
            let choices = legal_choices(&ex, options);
            if choices.is_empty() {
                break;
            }
            if stack.len() >= options.step_bound {
                return Err(ExploreError::BoundExceeded(options.step_bound));
            }
            stack.push((0, choices.len()));
            apply_choice(&mut ex, choices[0])?;
        }
        stats.max_slots = stats.max_slots.max(ex.slots_taken as usize);
        stats.histories += 1;
        if visit(stats.histories - 1, &ex).is_break() {
            return Ok(stats);
        }
        loop {
            match stack.pop() {
                None => return Ok(stats),
                Some((idx, n)) if idx + 1 < n => {
                    stack.push((idx + 1, n));
                    break;
                }
                Some(_) => {}
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Run `count` seeded-random maximal schedules. Schedule `i` depends only on
/// `(seed, i)`, so any prefix of the enumeration is reproducible.
pub fn explore_random<D, M, F>(
    mut mk: M,
    seed: u64,
    count: u64,
    mut visit: F,
) -> Result<ExploreStats, ExploreError>
where
    D: ProcessDriver,
    M: FnMut() -> Result<Executor<D>, ExecError>,
    F: FnMut(u64, &Executor<D>) -> ControlFlow<()>,
{
    if count == 0 {
        return Err(ExploreError::EmptyCount);
    }
    let mut stats = ExploreStats::default();
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(i)));
        let mut ex = mk()?;
        run_random(&mut ex, &mut rng)?;
        stats.histories += 1;
        stats.max_slots = stats.max_slots.max(ex.slots_taken as usize);
        if visit(i, &ex).is_break() {
            break;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Value;
    use crate::registers::AlgorithmTag;

    fn a3_workload(writer_ops: Vec<OpKind>, reader_ops: Vec<OpKind>) -> Workload {
        let config = RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A3,
            ProcessId(0),
            [ProcessId(1)],
            [ProcessId(0)],
            Value::Bottom,
        );
        let mut programs = BTreeMap::new();
        programs.insert(
            ProcessId(0),
            writer_ops.into_iter().map(|k| (RegisterId(0), k)).collect::<Vec<_>>(),
        );
        programs.insert(
            ProcessId(1),
            reader_ops.into_iter().map(|k| (RegisterId(0), k)).collect::<Vec<_>>(),
        );
        Workload::new(vec![config], programs)
    }

    #[test]
    fn round_robin_single_process_is_sequential() {
        let w = a3_workload(
            vec![OpKind::Write(Value::Int(1)), OpKind::Write(Value::Int(2)), OpKind::Audit],
            vec![],
        );
        let mut ex = w.executor().unwrap();
        run_round_robin(&mut ex).unwrap();
        let h = ex.history();
        h.validate().unwrap();
        // Fully sequential: each invoke is immediately followed by its response.
        let ops = h.ops();
        assert_eq!(ops.len(), 3);
        for pair in h.events.chunks(2) {
            assert_eq!(pair[0].op_id, pair[1].op_id);
        }
    }

    #[test]
    fn replaying_a_schedule_is_deterministic() {
        let w = a3_workload(
            vec![OpKind::Write(Value::Int(1)), OpKind::Write(Value::Int(2))],
            vec![OpKind::Read, OpKind::Read],
        );
        let schedule = Schedule::round_robin_of(
            [0, 1, 0, 1].iter().map(|p| ProcessId(*p)).collect(),
        );
        let run = |w: &Workload| {
            let mut ex = w.executor().unwrap();
            run_schedule(&mut ex, &schedule).unwrap();
            crate::history::format::to_lines(&ex.history())
        };
        assert_eq!(run(&w), run(&w));
    }

    #[test]
    fn crash_leaves_a_pending_operation() {
        // One reader crashing between the two primitives of a two-step read.
        let config = RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A4,
            ProcessId(0),
            [ProcessId(1), ProcessId(2)],
            [ProcessId(0)],
            Value::Int(7),
        );
        let mut programs = BTreeMap::new();
        programs.insert(ProcessId(1), vec![(RegisterId(0), OpKind::Read)]);
        programs.insert(ProcessId(2), vec![(RegisterId(0), OpKind::Read)]);
        let w = Workload::new(vec![config], programs);
        let mut ex = w.executor().unwrap();
        // First primitive of p1's read, then crash p1.
        ex.step_process(ProcessId(1)).unwrap();
        ex.crash(ProcessId(1)).unwrap();
        run_round_robin(&mut ex).unwrap();
        let h = ex.history();
        h.validate().unwrap();
        let pending: Vec<_> = h.ops().into_iter().filter(|o| !o.is_complete()).collect();
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].process, ProcessId(1));
    }

    #[test]
    fn exhaustive_counts_match_interleaving_combinatorics() {
        // Two processes, one primitive each: two interleavings.
        let w = a3_workload(vec![OpKind::Write(Value::Int(1))], vec![OpKind::Read]);
        let stats = explore_exhaustive(
            || w.executor(),
            &ExploreOptions::default(),
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert_eq!(stats.histories, 2);

        // Two processes, two primitives each: C(4, 2) = 6 interleavings.
        let w = a3_workload(
            vec![OpKind::Write(Value::Int(1)), OpKind::Write(Value::Int(2))],
            vec![OpKind::Read, OpKind::Read],
        );
        let stats = explore_exhaustive(
            || w.executor(),
            &ExploreOptions::default(),
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert_eq!(stats.histories, 6);
    }

    #[test]
    fn exhaustive_refuses_when_bound_exceeded() {
        let w = a3_workload(
            vec![OpKind::Write(Value::Int(1)), OpKind::Write(Value::Int(2))],
            vec![OpKind::Read],
        );
        let r = explore_exhaustive(
            || w.executor(),
            &ExploreOptions { crash: CrashMode::Off, step_bound: 2 },
            |_, _| ControlFlow::Continue(()),
        );
        assert!(matches!(r, Err(ExploreError::BoundExceeded(2))));
    }

    #[test]
    fn random_exploration_is_reproducible_and_validates_count() {
        let w = a3_workload(
            vec![OpKind::Write(Value::Int(1))],
            vec![OpKind::Read, OpKind::Read],
        );
        let collect = |seed: u64| {
            let mut out = Vec::new();
            explore_random(
                || w.executor(),
                seed,
                20,
                |_, ex| {
                    out.push(crate::history::format::to_lines(&ex.history()));
                    ControlFlow::Continue(())
                },
            )
            .unwrap();
            out
        };
        assert_eq!(collect(42), collect(42));
        // Different seeds may differ (these do).
        assert_ne!(collect(42), collect(43));
        assert!(matches!(
            explore_random(|| w.executor(), 1, 0, |_, _| ControlFlow::<()>::Continue(())),
            Err(ExploreError::EmptyCount)
        ));
    }

    #[test]
    fn crash_choices_multiply_the_space() {
        let w = a3_workload(vec![OpKind::Write(Value::Int(1))], vec![OpKind::Read]);
        let no_crash = explore_exhaustive(
            || w.executor(),
            &ExploreOptions::default(),
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        let with_crash = explore_exhaustive(
            || w.executor(),
            &ExploreOptions { crash: CrashMode::SingleProcess, step_bound: 64 },
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert!(with_crash.histories > no_crash.histories);
    }
}
