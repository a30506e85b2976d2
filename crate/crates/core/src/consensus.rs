//! Wait-free consensus from auditable registers.
//!
//! Two-process consensus uses two single-writer single-reader registers,
//! each written and audited by its owner and read by the other: propose,
//! read the peer's register, audit your own, then decide. The n-process
//! generalization writes into register i, reads and audits all n registers,
//! and decides the maximum value no process ever missed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::history::{AuditSet, OpKind, OpResult, ProcessId, RegisterId, Value};
use crate::registers::{AlgorithmTag, RegisterConfig};
use crate::scheduler::{ExecError, Executor, ProcessDriver};

/// Which construction backs the two-process consensus registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backing {
    A3,
    A5,
}

impl fmt::Display for Backing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backing::A3 => write!(f, "a3"),
            Backing::A5 => write!(f, "a5"),
        }
    }
}

enum C2State {
    Write,
    Read,
    Audit,
    Done,
}

/// The two-process proposer: write own register, read the other, audit own.
pub struct Consensus2Driver {
    me: ProcessId,
    other: ProcessId,
    input: Value,
    state: C2State,
    val: Value,
    decision: Option<Value>,
}

impl Consensus2Driver {
    fn new(me: ProcessId, other: ProcessId, input: Value) -> Self {
        Consensus2Driver {
            me,
            other,
            input,
            state: C2State::Write,
            val: Value::Bottom,
            decision: None,
        }
    }

    pub fn decision(&self) -> Option<Value> {
        self.decision
    }
}

impl ProcessDriver for Consensus2Driver {
    fn next_op(&mut self) -> Option<(RegisterId, OpKind)> {
        match self.state {
            C2State::Write => Some((RegisterId(self.me.0), OpKind::Write(self.input))),
            C2State::Read => Some((RegisterId(self.other.0), OpKind::Read)),
            C2State::Audit => Some((RegisterId(self.me.0), OpKind::Audit)),
            C2State::Done => None,
        }
    }

    fn on_response(&mut self, _kind: &OpKind, result: &OpResult) {
        match self.state {
            C2State::Write => self.state = C2State::Read,
            C2State::Read => {
                if let OpResult::Read(v) = result {
                    self.val = *v;
                }
                self.state = C2State::Audit;
            }
            C2State::Audit => {
                let OpResult::Audit(audit_response) = result else {
                    unreachable!("audit response expected");
                };
                self.decision = Some(if self.val == Value::Bottom {
                    self.input
                } else if *audit_response == AuditSet::singleton(self.other, Value::Bottom) {
                    self.val
                } else {
                    self.input.max(self.val)
                });
                self.state = C2State::Done;
            }
            C2State::Done => {}
        }
    }
}

/// Two swsr registers, each owned (written and audited) by one proposer and
/// read by the other, both initially bottom.
pub fn two_process_registers(backing: Backing, mutation: crate::registers::Mutation) -> Vec<RegisterConfig> {
    let tag = match backing {
        Backing::A3 => AlgorithmTag::A3,
        Backing::A5 => AlgorithmTag::A5,
    };
    (0..2u32)
        .map(|i| {
            RegisterConfig::new(
                RegisterId(i),
                tag,
                ProcessId(i),
                [ProcessId(1 - i)],
                [ProcessId(i)],
                Value::Bottom,
            )
            .with_mutation(mutation)
        })
        .collect()
}

pub fn consensus2_executor(
    backing: Backing,
    inputs: (Value, Value),
) -> Result<Executor<Consensus2Driver>, ExecError> {
    let mut drivers = BTreeMap::new();
    drivers.insert(ProcessId(0), Consensus2Driver::new(ProcessId(0), ProcessId(1), inputs.0));
    drivers.insert(ProcessId(1), Consensus2Driver::new(ProcessId(1), ProcessId(0), inputs.1));
    Executor::new(
        two_process_registers(backing, crate::registers::Mutation::None),
        drivers,
    )
}

enum CnState {
    Write,
    Read(usize),
    Audit(usize),
    Done,
}

/// The n-process proposer over multi-reader multi-auditor registers.
pub struct ConsensusNDriver {
    me: usize,
    n: usize,
    input: Value,
    state: CnState,
    values: Vec<Value>,
    safe_values: BTreeSet<Value>,
    decision: Option<Value>,
}

impl ConsensusNDriver {
    fn new(me: usize, n: usize, input: Value) -> Self {
        ConsensusNDriver {
            me,
            n,
            input,
            state: CnState::Write,
            values: vec![Value::Bottom; n],
            safe_values: BTreeSet::new(),
            decision: None,
        }
    }

    pub fn decision(&self) -> Option<Value> {
        self.decision
    }

    /// The set the decision was drawn from; equal across deciders.
    pub fn safe_values(&self) -> &BTreeSet<Value> {
        &self.safe_values
    }
}

impl ProcessDriver for ConsensusNDriver {
    fn next_op(&mut self) -> Option<(RegisterId, OpKind)> {
        match self.state {
            CnState::Write => Some((RegisterId(self.me as u32), OpKind::Write(self.input))),
            CnState::Read(j) => Some((RegisterId(j as u32), OpKind::Read)),
            CnState::Audit(j) => Some((RegisterId(j as u32), OpKind::Audit)),
            CnState::Done => None,
        }
    }

    fn on_response(&mut self, _kind: &OpKind, result: &OpResult) {
        match self.state {
            CnState::Write => self.state = CnState::Read(0),
            CnState::Read(j) => {
                if let OpResult::Read(v) = result {
                    self.values[j] = *v;
                }
                self.state = if j + 1 < self.n {
                    CnState::Read(j + 1)
                } else {
                    CnState::Audit(0)
                };
            }
            CnState::Audit(j) => {
                let OpResult::Audit(audit_response) = result else {
                    unreachable!("audit response expected");
                };
                // The latest response alone decides whether register j is
                // safe: nobody may have read bottom from it.
                if !audit_response.iter().any(|(_, v)| v.is_bottom()) {
                    self.safe_values.insert(self.values[j]);
                }
                if j + 1 < self.n {
                    self.state = CnState::Audit(j + 1);
                } else {
                    self.decision = self.safe_values.iter().max().copied();
                    self.state = CnState::Done;
                }
            }
            CnState::Done => {}
        }
    }
}

/// n multi-reader multi-auditor registers; register i is written by process
/// i and read and audited by everyone (each proposer also reads its own).
pub fn n_process_registers(n: usize, mutation: crate::registers::Mutation) -> Vec<RegisterConfig> {
    let everyone: Vec<ProcessId> = (0..n as u32).map(ProcessId).collect();
    (0..n as u32)
        .map(|i| {
            RegisterConfig::new(
                RegisterId(i),
                AlgorithmTag::A6,
                ProcessId(i),
                everyone.clone(),
                everyone.clone(),
                Value::Bottom,
            )
            .with_mutation(mutation)
        })
        .collect()
}

pub fn consensus_n_executor(inputs: &[Value]) -> Result<Executor<ConsensusNDriver>, ExecError> {
    let n = inputs.len();
    let drivers = inputs
        .iter()
        .enumerate()
        .map(|(i, v)| (ProcessId(i as u32), ConsensusNDriver::new(i, n, *v)))
        .collect();
    Executor::new(n_process_registers(n, crate::registers::Mutation::None), drivers)
}

/// What one process ended a run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessOutcome {
    Decided(Value),
    Crashed,
    /// Ran to completion without reaching a decision; always a violation.
    Undecided,
}

/// Per-run consensus verdict: each property holds or names offenders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusVerdict {
    pub agreement: bool,
    pub validity: bool,
    pub termination: bool,
}

impl ConsensusVerdict {
    pub fn ok(&self) -> bool {
        self.agreement && self.validity && self.termination
    }
}

/// Check agreement (all decided values equal), validity (decided values were
/// proposed), and termination (every non-crashed process decided).
pub fn verify_consensus(
    inputs: &BTreeMap<ProcessId, Value>,
    outcomes: &BTreeMap<ProcessId, ProcessOutcome>,
) -> ConsensusVerdict {
    let decided: Vec<Value> = outcomes
        .values()
        .filter_map(|o| match o {
            ProcessOutcome::Decided(v) => Some(*v),
            _ => None,
        })
        .collect();
    let agreement = decided.windows(2).all(|w| w[0] == w[1]);
    let validity = decided.iter().all(|v| inputs.values().any(|i| i == v));
    let termination = outcomes
        .values()
        .all(|o| !matches!(o, ProcessOutcome::Undecided));
    ConsensusVerdict {
        agreement,
        validity,
        termination,
    }
}

/// Collect outcomes from a finished two-process run.
pub fn outcomes2(ex: &Executor<Consensus2Driver>) -> BTreeMap<ProcessId, ProcessOutcome> {
    ex.drivers()
        .iter()
        .map(|(p, d)| (*p, outcome(d.decision(), ex.crashed().contains(p))))
        .collect()
}

/// Collect outcomes from a finished n-process run.
pub fn outcomes_n(ex: &Executor<ConsensusNDriver>) -> BTreeMap<ProcessId, ProcessOutcome> {
    ex.drivers()
        .iter()
        .map(|(p, d)| (*p, outcome(d.decision(), ex.crashed().contains(p))))
        .collect()
}

fn outcome(decision: Option<Value>, crashed: bool) -> ProcessOutcome {
    match decision {
        // A decision reached before a crash still counts.
        Some(v) => ProcessOutcome::Decided(v),
        None if crashed => ProcessOutcome::Crashed,
        None => ProcessOutcome::Undecided,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{run_round_robin, run_schedule, Schedule};

    fn inputs2(a: u64, b: u64) -> BTreeMap<ProcessId, Value> {
        [(ProcessId(0), Value::Int(a)), (ProcessId(1), Value::Int(b))].into()
    }

    #[test]
    fn solo_then_other_decides_first_writer_value() {
        for backing in [Backing::A3, Backing::A5] {
            let mut ex = consensus2_executor(backing, (Value::Int(3), Value::Int(5))).unwrap();
            // p0 runs its whole propose, then p1 runs.
            while ex.is_runnable(ProcessId(0)) {
                ex.step_process(ProcessId(0)).unwrap();
            }
            run_round_robin(&mut ex).unwrap();
            let outcomes = outcomes2(&ex);
            assert_eq!(outcomes[&ProcessId(0)], ProcessOutcome::Decided(Value::Int(3)), "{backing}");
            assert_eq!(outcomes[&ProcessId(1)], ProcessOutcome::Decided(Value::Int(3)), "{backing}");
            assert!(verify_consensus(&inputs2(3, 5), &outcomes).ok());
        }
    }

    #[test]
    fn alternating_schedule_agrees_on_max() {
        // Fully alternating: both read the other's value and neither audit
        // shows a bottom read.
        let mut ex = consensus2_executor(Backing::A3, (Value::Int(3), Value::Int(5))).unwrap();
        let mut slots = Vec::new();
        // A3-backed ops are one primitive each: propose = 3 slots per process.
        for _ in 0..3 {
            slots.push(ProcessId(0));
            slots.push(ProcessId(1));
        }
        run_schedule(&mut ex, &Schedule::round_robin_of(slots)).unwrap();
        assert!(ex.finished());
        let outcomes = outcomes2(&ex);
        assert_eq!(outcomes[&ProcessId(0)], ProcessOutcome::Decided(Value::Int(5)));
        assert_eq!(outcomes[&ProcessId(1)], ProcessOutcome::Decided(Value::Int(5)));
    }

    #[test]
    fn n_equals_one_decides_own_input() {
        let mut ex = consensus_n_executor(&[Value::Int(9)]).unwrap();
        run_round_robin(&mut ex).unwrap();
        let outcomes = outcomes_n(&ex);
        assert_eq!(outcomes[&ProcessId(0)], ProcessOutcome::Decided(Value::Int(9)));
    }

    #[test]
    fn sequential_three_processes_decide_first_value() {
        let inputs = [Value::Int(3), Value::Int(5), Value::Int(4)];
        let mut ex = consensus_n_executor(&inputs).unwrap();
        for p in 0..3u32 {
            while ex.is_runnable(ProcessId(p)) {
                ex.step_process(ProcessId(p)).unwrap();
            }
        }
        let outcomes = outcomes_n(&ex);
        // Only the first proposer's register is never read as bottom.
        for p in 0..3u32 {
            assert_eq!(outcomes[&ProcessId(p)], ProcessOutcome::Decided(Value::Int(3)));
        }
        // All deciders hold the same safe set.
        let sets: Vec<_> = ex.drivers().values().map(|d| d.safe_values().clone()).collect();
        assert!(sets.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn verdict_flags_each_property() {
        let inputs = inputs2(3, 5);
        let good: BTreeMap<_, _> = [
            (ProcessId(0), ProcessOutcome::Decided(Value::Int(3))),
            (ProcessId(1), ProcessOutcome::Decided(Value::Int(3))),
        ]
        .into();
        assert!(verify_consensus(&inputs, &good).ok());

        let disagree: BTreeMap<_, _> = [
            (ProcessId(0), ProcessOutcome::Decided(Value::Int(3))),
            (ProcessId(1), ProcessOutcome::Decided(Value::Int(5))),
        ]
        .into();
        assert!(!verify_consensus(&inputs, &disagree).agreement);

        let invalid: BTreeMap<_, _> = [
            (ProcessId(0), ProcessOutcome::Decided(Value::Int(7))),
            (ProcessId(1), ProcessOutcome::Decided(Value::Int(7))),
        ]
        .into();
        assert!(!verify_consensus(&inputs, &invalid).validity);

        let undecided: BTreeMap<_, _> = [
            (ProcessId(0), ProcessOutcome::Decided(Value::Int(3))),
            (ProcessId(1), ProcessOutcome::Undecided),
        ]
        .into();
        assert!(!verify_consensus(&inputs, &undecided).termination);
    }
}
