//! Auditable-register constructions as step machines over simulated shared
//! memory.
//!
//! Each high-level operation decomposes into a sequence of steps; a step
//! performs exactly one primitive plus the local computation around it, so a
//! scheduler may preempt between any two primitives but never inside one.
//! Five constructions are provided:
//!
//! - `A3`: single reader, writer-only audit, swap.
//! - `A4`: n readers, writer-only audit, swap + fetch&add, reader bits in the
//!   low-order word bits.
//! - `A5`: single reader, any auditors, swap + fetch&add, a pairs array
//!   indexed by sequence number.
//! - `A6`: n readers, any auditors, compare&swap + fetch&add, a pairs matrix.
//! - `A7`: n readers, any auditors, plain reads and writes only; its audit is
//!   regular rather than atomic.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::history::{OpId, OpKind, OpResult, ProcessId, RegisterId, Value};
use crate::sim::{
    CellContent, Memory, PrimKind, PrimReturn, Recorder, SimError, SlotContent,
};

pub mod codec;
mod a3;
mod a4;
mod a5;
mod a6;
mod a7;

use codec::{CodecError, WordCodec, WordLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AlgorithmTag {
    A3,
    A4,
    A5,
    A6,
    A7,
}

impl fmt::Display for AlgorithmTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AlgorithmTag::A3 => "a3",
            AlgorithmTag::A4 => "a4",
            AlgorithmTag::A5 => "a5",
            AlgorithmTag::A6 => "a6",
            AlgorithmTag::A7 => "a7",
        };
        write!(f, "{s}")
    }
}

impl FromStr for AlgorithmTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a3" => Ok(AlgorithmTag::A3),
            "a4" => Ok(AlgorithmTag::A4),
            "a5" => Ok(AlgorithmTag::A5),
            "a6" => Ok(AlgorithmTag::A6),
            "a7" => Ok(AlgorithmTag::A7),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

/// Built-in fault seeds. Each drops one load-bearing step of a construction;
/// the checkers must reject some history of every mutant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// The writer installs the stale reader bits instead of resetting them.
    A4NoBitReset,
    /// The audit still reads the shared word but ignores what it sees.
    A3AuditIgnoresLiveRead,
    /// The writer skips logging detected reads into the pairs matrix on
    /// compare&swap failure.
    A6SkipPairsLogging,
    /// The reader returns without publishing its read log.
    A7ReadSkipsLog,
}

impl Mutation {
    pub fn algorithm(&self) -> Option<AlgorithmTag> {
        match self {
            Mutation::None => None,
            Mutation::A4NoBitReset => Some(AlgorithmTag::A4),
            Mutation::A3AuditIgnoresLiveRead => Some(AlgorithmTag::A3),
            Mutation::A6SkipPairsLogging => Some(AlgorithmTag::A6),
            Mutation::A7ReadSkipsLog => Some(AlgorithmTag::A7),
        }
    }

    pub fn all() -> [Mutation; 4] {
        [
            Mutation::A4NoBitReset,
            Mutation::A3AuditIgnoresLiveRead,
            Mutation::A6SkipPairsLogging,
            Mutation::A7ReadSkipsLog,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mutation::None => "none",
            Mutation::A4NoBitReset => "a4-mutant-nobitreset",
            Mutation::A3AuditIgnoresLiveRead => "a3-mutant-noauditread",
            Mutation::A6SkipPairsLogging => "a6-mutant-nopairslog",
            Mutation::A7ReadSkipsLog => "a7-mutant-nolog",
        }
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for m in Mutation::all() {
            if m.name() == s {
                return Ok(m);
            }
        }
        Err(format!("unknown mutant `{s}`"))
    }
}

/// Static description of one register instance: construction, roles, and
/// initial value.
#[derive(Debug, Clone)]
pub struct RegisterConfig {
    pub object: RegisterId,
    pub algorithm: AlgorithmTag,
    pub writer: ProcessId,
    pub readers: BTreeSet<ProcessId>,
    pub auditors: BTreeSet<ProcessId>,
    pub initial_value: Value,
    pub mutation: Mutation,
}

impl RegisterConfig {
    pub fn new(
        object: RegisterId,
        algorithm: AlgorithmTag,
        writer: ProcessId,
        readers: impl IntoIterator<Item = ProcessId>,
        auditors: impl IntoIterator<Item = ProcessId>,
        initial_value: Value,
    ) -> Self {
        RegisterConfig {
            object,
            algorithm,
            writer,
            readers: readers.into_iter().collect(),
            auditors: auditors.into_iter().collect(),
            initial_value,
            mutation: Mutation::None,
        }
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = mutation;
        self
    }

    /// Readers in ascending process order; position is the reader-bit index.
    pub fn reader_order(&self) -> Vec<ProcessId> {
        self.readers.iter().copied().collect()
    }

    pub fn reader_index(&self, p: ProcessId) -> Option<usize> {
        self.reader_order().iter().position(|&r| r == p)
    }

    pub fn roles(&self) -> crate::history::RoleSet {
        crate::history::RoleSet {
            writer: self.writer,
            readers: self.readers.clone(),
            auditors: self.auditors.clone(),
        }
    }

    fn validate(&self) -> Result<(), MachineError> {
        let bad = |msg: String| Err(MachineError::InvalidConfig(msg));
        if self.readers.is_empty() {
            return bad("at least one reader required".into());
        }
        if !self.auditors.contains(&self.writer) {
            return bad("the writer is always an auditor".into());
        }
        // Only the n-reader compare&swap construction admits the writer as a
        // reader of its own register (the n-process consensus loop reads
        // every register, its own included).
        if self.algorithm != AlgorithmTag::A6 && self.readers.contains(&self.writer) {
            return bad(format!(
                "{} does not allow the writer among the readers",
                self.algorithm
            ));
        }
        match self.algorithm {
            AlgorithmTag::A3 | AlgorithmTag::A5 => {
                if self.readers.len() != 1 {
                    return bad(format!("{} is single-reader", self.algorithm));
                }
            }
            _ => {}
        }
        match self.algorithm {
            AlgorithmTag::A3 | AlgorithmTag::A4 => {
                if self.auditors.iter().any(|a| *a != self.writer) {
                    return bad(format!(
                        "{} supports only the writer as auditor",
                        self.algorithm
                    ));
                }
            }
            _ => {}
        }
        if let Some(required) = self.mutation.algorithm() {
            if required != self.algorithm {
                return bad(format!(
                    "mutant {} applies to {required}, not {}",
                    self.mutation.name(),
                    self.algorithm
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("invalid register configuration: {0}")]
    InvalidConfig(String),
    #[error("process {process} may not {kind} this register")]
    RoleViolation { process: ProcessId, kind: &'static str },
    #[error("process {0} has no pending operation")]
    NoPendingOp(ProcessId),
    #[error("process {0} already has a pending operation")]
    AlreadyPending(ProcessId),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Result of driving one step of a pending operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Responded(OpResult),
}

/// Mutable run context threaded through every step.
pub(crate) struct StepCtx<'a> {
    pub memory: &'a mut Memory,
    pub recorder: &'a mut Recorder,
    pub diagnostics: &'a mut Vec<String>,
    pub cas_failure_log: &'a mut Vec<(OpId, u32)>,
}

enum Alg {
    A3(a3::A3),
    A4(a4::A4),
    A5(a5::A5),
    A6(a6::A6),
    A7(a7::A7),
}

/// One live register instance: its cells, per-process locals and pending
/// operations.
pub struct RegisterMachine {
    pub config: RegisterConfig,
    pub memory: Memory,
    alg: Alg,
    /// Width-guard and similar non-fatal notices.
    pub diagnostics: Vec<String>,
    /// Completed writes and how many compare&swap failures each suffered
    /// (only the compare&swap construction records entries).
    pub cas_failure_log: Vec<(OpId, u32)>,
}

impl RegisterMachine {
    pub fn new(config: RegisterConfig) -> Result<Self, MachineError> {
        config.validate()?;
        let mut memory = Memory::new();
        let alg = match config.algorithm {
            AlgorithmTag::A3 => Alg::A3(a3::A3::new(&config, &mut memory)),
            AlgorithmTag::A4 => Alg::A4(a4::A4::new(&config, &mut memory)),
            AlgorithmTag::A5 => Alg::A5(a5::A5::new(&config, &mut memory)),
            AlgorithmTag::A6 => Alg::A6(a6::A6::new(&config, &mut memory)),
            AlgorithmTag::A7 => Alg::A7(a7::A7::new(&config, &mut memory)),
        };
        Ok(RegisterMachine {
            config,
            memory,
            alg,
            diagnostics: Vec::new(),
            cas_failure_log: Vec::new(),
        })
    }

    fn check_role(&self, process: ProcessId, kind: &OpKind) -> Result<(), MachineError> {
        let ok = match kind {
            OpKind::Write(_) => process == self.config.writer,
            OpKind::Read => self.config.readers.contains(&process),
            OpKind::Audit => self.config.auditors.contains(&process),
        };
        if ok {
            Ok(())
        } else {
            Err(MachineError::RoleViolation {
                process,
                kind: kind.label(),
            })
        }
    }

    /// Begin a high-level operation for `process`. The executor records the
    /// invocation event; the operation performs no primitive until the first
    /// `step`.
    pub fn invoke(
        &mut self,
        process: ProcessId,
        op_id: OpId,
        kind: &OpKind,
    ) -> Result<(), MachineError> {
        self.check_role(process, kind)?;
        if self.has_active(process) {
            return Err(MachineError::AlreadyPending(process));
        }
        match &mut self.alg {
            Alg::A3(a) => a.invoke(process, op_id, kind),
            Alg::A4(a) => a.invoke(process, op_id, kind),
            Alg::A5(a) => a.invoke(process, op_id, kind),
            Alg::A6(a) => a.invoke(process, op_id, kind),
            Alg::A7(a) => a.invoke(process, op_id, kind),
        }
        Ok(())
    }

    /// Execute exactly one primitive of `process`'s pending operation.
    pub fn step(
        &mut self,
        process: ProcessId,
        recorder: &mut Recorder,
    ) -> Result<StepOutcome, MachineError> {
        let mut ctx = StepCtx {
            memory: &mut self.memory,
            recorder,
            diagnostics: &mut self.diagnostics,
            cas_failure_log: &mut self.cas_failure_log,
        };
        match &mut self.alg {
            Alg::A3(a) => a.step(process, &mut ctx),
            Alg::A4(a) => a.step(process, &mut ctx),
            Alg::A5(a) => a.step(process, &mut ctx),
            Alg::A6(a) => a.step(process, &mut ctx),
            Alg::A7(a) => a.step(process, &mut ctx),
        }
    }

    pub fn has_active(&self, process: ProcessId) -> bool {
        match &self.alg {
            Alg::A3(a) => a.has_active(process),
            Alg::A4(a) => a.has_active(process),
            Alg::A5(a) => a.has_active(process),
            Alg::A6(a) => a.has_active(process),
            Alg::A7(a) => a.has_active(process),
        }
    }
}

pub(crate) fn slot(v: Value) -> CellContent {
    CellContent::Slot(SlotContent::Value(v))
}

pub(crate) fn empty_slot() -> CellContent {
    CellContent::Slot(SlotContent::Empty)
}

/// Every primitive in the cell traces must have been applied by a process the
/// construction's pseudocode allows on that line (role confinement).
pub fn verify_role_confinement(machine: &RegisterMachine) -> Result<(), String> {
    let cfg = &machine.config;
    let readers = cfg.reader_order();
    let fail = |cell: &crate::sim::SimCell, r: &crate::sim::PrimitiveRecord, why: &str| {
        Err(format!(
            "cell {} step {}: {} by {} {}",
            cell.key, r.seq, r.kind.label(), r.process, why
        ))
    };
    for cell in machine.memory.cells() {
        for r in &cell.trace {
            let p = r.process;
            let ok = match (cfg.algorithm, &cell.key, r.kind) {
                (AlgorithmTag::A3, crate::sim::CellKey::Main, PrimKind::Swap) => {
                    // Readers swap the marker in, the writer swaps values in.
                    if r.args[0] == empty_slot() {
                        readers.contains(&p)
                    } else {
                        p == cfg.writer
                    }
                }
                (AlgorithmTag::A3, crate::sim::CellKey::Main, PrimKind::Read) => {
                    cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A4, crate::sim::CellKey::Main, PrimKind::Swap) => p == cfg.writer,
                (AlgorithmTag::A4, crate::sim::CellKey::Main, PrimKind::FetchAdd) => {
                    fetch_add_matches_reader(&r.args[0], &readers, p)
                }
                (AlgorithmTag::A4, crate::sim::CellKey::Main, PrimKind::Read) => {
                    readers.contains(&p) || cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A5, crate::sim::CellKey::Main, PrimKind::Swap) => p == cfg.writer,
                (AlgorithmTag::A5, crate::sim::CellKey::Main, PrimKind::FetchAdd) => {
                    readers.contains(&p)
                }
                (AlgorithmTag::A5, crate::sim::CellKey::Main, PrimKind::Read) => {
                    readers.contains(&p) || cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A5, crate::sim::CellKey::Pair(_), PrimKind::Write) => {
                    readers.contains(&p) || p == cfg.writer || cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A5, crate::sim::CellKey::Pair(_), PrimKind::Read) => {
                    cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A6, crate::sim::CellKey::Main, PrimKind::CompareAndSwap) => {
                    p == cfg.writer
                }
                (AlgorithmTag::A6, crate::sim::CellKey::Main, PrimKind::FetchAdd) => {
                    fetch_add_matches_reader(&r.args[0], &readers, p)
                }
                (AlgorithmTag::A6, crate::sim::CellKey::Main, PrimKind::Read) => {
                    readers.contains(&p) || cfg.auditors.contains(&p) || p == cfg.writer
                }
                (AlgorithmTag::A6, crate::sim::CellKey::PairAt { .. }, PrimKind::Write) => {
                    p == cfg.writer
                }
                (AlgorithmTag::A6, crate::sim::CellKey::PairAt { .. }, PrimKind::Read) => {
                    cfg.auditors.contains(&p)
                }
                (AlgorithmTag::A7, crate::sim::CellKey::ValueReg, PrimKind::Write) => {
                    p == cfg.writer
                }
                (AlgorithmTag::A7, crate::sim::CellKey::ValueReg, PrimKind::Read) => {
                    readers.contains(&p)
                }
                (AlgorithmTag::A7, crate::sim::CellKey::AuditReg(i), PrimKind::Write) => {
                    readers.get(*i) == Some(&p)
                }
                (AlgorithmTag::A7, crate::sim::CellKey::AuditReg(_), PrimKind::Read) => {
                    cfg.auditors.contains(&p)
                }
                _ => false,
            };
            if !ok {
                return fail(cell, r, "outside its role's allowed lines");
            }
        }
    }
    Ok(())
}

fn fetch_add_matches_reader(arg: &CellContent, readers: &[ProcessId], p: ProcessId) -> bool {
    let CellContent::Word(amount) = arg else {
        return false;
    };
    // The amount must be 2^i for the caller's own reader index.
    match readers.iter().position(|&r| r == p) {
        Some(i) => {
            amount.bits() == i as u64 + 1 && amount.count_ones() == 1
        }
        None => false,
    }
}

/// Reader-bit discipline of the word constructions: every install by the
/// writer clears all n low-order bits, and bit i is only ever raised by a
/// fetch&add of 2^i from reader i applied while the bit was clear.
pub fn verify_bit_discipline(machine: &RegisterMachine) -> Result<(), String> {
    let cfg = &machine.config;
    let n = cfg.readers.len();
    let layout = match cfg.algorithm {
        AlgorithmTag::A4 => WordLayout::ValueBits,
        AlgorithmTag::A6 => WordLayout::ValueSnBits,
        _ => return Ok(()),
    };
    let codec = WordCodec::new(n, layout);
    let readers = cfg.reader_order();
    for cell in machine.memory.cells() {
        if cell.key != crate::sim::CellKey::Main {
            continue;
        }
        let mut cur = match &cell.initial {
            CellContent::Word(w) => w.clone(),
            _ => return Err("main cell of a word construction is not a word".into()),
        };
        for r in &cell.trace {
            match r.kind {
                PrimKind::Swap => {
                    let CellContent::Word(installed) = &r.args[0] else {
                        return Err(format!("step {}: swap of non-word", r.seq));
                    };
                    if cfg.mutation == Mutation::None && !codec.bits(installed).is_zero() {
                        return Err(format!(
                            "step {}: write installed nonzero reader bits",
                            r.seq
                        ));
                    }
                    cur = installed.clone();
                }
                PrimKind::CompareAndSwap => {
                    if r.ret == PrimReturn::Bool(true) {
                        let CellContent::Word(installed) = &r.args[1] else {
                            return Err(format!("step {}: cas of non-word", r.seq));
                        };
                        if !codec.bits(installed).is_zero() {
                            return Err(format!(
                                "step {}: write installed nonzero reader bits",
                                r.seq
                            ));
                        }
                        cur = installed.clone();
                    }
                }
                PrimKind::FetchAdd => {
                    let CellContent::Word(amount) = &r.args[0] else {
                        return Err(format!("step {}: fetch&add of non-word", r.seq));
                    };
                    let i = (amount.bits() - 1) as usize;
                    if amount.count_ones() != 1 || i >= n {
                        return Err(format!("step {}: fetch&add amount is not a reader bit", r.seq));
                    }
                    if readers[i] != r.process {
                        return Err(format!("step {}: bit {i} raised by the wrong reader", r.seq));
                    }
                    if codec.bits(&cur).get(i) {
                        return Err(format!("step {}: bit {i} raised twice", r.seq));
                    }
                    cur = &cur + amount;
                }
                PrimKind::Read => {}
                PrimKind::Write => {
                    return Err(format!("step {}: plain write on the shared word", r.seq))
                }
            }
        }
    }
    Ok(())
}
