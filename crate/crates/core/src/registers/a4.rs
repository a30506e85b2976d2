//! Multi-reader register with writer-only audit, built on swap and
//! fetch&add. The n low-order bits of the shared word mark which readers
//! have read the value in the high-order bits.

use std::collections::BTreeMap;

use crate::history::{AuditSet, OpId, OpKind, OpResult, ProcessId, Value};
use crate::sim::{CellContent, CellKey, Memory};

use super::codec::{ReaderBits, WordCodec, WordLayout};
use super::{MachineError, Mutation, RegisterConfig, StepCtx, StepOutcome};

enum Pc {
    ReadWord,
    ReadFetchAdd,
    WriteSwap(Value),
    AuditRead,
}

pub(super) struct A4 {
    cell: usize,
    codec: WordCodec,
    readers: Vec<ProcessId>,
    mutation: Mutation,
    // Per-reader locals.
    read_result: BTreeMap<ProcessId, Value>,
    // Writer/auditor locals.
    curr_val: Value,
    prev_val: Value,
    audit_result: AuditSet,
    /// Bits seen by the writer's previous swap; the faulty variant installs
    /// these instead of a cleared field.
    stale_bits: ReaderBits,
    active: BTreeMap<ProcessId, (OpId, Pc)>,
}

impl A4 {
    pub fn new(config: &RegisterConfig, memory: &mut Memory) -> Self {
        let readers = config.reader_order();
        let codec = WordCodec::new(readers.len(), WordLayout::ValueBits);
        let zero = ReaderBits::zero(readers.len());
        let initial = codec.encode(&config.initial_value, 0, zero);
        let cell = memory.ensure(CellKey::Main, CellContent::Word(initial));
        A4 {
            cell,
            codec,
            readers,
            mutation: config.mutation,
            read_result: BTreeMap::new(),
            curr_val: config.initial_value,
            prev_val: Value::Bottom,
            audit_result: AuditSet::new(),
            stale_bits: zero,
            active: BTreeMap::new(),
        }
    }

    fn reader_index(&self, p: ProcessId) -> usize {
        self.readers.iter().position(|&r| r == p).expect("role-checked")
    }

    pub fn invoke(&mut self, p: ProcessId, op_id: OpId, kind: &OpKind) {
        let pc = match kind {
            OpKind::Write(v) => Pc::WriteSwap(*v),
            OpKind::Read => Pc::ReadWord,
            OpKind::Audit => Pc::AuditRead,
        };
        self.active.insert(p, (op_id, pc));
    }

    pub fn has_active(&self, p: ProcessId) -> bool {
        self.active.contains_key(&p)
    }

    fn word(&self, content: CellContent) -> crate::sim::Word {
        match content {
            CellContent::Word(w) => w,
            CellContent::Slot(_) => unreachable!("main cell is word-flavored"),
        }
    }

    pub fn step(&mut self, p: ProcessId, ctx: &mut StepCtx<'_>) -> Result<StepOutcome, MachineError> {
        let (op_id, pc) = self.active.remove(&p).ok_or(MachineError::NoPendingOp(p))?;
        match pc {
            Pc::ReadWord => {
                let w = self.word(ctx.memory.read(self.cell, ctx.recorder, p, op_id));
                let i = self.reader_index(p);
                if !self.codec.bits(&w).get(i) {
                    self.active.insert(p, (op_id, Pc::ReadFetchAdd));
                    Ok(StepOutcome::Continue)
                } else {
                    let out = *self.read_result.get(&p).unwrap_or(&Value::Bottom);
                    Ok(StepOutcome::Responded(OpResult::Read(out)))
                }
            }
            Pc::ReadFetchAdd => {
                let i = self.reader_index(p);
                let old = ctx.memory.fetch_add(
                    self.cell,
                    ctx.recorder,
                    p,
                    op_id,
                    &self.codec.bit_amount(i),
                )?;
                let v = self.codec.value(&old)?;
                self.read_result.insert(p, v);
                Ok(StepOutcome::Responded(OpResult::Read(v)))
            }
            Pc::WriteSwap(v) => {
                self.prev_val = self.curr_val;
                self.curr_val = v;
                let install_bits = if self.mutation == Mutation::A4NoBitReset {
                    self.stale_bits
                } else {
                    ReaderBits::zero(self.readers.len())
                };
                let word = self.codec.encode(&v, 0, install_bits);
                if self.codec.exceeds_guard(&word) {
                    ctx.diagnostics.push(format!(
                        "word width {} exceeds the {}-bit guard",
                        word.bits(),
                        self.codec.width_guard
                    ));
                }
                let old = self.word(ctx.memory.swap(
                    self.cell,
                    ctx.recorder,
                    p,
                    op_id,
                    CellContent::Word(word),
                ));
                let old_bits = self.codec.bits(&old);
                for j in old_bits.set_positions() {
                    self.audit_result.add(self.readers[j], self.prev_val);
                }
                self.stale_bits = old_bits;
                Ok(StepOutcome::Responded(OpResult::Wrote))
            }
            Pc::AuditRead => {
                let w = self.word(ctx.memory.read(self.cell, ctx.recorder, p, op_id));
                for j in self.codec.bits(&w).set_positions() {
                    self.audit_result.add(self.readers[j], self.curr_val);
                }
                Ok(StepOutcome::Responded(OpResult::Audit(self.audit_result.clone())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{AlgorithmTag, RegisterMachine};
    use super::*;
    use crate::history::RegisterId;
    use crate::sim::Recorder;
    use num_traits::ToPrimitive;

    fn machine() -> RegisterMachine {
        // Two readers, initial value with code 7 so the initial word is 28.
        RegisterMachine::new(RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A4,
            ProcessId(0),
            [ProcessId(1), ProcessId(2)],
            [ProcessId(0)],
            Value::Int(6),
        ))
        .unwrap()
    }

    fn run_op(m: &mut RegisterMachine, rec: &mut Recorder, p: ProcessId, op: u32, kind: OpKind) -> (OpResult, u32) {
        m.invoke(p, OpId(op), &kind).unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            match m.step(p, rec).unwrap() {
                StepOutcome::Continue => {}
                StepOutcome::Responded(r) => return (r, steps),
            }
        }
    }

    fn main_word(m: &RegisterMachine) -> u64 {
        match &m.memory.cells()[0].contents {
            CellContent::Word(w) => w.to_u64().unwrap(),
            _ => panic!("word cell expected"),
        }
    }

    #[test]
    fn first_read_sets_bit_and_returns_value() {
        let mut m = machine();
        let mut rec = Recorder::new();
        assert_eq!(main_word(&m), 28);
        let (r, steps) = run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Int(6)));
        assert_eq!(steps, 2);
        assert_eq!(main_word(&m), 29);
    }

    #[test]
    fn repeat_read_with_set_bit_is_one_step_and_leaves_word() {
        let mut m = machine();
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        let (r, steps) = run_op(&mut m, &mut rec, ProcessId(1), 2, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Int(6)));
        assert_eq!(steps, 1);
        assert_eq!(main_word(&m), 29);
    }

    #[test]
    fn write_detects_reader_bits_in_swapped_word() {
        let mut m = machine();
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Write(Value::Int(9)));
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(0), 3, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(1), Value::Int(6)))
        );
        // Fresh word has both bits clear.
        assert_eq!(main_word(&m) % 4, 0);
    }

    #[test]
    fn audit_sees_live_bits() {
        let mut m = machine();
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(2), 1, OpKind::Read);
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(2), Value::Int(6)))
        );
    }

    #[test]
    fn mutant_leaves_stale_bits_in_place() {
        let cfg = RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A4,
            ProcessId(0),
            [ProcessId(1), ProcessId(2)],
            [ProcessId(0)],
            Value::Int(6),
        )
        .with_mutation(Mutation::A4NoBitReset);
        let mut m = RegisterMachine::new(cfg).unwrap();
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Write(Value::Int(9)));
        run_op(&mut m, &mut rec, ProcessId(0), 3, OpKind::Write(Value::Int(11)));
        // The second write re-installed reader 1's bit, so the audit blames it
        // for a value it never read.
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(0), 4, OpKind::Audit);
        if let OpResult::Audit(s) = audit {
            assert!(s.contains(ProcessId(1), Value::Int(11)));
        } else {
            panic!("audit expected");
        }
    }
}
