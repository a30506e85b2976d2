//! Single-reader register with multi-auditor audit, built on swap and
//! fetch&add. The shared word carries (value, sequence number, read bit);
//! the unbounded `pairs` array records, per sequence number, the value once
//! it is known to have been read.

use std::collections::BTreeMap;

use crate::history::{AuditSet, OpId, OpKind, OpResult, ProcessId, Value};
use crate::sim::{CellContent, CellKey, Memory, SlotContent, Word};

use super::codec::{ReaderBits, WordCodec, WordLayout};
use super::{empty_slot, slot, MachineError, RegisterConfig, StepCtx, StepOutcome};

enum Pc {
    ReadWord,
    ReadFetchAdd,
    ReadPairsWrite { value: Value, sn: u64 },
    WriteSwap(Value),
    WritePairs { value: Value, sn: u64 },
    AuditReadWord,
    AuditPairsWrite { value: Value, index: u64 },
    AuditScan { j: u64 },
}

pub(super) struct A5 {
    main: usize,
    codec: WordCodec,
    reader: ProcessId,
    // Reader locals.
    read_result: Value,
    // Writer locals.
    sn: u64,
    // Per-auditor locals; the result set persists across that auditor's
    // audits.
    audit_result: BTreeMap<ProcessId, AuditSet>,
    active: BTreeMap<ProcessId, (OpId, Pc)>,
}

impl A5 {
    pub fn new(config: &RegisterConfig, memory: &mut Memory) -> Self {
        let codec = WordCodec::new(1, WordLayout::ValueSnBits);
        let initial = codec.encode(&config.initial_value, 0, ReaderBits::zero(1));
        let main = memory.ensure(CellKey::Main, CellContent::Word(initial));
        A5 {
            main,
            codec,
            reader: config.reader_order()[0],
            read_result: Value::Bottom,
            sn: 0,
            audit_result: BTreeMap::new(),
            active: BTreeMap::new(),
        }
    }

    pub fn invoke(&mut self, p: ProcessId, op_id: OpId, kind: &OpKind) {
        let pc = match kind {
            OpKind::Write(v) => Pc::WriteSwap(*v),
            OpKind::Read => Pc::ReadWord,
            OpKind::Audit => Pc::AuditReadWord,
        };
        self.active.insert(p, (op_id, pc));
    }

    pub fn has_active(&self, p: ProcessId) -> bool {
        self.active.contains_key(&p)
    }

    fn word(&self, content: CellContent) -> Word {
        match content {
            CellContent::Word(w) => w,
            CellContent::Slot(_) => unreachable!("main cell is word-flavored"),
        }
    }

    fn pair_cell(&self, memory: &mut Memory, sn: u64) -> usize {
        memory.ensure(CellKey::Pair(sn), empty_slot())
    }

    pub fn step(&mut self, p: ProcessId, ctx: &mut StepCtx<'_>) -> Result<StepOutcome, MachineError> {
        let (op_id, pc) = self.active.remove(&p).ok_or(MachineError::NoPendingOp(p))?;
        match pc {
            Pc::ReadWord => {
                let w = self.word(ctx.memory.read(self.main, ctx.recorder, p, op_id));
                if !self.codec.bits(&w).get(0) {
                    self.active.insert(p, (op_id, Pc::ReadFetchAdd));
                    Ok(StepOutcome::Continue)
                } else {
                    Ok(StepOutcome::Responded(OpResult::Read(self.read_result)))
                }
            }
            Pc::ReadFetchAdd => {
                // The fetched word supplies both the value and the sequence
                // number naming the pairs entry to publish into.
                let fetched = ctx.memory.fetch_add(
                    self.main,
                    ctx.recorder,
                    p,
                    op_id,
                    &self.codec.bit_amount(0),
                )?;
                let value = self.codec.value(&fetched)?;
                let sn = self.codec.sn(&fetched)?;
                self.read_result = value;
                self.active.insert(p, (op_id, Pc::ReadPairsWrite { value, sn }));
                Ok(StepOutcome::Continue)
            }
            Pc::ReadPairsWrite { value, sn } => {
                let cell = self.pair_cell(ctx.memory, sn);
                ctx.memory.write(cell, ctx.recorder, p, op_id, slot(value));
                Ok(StepOutcome::Responded(OpResult::Read(self.read_result)))
            }
            Pc::WriteSwap(v) => {
                self.sn += 1;
                let word = self.codec.encode(&v, self.sn, ReaderBits::zero(1));
                if self.codec.exceeds_guard(&word) {
                    ctx.diagnostics.push(format!(
                        "word width {} exceeds the {}-bit guard",
                        word.bits(),
                        self.codec.width_guard
                    ));
                }
                let old = self.word(ctx.memory.swap(
                    self.main,
                    ctx.recorder,
                    p,
                    op_id,
                    CellContent::Word(word),
                ));
                if self.codec.bits(&old).get(0) {
                    let value = self.codec.value(&old)?;
                    let sn = self.codec.sn(&old)?;
                    self.active.insert(p, (op_id, Pc::WritePairs { value, sn }));
                    Ok(StepOutcome::Continue)
                } else {
                    Ok(StepOutcome::Responded(OpResult::Wrote))
                }
            }
            Pc::WritePairs { value, sn } => {
                let cell = self.pair_cell(ctx.memory, sn);
                ctx.memory.write(cell, ctx.recorder, p, op_id, slot(value));
                Ok(StepOutcome::Responded(OpResult::Wrote))
            }
            Pc::AuditReadWord => {
                let w = self.word(ctx.memory.read(self.main, ctx.recorder, p, op_id));
                let index = self.codec.sn(&w)?;
                if self.codec.bits(&w).get(0) {
                    let value = self.codec.value(&w)?;
                    self.active.insert(p, (op_id, Pc::AuditPairsWrite { value, index }));
                } else {
                    self.active.insert(p, (op_id, Pc::AuditScan { j: index }));
                }
                Ok(StepOutcome::Continue)
            }
            Pc::AuditPairsWrite { value, index } => {
                let cell = self.pair_cell(ctx.memory, index);
                ctx.memory.write(cell, ctx.recorder, p, op_id, slot(value));
                self.active.insert(p, (op_id, Pc::AuditScan { j: index }));
                Ok(StepOutcome::Continue)
            }
            Pc::AuditScan { j } => {
                let cell = self.pair_cell(ctx.memory, j);
                let content = ctx.memory.read(cell, ctx.recorder, p, op_id);
                if let CellContent::Slot(SlotContent::Value(v)) = content {
                    self.audit_result.entry(p).or_default().add(self.reader, v);
                }
                if j == 0 {
                    let out = self.audit_result.entry(p).or_default().clone();
                    Ok(StepOutcome::Responded(OpResult::Audit(out)))
                } else {
                    self.active.insert(p, (op_id, Pc::AuditScan { j: j - 1 }));
                    Ok(StepOutcome::Continue)
                }
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

    fn machine(initial: Value) -> RegisterMachine {
        RegisterMachine::new(RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A5,
            ProcessId(0),
            [ProcessId(1)],
            [ProcessId(0), ProcessId(2)],
            initial,
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

    #[test]
    fn first_read_publishes_into_pairs() {
        let mut m = machine(Value::Int(7));
        let mut rec = Recorder::new();
        let (r, steps) = run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Int(7)));
        assert_eq!(steps, 3);
        let pair0 = m
            .memory
            .cells()
            .iter()
            .find(|c| c.key == CellKey::Pair(0))
            .unwrap();
        assert_eq!(pair0.contents, slot(Value::Int(7)));
    }

    #[test]
    fn third_party_audit_sees_only_read_values() {
        let mut m = machine(Value::Int(7));
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Write(Value::Int(9)));
        // Value 9 was written but never read: the audit reports only (reader, 7).
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(2), 3, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(1), Value::Int(7)))
        );
    }

    #[test]
    fn audit_before_any_read_is_empty() {
        let mut m = machine(Value::Int(7));
        let mut rec = Recorder::new();
        let (audit, steps) = run_op(&mut m, &mut rec, ProcessId(2), 1, OpKind::Audit);
        assert_eq!(audit, OpResult::Audit(AuditSet::new()));
        // Word read plus the single pairs[0] scan.
        assert_eq!(steps, 2);
    }

    #[test]
    fn write_detects_unpublished_read_of_previous_value() {
        let mut m = machine(Value::Int(7));
        let mut rec = Recorder::new();
        // Drive the read only through its fetch&add, leaving the pairs write
        // pending, then let a write detect it from the swapped-out bit.
        m.invoke(ProcessId(1), OpId(1), &OpKind::Read).unwrap();
        assert_eq!(m.step(ProcessId(1), &mut rec).unwrap(), StepOutcome::Continue);
        assert_eq!(m.step(ProcessId(1), &mut rec).unwrap(), StepOutcome::Continue);
        let (_, steps) = run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Write(Value::Int(9)));
        assert_eq!(steps, 2);
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(2), 3, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(1), Value::Int(7)))
        );
    }

    #[test]
    fn bottom_initial_value_flows_through_pairs() {
        let mut m = machine(Value::Bottom);
        let mut rec = Recorder::new();
        let (r, _) = run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Bottom));
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(2), 2, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(1), Value::Bottom))
        );
    }

    #[test]
    fn audit_result_persists_per_auditor() {
        let mut m = machine(Value::Int(7));
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        let (first, _) = run_op(&mut m, &mut rec, ProcessId(2), 2, OpKind::Audit);
        run_op(&mut m, &mut rec, ProcessId(0), 3, OpKind::Write(Value::Int(9)));
        run_op(&mut m, &mut rec, ProcessId(1), 4, OpKind::Read);
        let (second, _) = run_op(&mut m, &mut rec, ProcessId(2), 5, OpKind::Audit);
        if let (OpResult::Audit(a), OpResult::Audit(b)) = (first, second) {
            assert!(b.0.is_superset(&a.0));
            assert!(b.contains(ProcessId(1), Value::Int(9)));
        } else {
            panic!("audits expected");
        }
    }
}
