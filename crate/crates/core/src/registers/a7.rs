//! Multi-reader register with multi-auditor *regular* audit from plain reads
//! and writes: every reader publishes its cumulative read log in a register
//! of its own, and audits collect all the logs.

use std::collections::BTreeMap;

use crate::history::{AuditSet, OpId, OpKind, OpResult, ProcessId, Value};
use crate::sim::{CellContent, CellKey, Memory, SlotContent};

use super::{slot, MachineError, Mutation, RegisterConfig, StepCtx, StepOutcome};

enum Pc {
    ReadValueReg,
    ReadPublishLog,
    WriteValueReg(Value),
    AuditScan { j: usize },
}

pub(super) struct A7 {
    value_reg: usize,
    readers: Vec<ProcessId>,
    mutation: Mutation,
    // Per-reader locals.
    read_log: BTreeMap<ProcessId, AuditSet>,
    read_result: BTreeMap<ProcessId, Value>,
    // Per-auditor locals.
    audit_result: BTreeMap<ProcessId, AuditSet>,
    active: BTreeMap<ProcessId, (OpId, Pc)>,
}

impl A7 {
    pub fn new(config: &RegisterConfig, memory: &mut Memory) -> Self {
        let value_reg = memory.ensure(CellKey::ValueReg, slot(config.initial_value));
        let readers = config.reader_order();
        for i in 0..readers.len() {
            memory.ensure(
                CellKey::AuditReg(i),
                CellContent::Slot(SlotContent::Log(AuditSet::new())),
            );
        }
        A7 {
            value_reg,
            readers,
            mutation: config.mutation,
            read_log: BTreeMap::new(),
            read_result: BTreeMap::new(),
            audit_result: BTreeMap::new(),
            active: BTreeMap::new(),
        }
    }

    fn reader_index(&self, p: ProcessId) -> usize {
        self.readers.iter().position(|&r| r == p).expect("role-checked")
    }

    pub fn invoke(&mut self, p: ProcessId, op_id: OpId, kind: &OpKind) {
        let pc = match kind {
            OpKind::Write(v) => Pc::WriteValueReg(*v),
            OpKind::Read => Pc::ReadValueReg,
            OpKind::Audit => Pc::AuditScan { j: 0 },
        };
        self.active.insert(p, (op_id, pc));
    }

    pub fn has_active(&self, p: ProcessId) -> bool {
        self.active.contains_key(&p)
    }

    pub fn step(&mut self, p: ProcessId, ctx: &mut StepCtx<'_>) -> Result<StepOutcome, MachineError> {
        let (op_id, pc) = self.active.remove(&p).ok_or(MachineError::NoPendingOp(p))?;
        match pc {
            Pc::ReadValueReg => {
                let content = ctx.memory.read(self.value_reg, ctx.recorder, p, op_id);
                let v = match content {
                    CellContent::Slot(SlotContent::Value(v)) => v,
                    _ => unreachable!("value register holds values"),
                };
                self.read_result.insert(p, v);
                self.read_log.entry(p).or_default().add(p, v);
                if self.mutation == Mutation::A7ReadSkipsLog {
                    return Ok(StepOutcome::Responded(OpResult::Read(v)));
                }
                self.active.insert(p, (op_id, Pc::ReadPublishLog));
                Ok(StepOutcome::Continue)
            }
            Pc::ReadPublishLog => {
                let i = self.reader_index(p);
                let cell = ctx.memory.ensure(
                    CellKey::AuditReg(i),
                    CellContent::Slot(SlotContent::Log(AuditSet::new())),
                );
                let log = self.read_log.entry(p).or_default().clone();
                ctx.memory.write(
                    cell,
                    ctx.recorder,
                    p,
                    op_id,
                    CellContent::Slot(SlotContent::Log(log)),
                );
                Ok(StepOutcome::Responded(OpResult::Read(self.read_result[&p])))
            }
            Pc::WriteValueReg(v) => {
                ctx.memory.write(self.value_reg, ctx.recorder, p, op_id, slot(v));
                Ok(StepOutcome::Responded(OpResult::Wrote))
            }
            Pc::AuditScan { j } => {
                let cell = ctx.memory.ensure(
                    CellKey::AuditReg(j),
                    CellContent::Slot(SlotContent::Log(AuditSet::new())),
                );
                let content = ctx.memory.read(cell, ctx.recorder, p, op_id);
                if let CellContent::Slot(SlotContent::Log(log)) = content {
                    self.audit_result.entry(p).or_default().union_with(&log);
                }
                if j + 1 == self.readers.len() {
                    let out = self.audit_result.entry(p).or_default().clone();
                    Ok(StepOutcome::Responded(OpResult::Audit(out)))
                } else {
                    self.active.insert(p, (op_id, Pc::AuditScan { j: j + 1 }));
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

    fn machine() -> RegisterMachine {
        RegisterMachine::new(RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A7,
            ProcessId(0),
            [ProcessId(1), ProcessId(2)],
            [ProcessId(0), ProcessId(3)],
            Value::Int(7),
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
    fn sequential_read_then_audit_reports_the_pair() {
        let mut m = machine();
        let mut rec = Recorder::new();
        let (r, steps) = run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Int(7)));
        assert_eq!(steps, 2);
        let (audit, steps) = run_op(&mut m, &mut rec, ProcessId(3), 2, OpKind::Audit);
        assert_eq!(
            audit,
            OpResult::Audit(AuditSet::singleton(ProcessId(1), Value::Int(7)))
        );
        // One log register per reader.
        assert_eq!(steps, 2);
    }

    #[test]
    fn audit_between_read_steps_may_miss_the_read() {
        let mut m = machine();
        let mut rec = Recorder::new();
        // The reader has read the value register but not yet published.
        m.invoke(ProcessId(1), OpId(1), &OpKind::Read).unwrap();
        assert_eq!(m.step(ProcessId(1), &mut rec).unwrap(), StepOutcome::Continue);
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(3), 2, OpKind::Audit);
        assert_eq!(audit, OpResult::Audit(AuditSet::new()));
        // The read still completes normally afterwards.
        assert_eq!(
            m.step(ProcessId(1), &mut rec).unwrap(),
            StepOutcome::Responded(OpResult::Read(Value::Int(7)))
        );
    }

    #[test]
    fn audit_with_no_reads_is_empty() {
        let mut m = machine();
        let mut rec = Recorder::new();
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(3), 1, OpKind::Audit);
        assert_eq!(audit, OpResult::Audit(AuditSet::new()));
    }

    #[test]
    fn logs_accumulate_across_values() {
        let mut m = machine();
        let mut rec = Recorder::new();
        run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        run_op(&mut m, &mut rec, ProcessId(0), 2, OpKind::Write(Value::Int(9)));
        run_op(&mut m, &mut rec, ProcessId(1), 3, OpKind::Read);
        run_op(&mut m, &mut rec, ProcessId(2), 4, OpKind::Read);
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(3), 5, OpKind::Audit);
        if let OpResult::Audit(s) = audit {
            assert!(s.contains(ProcessId(1), Value::Int(7)));
            assert!(s.contains(ProcessId(1), Value::Int(9)));
            assert!(s.contains(ProcessId(2), Value::Int(9)));
            assert!(!s.contains(ProcessId(2), Value::Int(7)));
        } else {
            panic!("audit expected");
        }
    }

    #[test]
    fn mutant_never_publishes() {
        let cfg = RegisterConfig::new(
            RegisterId(0),
            AlgorithmTag::A7,
            ProcessId(0),
            [ProcessId(1)],
            [ProcessId(0), ProcessId(2)],
            Value::Int(7),
        )
        .with_mutation(Mutation::A7ReadSkipsLog);
        let mut m = RegisterMachine::new(cfg).unwrap();
        let mut rec = Recorder::new();
        let (r, steps) = run_op(&mut m, &mut rec, ProcessId(1), 1, OpKind::Read);
        assert_eq!(r, OpResult::Read(Value::Int(7)));
        assert_eq!(steps, 1);
        let (audit, _) = run_op(&mut m, &mut rec, ProcessId(2), 2, OpKind::Audit);
        assert_eq!(audit, OpResult::Audit(AuditSet::new()));
    }
}
