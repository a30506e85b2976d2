//! Single-reader register with writer-only audit, built on swap.
//!
//! The shared slot holds the last written value, or the absence marker once
//! the reader has swapped it out. The writer learns of a read when its own
//! swap returns the marker.

use std::collections::BTreeMap;

use crate::history::{AuditSet, OpId, OpKind, OpResult, ProcessId, Value};
use crate::sim::{CellContent, CellKey, Memory, SlotContent};

use super::{empty_slot, slot, MachineError, Mutation, RegisterConfig, StepCtx, StepOutcome};

enum Pc {
    ReadSwap,
    WriteSwap(Value),
    AuditRead,
}

pub(super) struct A3 {
    cell: usize,
    reader: ProcessId,
    mutation: Mutation,
    // Reader locals.
    read_result: Value,
    // Writer/auditor locals.
    curr_val: Value,
    prev_val: Value,
    audit_result: AuditSet,
    active: BTreeMap<ProcessId, (OpId, Pc)>,
}

impl A3 {
    pub fn new(config: &RegisterConfig, memory: &mut Memory) -> Self {
        let cell = memory.ensure(CellKey::Main, slot(config.initial_value));
        A3 {
            cell,
            reader: config.reader_order()[0],
            mutation: config.mutation,
            read_result: Value::Bottom,
            curr_val: config.initial_value,
            prev_val: Value::Bottom,
            audit_result: AuditSet::new(),
            active: BTreeMap::new(),
        }
    }

    pub fn invoke(&mut self, p: ProcessId, op_id: OpId, kind: &OpKind) {
        let pc = match kind {
            OpKind::Write(v) => Pc::WriteSwap(*v),
            OpKind::Read => Pc::ReadSwap,
            OpKind::Audit => Pc::AuditRead,
        };
        self.active.insert(p, (op_id, pc));
    }

    pub fn has_active(&self, p: ProcessId) -> bool {
        self.active.contains_key(&p)
    }

    pub fn step(&mut self, p: ProcessId, ctx: &mut StepCtx<'_>) -> Result<StepOutcome, MachineError> {
        let (op_id, pc) = self.active.remove(&p).ok_or(MachineError::NoPendingOp(p))?;
        match pc {
            Pc::ReadSwap => {
                let old = ctx.memory.swap(self.cell, ctx.recorder, p, op_id, empty_slot());
                if let CellContent::Slot(SlotContent::Value(v)) = old {
                    self.read_result = v;
                }
                Ok(StepOutcome::Responded(OpResult::Read(self.read_result)))
            }
            Pc::WriteSwap(v) => {
                self.prev_val = self.curr_val;
                self.curr_val = v;
                let old = ctx.memory.swap(self.cell, ctx.recorder, p, op_id, slot(v));
                if old == empty_slot() {
                    self.audit_result.add(self.reader, self.prev_val);
                }
                Ok(StepOutcome::Responded(OpResult::Wrote))
            }
            Pc::AuditRead => {
                let cur = ctx.memory.read(self.cell, ctx.recorder, p, op_id);
                if self.mutation != Mutation::A3AuditIgnoresLiveRead && cur == empty_slot() {
                    self.audit_result.add(self.reader, self.curr_val);
                }
                Ok(StepOutcome::Responded(OpResult::Audit(self.audit_result.clone())))
            }
        }
    }
}
