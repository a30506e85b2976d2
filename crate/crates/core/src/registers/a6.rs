//! Multi-reader register with multi-auditor audit, built on compare&swap and
//! fetch&add. The writer retries its compare&swap after logging, into the
//! pairs matrix, every reader bit that appeared since its last install; the
//! compare&swap fails at most n times per write.

use std::collections::BTreeMap;

use crate::history::{AuditSet, OpId, OpKind, OpResult, ProcessId, Value};
use crate::sim::{CellContent, CellKey, Memory, SlotContent, Word};

use super::codec::{ReaderBits, WordCodec, WordLayout};
use super::{empty_slot, slot, MachineError, Mutation, RegisterConfig, StepCtx, StepOutcome};

enum Pc {
    ReadWord,
    ReadFetchAdd,
    WriteCas { v: Value },
    WriteRetryRead { v: Value },
    WriteRetryPairs { v: Value, positions: Vec<usize>, next: usize },
    AuditReadWord,
    AuditScan { word: Word, index: u64, j: usize, k: u64 },
}

pub(super) struct A6 {
    main: usize,
    codec: WordCodec,
    readers: Vec<ProcessId>,
    mutation: Mutation,
    // Per-reader locals.
    read_result: BTreeMap<ProcessId, Value>,
    // Writer locals.
    sn: u64,
    val: Value,
    bits: ReaderBits,
    cur_write_failures: u32,
    // Per-auditor locals.
    audit_result: BTreeMap<ProcessId, AuditSet>,
    active: BTreeMap<ProcessId, (OpId, Pc)>,
}

impl A6 {
    pub fn new(config: &RegisterConfig, memory: &mut Memory) -> Self {
        let readers = config.reader_order();
        let codec = WordCodec::new(readers.len(), WordLayout::ValueSnBits);
        let zero = ReaderBits::zero(readers.len());
        let initial = codec.encode(&config.initial_value, 0, zero);
        let main = memory.ensure(CellKey::Main, CellContent::Word(initial));
        A6 {
            main,
            codec,
            readers,
            mutation: config.mutation,
            read_result: BTreeMap::new(),
            sn: 0,
            val: config.initial_value,
            bits: zero,
            cur_write_failures: 0,
            audit_result: BTreeMap::new(),
            active: BTreeMap::new(),
        }
    }

    fn reader_index(&self, p: ProcessId) -> usize {
        self.readers.iter().position(|&r| r == p).expect("role-checked")
    }

    pub fn invoke(&mut self, p: ProcessId, op_id: OpId, kind: &OpKind) {
        let pc = match kind {
            OpKind::Write(v) => {
                // Local bookkeeping preceding the first primitive.
                self.sn += 1;
                self.cur_write_failures = 0;
                Pc::WriteCas { v: *v }
            }
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

    fn pair_cell(&self, memory: &mut Memory, reader: usize, k: u64) -> usize {
        memory.ensure(CellKey::PairAt { reader, k }, empty_slot())
    }

    fn finish_audit(&mut self, p: ProcessId, word: &Word) -> Result<StepOutcome, MachineError> {
        let value = self.codec.value(word)?;
        let bits = self.codec.bits(word);
        let result = self.audit_result.entry(p).or_default();
        for j in bits.set_positions() {
            result.add(self.readers[j], value);
        }
        Ok(StepOutcome::Responded(OpResult::Audit(result.clone())))
    }

    pub fn step(&mut self, p: ProcessId, ctx: &mut StepCtx<'_>) -> Result<StepOutcome, MachineError> {
        let (op_id, pc) = self.active.remove(&p).ok_or(MachineError::NoPendingOp(p))?;
        match pc {
            Pc::ReadWord => {
                let w = self.word(ctx.memory.read(self.main, ctx.recorder, p, op_id));
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
                    self.main,
                    ctx.recorder,
                    p,
                    op_id,
                    &self.codec.bit_amount(i),
                )?;
                let v = self.codec.value(&old)?;
                self.read_result.insert(p, v);
                Ok(StepOutcome::Responded(OpResult::Read(v)))
            }
            Pc::WriteCas { v } => {
                let expected = self.codec.encode(&self.val, self.sn - 1, self.bits);
                let zero = ReaderBits::zero(self.readers.len());
                let new = self.codec.encode(&v, self.sn, zero);
                if self.codec.exceeds_guard(&new) {
                    ctx.diagnostics.push(format!(
                        "word width {} exceeds the {}-bit guard",
                        new.bits(),
                        self.codec.width_guard
                    ));
                }
                let ok = ctx.memory.compare_and_swap(
                    self.main,
                    ctx.recorder,
                    p,
                    op_id,
                    CellContent::Word(expected),
                    CellContent::Word(new),
                );
                if ok {
                    self.bits = zero;
                    self.val = v;
                    ctx.cas_failure_log.push((op_id, self.cur_write_failures));
                    Ok(StepOutcome::Responded(OpResult::Wrote))
                } else {
                    self.cur_write_failures += 1;
                    self.active.insert(p, (op_id, Pc::WriteRetryRead { v }));
                    Ok(StepOutcome::Continue)
                }
            }
            Pc::WriteRetryRead { v } => {
                let w = self.word(ctx.memory.read(self.main, ctx.recorder, p, op_id));
                self.bits = self.codec.bits(&w);
                let positions: Vec<usize> = self.bits.set_positions().collect();
                if positions.is_empty() || self.mutation == Mutation::A6SkipPairsLogging {
                    self.active.insert(p, (op_id, Pc::WriteCas { v }));
                } else {
                    self.active
                        .insert(p, (op_id, Pc::WriteRetryPairs { v, positions, next: 0 }));
                }
                Ok(StepOutcome::Continue)
            }
            Pc::WriteRetryPairs { v, positions, next } => {
                let j = positions[next];
                let cell = self.pair_cell(ctx.memory, j, self.sn - 1);
                ctx.memory.write(cell, ctx.recorder, p, op_id, slot(self.val));
                let next = next + 1;
                if next < positions.len() {
                    self.active
                        .insert(p, (op_id, Pc::WriteRetryPairs { v, positions, next }));
                } else {
                    self.active.insert(p, (op_id, Pc::WriteCas { v }));
                }
                Ok(StepOutcome::Continue)
            }
            Pc::AuditReadWord => {
                let w = self.word(ctx.memory.read(self.main, ctx.recorder, p, op_id));
                let index = self.codec.sn(&w)?;
                if index == 0 || self.readers.is_empty() {
                    return self.finish_audit(p, &w);
                }
                self.active
                    .insert(p, (op_id, Pc::AuditScan { word: w, index, j: 0, k: 0 }));
                Ok(StepOutcome::Continue)
            }
            Pc::AuditScan { word, index, j, k } => {
                let cell = self.pair_cell(ctx.memory, j, k);
                let content = ctx.memory.read(cell, ctx.recorder, p, op_id);
                if let CellContent::Slot(SlotContent::Value(v)) = content {
                    self.audit_result.entry(p).or_default().add(self.readers[j], v);
                }
                let (mut j, mut k) = (j, k + 1);
                if k == index {
                    k = 0;
                    j += 1;
                }
                if j == self.readers.len() {
                    self.finish_audit(p, &word)
                } else {
                    self.active
                        .insert(p, (op_id, Pc::AuditScan { word, index, j, k }));
                    Ok(StepOutcome::Continue)
                }
            }
        }
    }
}
