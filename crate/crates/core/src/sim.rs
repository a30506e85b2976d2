//! Simulated shared-memory cells supporting read, write, swap, fetch&add and
//! compare&swap, each executed as one indivisible step with full trace
//! capture.
//!
//! Two cell flavors exist: *word* cells hold unbounded nonnegative integers
//! (the encoded value/sequence-number/reader-bit words) and *slot* cells hold
//! symbolic contents (plain values, absence markers, read logs). The
//! deterministic executor serializes all primitive applications, so no two
//! primitives ever run concurrently; primitive granularity is the atomicity
//! unit for the whole system.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::history::{AuditSet, Event, OpId, ProcessId, Value};

/// Unbounded word contents.
pub type Word = BigUint;

/// Contents of a slot-flavor cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotContent {
    /// Absence marker: a swapped-out slot (Algorithm 3) or a never-written
    /// pairs entry (Algorithms 5 and 6). Distinct from `Value::Bottom`, which
    /// is a legitimate register value.
    Empty,
    Value(Value),
    /// A reader's log snapshot (Algorithm 7).
    Log(AuditSet),
}

impl fmt::Display for SlotContent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotContent::Empty => write!(f, "#empty"),
            SlotContent::Value(v) => write!(f, "{v}"),
            SlotContent::Log(s) => write!(f, "log{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellContent {
    Word(Word),
    Slot(SlotContent),
}

impl fmt::Display for CellContent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellContent::Word(w) => write!(f, "{w}"),
            CellContent::Slot(s) => write!(f, "{s}"),
        }
    }
}

/// Stable, human-readable identity of a cell within one register instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellKey {
    /// The main shared word or slot (`R`).
    Main,
    /// `pairs[k]` of the single-reader multi-auditor construction.
    Pair(u64),
    /// `pairs[reader][k]` of the multi-reader multi-auditor construction.
    PairAt { reader: usize, k: u64 },
    /// `R_v` of the read/write-only construction.
    ValueReg,
    /// `R_a[reader]` of the read/write-only construction.
    AuditReg(usize),
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKey::Main => write!(f, "R"),
            CellKey::Pair(k) => write!(f, "pairs[{k}]"),
            CellKey::PairAt { reader, k } => write!(f, "pairs[{reader}][{k}]"),
            CellKey::ValueReg => write!(f, "Rv"),
            CellKey::AuditReg(i) => write!(f, "Ra[{i}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimKind {
    Read,
    Write,
    Swap,
    FetchAdd,
    CompareAndSwap,
}

impl PrimKind {
    pub fn label(&self) -> &'static str {
        match self {
            PrimKind::Read => "read",
            PrimKind::Write => "write",
            PrimKind::Swap => "swap",
            PrimKind::FetchAdd => "fetch&add",
            PrimKind::CompareAndSwap => "compare&swap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrimReturn {
    Content(CellContent),
    Bool(bool),
    Unit,
}

/// One applied primitive, as captured in a cell trace.
#[derive(Debug, Clone)]
pub struct PrimitiveRecord {
    pub seq: u64,
    pub process: ProcessId,
    pub op_id: OpId,
    pub kind: PrimKind,
    pub args: Vec<CellContent>,
    pub ret: PrimReturn,
}

/// A simulated shared cell with an append-only primitive trace.
#[derive(Debug, Clone)]
pub struct SimCell {
    pub key: CellKey,
    pub initial: CellContent,
    pub contents: CellContent,
    pub trace: Vec<PrimitiveRecord>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("fetch&add applied to a slot-flavor cell {0}")]
    FetchAddOnSlot(String),
    #[error("trace replay diverged at step {seq} of cell {cell}: {msg}")]
    TraceDiverged { cell: String, seq: u64, msg: String },
}

/// Monotone event/step sequencer plus the event sink for one run. Events and
/// primitive records draw from the same counter, so the merged dump is
/// totally ordered.
#[derive(Debug, Default)]
pub struct Recorder {
    next: u64,
    pub events: Vec<Event>,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder {
            next: 1,
            events: Vec::new(),
        }
    }

    pub fn fresh_seq(&mut self) -> u64 {
        let s = self.next;
        self.next += 1;
        s
    }

    pub fn record_event(&mut self, ev: Event) {
        self.events.push(ev);
    }
}

/// The cells of one register instance.
#[derive(Debug, Default)]
pub struct Memory {
    cells: Vec<SimCell>,
    index: BTreeMap<CellKey, usize>,
}

impl Memory {
    pub fn new() -> Self {
        Memory::default()
    }

    /// Get the cell for `key`, creating it with `init` on first touch.
    /// Unbounded arrays (`pairs`) grow on demand this way.
    pub fn ensure(&mut self, key: CellKey, init: CellContent) -> usize {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.cells.len();
        self.cells.push(SimCell {
            key,
            initial: init.clone(),
            contents: init,
            trace: Vec::new(),
        });
        self.index.insert(key, i);
        i
    }

    pub fn cells(&self) -> &[SimCell] {
        &self.cells
    }

    fn record(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
        kind: PrimKind,
        args: Vec<CellContent>,
        ret: PrimReturn,
    ) {
        let seq = rec.fresh_seq();
        self.cells[idx].trace.push(PrimitiveRecord {
            seq,
            process,
            op_id,
            kind,
            args,
            ret,
        });
    }

    pub fn read(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
    ) -> CellContent {
        let out = self.cells[idx].contents.clone();
        self.record(
            idx,
            rec,
            process,
            op_id,
            PrimKind::Read,
            vec![],
            PrimReturn::Content(out.clone()),
        );
        out
    }

    pub fn write(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
        v: CellContent,
    ) {
        self.cells[idx].contents = v.clone();
        self.record(
            idx,
            rec,
            process,
            op_id,
            PrimKind::Write,
            vec![v],
            PrimReturn::Unit,
        );
    }

    pub fn swap(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
        v: CellContent,
    ) -> CellContent {
        let old = std::mem::replace(&mut self.cells[idx].contents, v.clone());
        self.record(
            idx,
            rec,
            process,
            op_id,
            PrimKind::Swap,
            vec![v],
            PrimReturn::Content(old.clone()),
        );
        old
    }

    pub fn fetch_add(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
        amount: &Word,
    ) -> Result<Word, SimError> {
        let old = match &self.cells[idx].contents {
            CellContent::Word(w) => w.clone(),
            CellContent::Slot(_) => {
                return Err(SimError::FetchAddOnSlot(self.cells[idx].key.to_string()))
            }
        };
        self.cells[idx].contents = CellContent::Word(&old + amount);
        self.record(
            idx,
            rec,
            process,
            op_id,
            PrimKind::FetchAdd,
            vec![CellContent::Word(amount.clone())],
            PrimReturn::Content(CellContent::Word(old.clone())),
        );
        Ok(old)
    }

    pub fn compare_and_swap(
        &mut self,
        idx: usize,
        rec: &mut Recorder,
        process: ProcessId,
        op_id: OpId,
        expected: CellContent,
        new: CellContent,
    ) -> bool {
        let ok = self.cells[idx].contents == expected;
        if ok {
            self.cells[idx].contents = new.clone();
        }
        self.record(
            idx,
            rec,
            process,
            op_id,
            PrimKind::CompareAndSwap,
            vec![expected, new],
            PrimReturn::Bool(ok),
        );
        ok
    }
}

/// Replay a cell's trace from its initial contents and check that every
/// recorded return value is reproduced (trace soundness).
pub fn verify_cell_trace(cell: &SimCell) -> Result<(), SimError> {
    let mut cur = cell.initial.clone();
    let cell_name = cell.key.to_string();
    let diverge = |seq: u64, msg: String| SimError::TraceDiverged {
        cell: cell_name.clone(),
        seq,
        msg,
    };
    for r in &cell.trace {
        match r.kind {
            PrimKind::Read => {
                if r.ret != PrimReturn::Content(cur.clone()) {
                    return Err(diverge(r.seq, "read returned stale contents".into()));
                }
            }
            PrimKind::Write => {
                cur = r.args[0].clone();
                if r.ret != PrimReturn::Unit {
                    return Err(diverge(r.seq, "write returned a value".into()));
                }
            }
            PrimKind::Swap => {
                if r.ret != PrimReturn::Content(cur.clone()) {
                    return Err(diverge(r.seq, "swap returned stale contents".into()));
                }
                cur = r.args[0].clone();
            }
            PrimKind::FetchAdd => {
                let old = match (&cur, &r.args[0]) {
                    (CellContent::Word(w), CellContent::Word(_)) => w.clone(),
                    _ => return Err(diverge(r.seq, "fetch&add on non-word".into())),
                };
                if r.ret != PrimReturn::Content(CellContent::Word(old.clone())) {
                    return Err(diverge(r.seq, "fetch&add returned stale contents".into()));
                }
                if let (CellContent::Word(w), CellContent::Word(a)) = (&cur, &r.args[0]) {
                    cur = CellContent::Word(w + a);
                }
            }
            PrimKind::CompareAndSwap => {
                let ok = cur == r.args[0];
                if r.ret != PrimReturn::Bool(ok) {
                    return Err(diverge(r.seq, "compare&swap outcome mismatch".into()));
                }
                if ok {
                    cur = r.args[1].clone();
                }
            }
        }
    }
    if cur != cell.contents {
        return Err(diverge(
            u64::MAX,
            "final contents differ from replayed contents".into(),
        ));
    }
    Ok(())
}

/// Render primitive records of all cells, merged by step sequence, in the
/// shared line format with a `prim` marker.
pub fn trace_lines(object: crate::history::RegisterId, memory: &Memory) -> String {
    let mut recs: Vec<(&SimCell, &PrimitiveRecord)> = Vec::new();
    for cell in memory.cells() {
        for r in &cell.trace {
            recs.push((cell, r));
        }
    }
    recs.sort_by_key(|(_, r)| r.seq);
    let mut out = String::new();
    for (cell, r) in recs {
        let args: Vec<String> = r.args.iter().map(|a| a.to_string()).collect();
        let args = if args.is_empty() {
            "-".to_string()
        } else {
            args.join(",")
        };
        let ret = match &r.ret {
            PrimReturn::Content(c) => c.to_string(),
            PrimReturn::Bool(b) => b.to_string(),
            PrimReturn::Unit => "ok".to_string(),
        };
        out.push_str(&format!(
            "prim {} {} r{} {} {} {} {} {}\n",
            r.seq,
            r.process.0,
            object.0,
            cell.key,
            r.op_id.0,
            r.kind.label(),
            args,
            ret
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn word(n: u64) -> CellContent {
        CellContent::Word(Word::from(n))
    }

    fn setup() -> (Memory, Recorder) {
        (Memory::new(), Recorder::new())
    }

    #[test]
    fn read_returns_contents_unchanged() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(5));
        assert_eq!(m.read(c, &mut rec, ProcessId(0), OpId(1)), word(5));
        assert_eq!(m.read(c, &mut rec, ProcessId(0), OpId(1)), word(5));
        assert_eq!(m.cells()[c].trace.len(), 2);
    }

    #[test]
    fn write_then_read_and_last_write_wins() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(5));
        m.write(c, &mut rec, ProcessId(0), OpId(1), word(9));
        assert_eq!(m.cells()[c].contents, word(9));
        m.write(c, &mut rec, ProcessId(0), OpId(1), word(4));
        assert_eq!(m.cells()[c].contents, word(4));
    }

    #[test]
    fn bottom_can_be_written_to_slot_cells() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::ValueReg, CellContent::Slot(SlotContent::Value(Value::Int(5))));
        m.write(
            c,
            &mut rec,
            ProcessId(0),
            OpId(1),
            CellContent::Slot(SlotContent::Value(Value::Bottom)),
        );
        assert_eq!(
            m.cells()[c].contents,
            CellContent::Slot(SlotContent::Value(Value::Bottom))
        );
    }

    #[test]
    fn swap_returns_previous_and_double_swap_restores() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(5));
        let old = m.swap(c, &mut rec, ProcessId(0), OpId(1), word(7));
        assert_eq!(old, word(5));
        assert_eq!(m.cells()[c].contents, word(7));
        let back = m.swap(c, &mut rec, ProcessId(0), OpId(1), old);
        assert_eq!(back, word(7));
        assert_eq!(m.cells()[c].contents, word(5));
    }

    #[test]
    fn swap_on_fresh_slot_returns_initial() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, CellContent::Slot(SlotContent::Value(Value::Bottom)));
        let old = m.swap(
            c,
            &mut rec,
            ProcessId(1),
            OpId(1),
            CellContent::Slot(SlotContent::Value(Value::Int(1))),
        );
        assert_eq!(old, CellContent::Slot(SlotContent::Value(Value::Bottom)));
    }

    #[test]
    fn fetch_add_arithmetic() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(4));
        let old = m
            .fetch_add(c, &mut rec, ProcessId(0), OpId(1), &Word::from(1u32))
            .unwrap();
        assert_eq!(old.to_u64().unwrap(), 4);
        assert_eq!(m.cells()[c].contents, word(5));

        // 28 = 7 * 2^2 for two reader bits; adding 2^0 sets bit 0.
        let c2 = m.ensure(CellKey::Pair(0), word(28));
        let old = m
            .fetch_add(c2, &mut rec, ProcessId(1), OpId(2), &Word::from(1u32))
            .unwrap();
        assert_eq!(old.to_u64().unwrap(), 28);
        if let CellContent::Word(w) = &m.cells()[c2].contents {
            assert_eq!(w.to_u64().unwrap(), 29);
            assert!(w.bit(0));
        } else {
            panic!("word cell expected");
        }

        // fetch&add(0) is the identity on contents.
        let before = m.cells()[c].contents.clone();
        m.fetch_add(c, &mut rec, ProcessId(0), OpId(3), &Word::from(0u32))
            .unwrap();
        assert_eq!(m.cells()[c].contents, before);
    }

    #[test]
    fn fetch_add_on_slot_cell_is_a_type_error() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, CellContent::Slot(SlotContent::Empty));
        let e = m
            .fetch_add(c, &mut rec, ProcessId(0), OpId(1), &Word::from(1u32))
            .unwrap_err();
        assert!(matches!(e, SimError::FetchAddOnSlot(_)));
    }

    #[test]
    fn compare_and_swap_cases() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(4));
        assert!(m.compare_and_swap(c, &mut rec, ProcessId(0), OpId(1), word(4), word(9)));
        assert_eq!(m.cells()[c].contents, word(9));
        assert!(!m.compare_and_swap(c, &mut rec, ProcessId(0), OpId(1), word(5), word(1)));
        assert_eq!(m.cells()[c].contents, word(9));
        // cas(x, x) succeeds and leaves contents unchanged.
        assert!(m.compare_and_swap(c, &mut rec, ProcessId(0), OpId(1), word(9), word(9)));
        assert_eq!(m.cells()[c].contents, word(9));
    }

    #[test]
    fn traces_replay_soundly() {
        let (mut m, mut rec) = setup();
        let c = m.ensure(CellKey::Main, word(0));
        m.write(c, &mut rec, ProcessId(0), OpId(1), word(3));
        m.swap(c, &mut rec, ProcessId(1), OpId(2), word(7));
        m.fetch_add(c, &mut rec, ProcessId(0), OpId(3), &Word::from(2u32))
            .unwrap();
        m.compare_and_swap(c, &mut rec, ProcessId(0), OpId(4), word(9), word(11));
        m.read(c, &mut rec, ProcessId(1), OpId(5));
        verify_cell_trace(&m.cells()[c]).unwrap();
    }
}
