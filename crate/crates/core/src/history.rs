//! Events, operations, histories, real-time precedence, and the completion
//! construction shared by both audit checkers.
//!
//! A history is a flat sequence of invocation/response events totally ordered
//! by `seq`. Completions turn a history with pending operations into the set
//! of histories obtained by discarding or responding to each pending
//! invocation; pending audits are always discarded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub mod format;

/// Identifier of a logical process, stable across a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Identifier of a high-level operation, assigned in invocation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId(pub u32);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

/// Identifier of a register (object) within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RegisterId(pub u32);

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A register value: an ordered token with a distinguished bottom element.
///
/// Bottom is a legitimate *initial* value of a register but is never written.
/// The derived ordering places `Bottom` below every integer token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bottom,
    Int(u64),
}

impl Value {
    pub fn is_bottom(&self) -> bool {
        matches!(self, Value::Bottom)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bottom => write!(f, "{}", format::BOTTOM_TOKEN),
            Value::Int(v) => write!(f, "{v}"),
        }
    }
}

/// The set of (reader, value) pairs returned by an audit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct AuditSet(pub BTreeSet<(ProcessId, Value)>);

impl AuditSet {
    pub fn new() -> Self {
        AuditSet(BTreeSet::new())
    }

    pub fn singleton(p: ProcessId, v: Value) -> Self {
        let mut s = BTreeSet::new();
        s.insert((p, v));
        AuditSet(s)
    }

    pub fn add(&mut self, p: ProcessId, v: Value) {
        self.0.insert((p, v));
    }

    pub fn union_with(&mut self, other: &AuditSet) {
        for pair in &other.0 {
            self.0.insert(*pair);
        }
    }

    pub fn contains(&self, p: ProcessId, v: Value) -> bool {
        self.0.contains(&(p, v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ProcessId, Value)> {
        self.0.iter()
    }
}

impl fmt::Display for AuditSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (p, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", p.0, v)?;
        }
        write!(f, "}}")
    }
}

/// What a high-level operation does.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OpKind {
    Write(Value),
    Read,
    Audit,
}

impl OpKind {
    pub fn label(&self) -> &'static str {
        match self {
            OpKind::Write(_) => "write",
            OpKind::Read => "read",
            OpKind::Audit => "audit",
        }
    }
}

/// The value carried by a response event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OpResult {
    Wrote,
    Read(Value),
    Audit(AuditSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Invoke,
    Respond,
}

/// One invocation or response record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub process: ProcessId,
    pub object: RegisterId,
    pub op_id: OpId,
    pub phase: Phase,
    pub kind: OpKind,
    /// Present exactly on response events.
    pub result: Option<OpResult>,
}

/// Writer/reader/auditor assignment for one register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleSet {
    pub writer: ProcessId,
    pub readers: BTreeSet<ProcessId>,
    pub auditors: BTreeSet<ProcessId>,
}

/// Per-object metadata carried alongside the event sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInfo {
    pub initial: Value,
    pub roles: RoleSet,
}

/// A recorded concurrent history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    /// Events in ascending `seq` order.
    pub events: Vec<Event>,
    pub objects: BTreeMap<RegisterId, ObjectInfo>,
}

/// Flattened view of one operation of a history.
#[derive(Debug, Clone)]
pub struct OpView {
    pub op_id: OpId,
    pub process: ProcessId,
    pub object: RegisterId,
    pub kind: OpKind,
    pub invoke_seq: u64,
    pub respond_seq: Option<u64>,
    pub result: Option<OpResult>,
}

impl OpView {
    pub fn is_complete(&self) -> bool {
        self.respond_seq.is_some()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("unknown operation {0}")]
    UnknownOp(OpId),
    #[error("event {seq}: response for {op_id} without a matching invocation")]
    ResponseWithoutInvoke { seq: u64, op_id: OpId },
    #[error("event {seq}: duplicate {phase:?} for {op_id}")]
    DuplicatePhase { seq: u64, op_id: OpId, phase: Phase },
    #[error("event {seq}: process {process} has two operations pending at once")]
    OverlappingOps { seq: u64, process: ProcessId },
    #[error("event {seq}: global sequence numbers are not strictly increasing")]
    NonMonotoneSeq { seq: u64 },
    #[error("event {seq}: response missing a result")]
    MissingResult { seq: u64 },
    #[error("event {seq}: object {object} not declared")]
    UndeclaredObject { seq: u64, object: RegisterId },
    #[error("event {seq}: operation {op_id} changed process/object/kind between phases")]
    PhaseMismatch { seq: u64, op_id: OpId },
}

impl History {
    pub fn new(objects: BTreeMap<RegisterId, ObjectInfo>) -> Self {
        History {
            events: Vec::new(),
            objects,
        }
    }

    /// Structural well-formedness: matched invoke/respond per op_id,
    /// per-process sequentiality, strictly increasing sequence numbers.
    pub fn validate(&self) -> Result<(), HistoryError> {
        let mut open: BTreeMap<OpId, &Event> = BTreeMap::new();
        let mut closed: BTreeSet<OpId> = BTreeSet::new();
        let mut busy: BTreeMap<ProcessId, OpId> = BTreeMap::new();
        let mut last_seq: Option<u64> = None;
        for ev in &self.events {
            if let Some(prev) = last_seq {
                if ev.seq <= prev {
                    return Err(HistoryError::NonMonotoneSeq { seq: ev.seq });
                }
            }
            last_seq = Some(ev.seq);
            if !self.objects.contains_key(&ev.object) {
                return Err(HistoryError::UndeclaredObject {
                    seq: ev.seq,
                    object: ev.object,
                });
            }
            match ev.phase {
                Phase::Invoke => {
                    if open.contains_key(&ev.op_id) || closed.contains(&ev.op_id) {
                        return Err(HistoryError::DuplicatePhase {
                            seq: ev.seq,
                            op_id: ev.op_id,
                            phase: Phase::Invoke,
                        });
                    }
                    if busy.contains_key(&ev.process) {
                        return Err(HistoryError::OverlappingOps {
                            seq: ev.seq,
                            process: ev.process,
                        });
                    }
                    busy.insert(ev.process, ev.op_id);
                    open.insert(ev.op_id, ev);
                }
                Phase::Respond => {
                    let inv = open.remove(&ev.op_id).ok_or({
                        HistoryError::ResponseWithoutInvoke {
                            seq: ev.seq,
                            op_id: ev.op_id,
                        }
                    })?;
                    if inv.process != ev.process || inv.object != ev.object || inv.kind != ev.kind
                    {
                        return Err(HistoryError::PhaseMismatch {
                            seq: ev.seq,
                            op_id: ev.op_id,
                        });
                    }
                    if ev.result.is_none() {
                        return Err(HistoryError::MissingResult { seq: ev.seq });
                    }
                    busy.remove(&ev.process);
                    closed.insert(ev.op_id);
                }
            }
        }
        Ok(())
    }

    /// All operations, keyed by op id, in invocation order.
    pub fn ops(&self) -> Vec<OpView> {
        let mut views: BTreeMap<OpId, OpView> = BTreeMap::new();
        for ev in &self.events {
            match ev.phase {
                Phase::Invoke => {
                    views.insert(
                        ev.op_id,
                        OpView {
                            op_id: ev.op_id,
                            process: ev.process,
                            object: ev.object,
                            kind: ev.kind.clone(),
                            invoke_seq: ev.seq,
                            respond_seq: None,
                            result: None,
                        },
                    );
                }
                Phase::Respond => {
                    if let Some(v) = views.get_mut(&ev.op_id) {
                        v.respond_seq = Some(ev.seq);
                        v.result = ev.result.clone();
                    }
                }
            }
        }
        let mut out: Vec<OpView> = views.into_values().collect();
        out.sort_by_key(|v| v.invoke_seq);
        out
    }

    pub fn op(&self, op_id: OpId) -> Result<OpView, HistoryError> {
        self.ops()
            .into_iter()
            .find(|v| v.op_id == op_id)
            .ok_or(HistoryError::UnknownOp(op_id))
    }

    /// True iff both phases of `op` appear in the history.
    pub fn is_complete(&self, op_id: OpId) -> Result<bool, HistoryError> {
        Ok(self.op(op_id)?.is_complete())
    }

    /// Real-time precedence: `a` precedes `b` iff `a`'s response appears
    /// before `b`'s invocation. A pending operation precedes nothing.
    pub fn precedes(&self, a: OpId, b: OpId) -> Result<bool, HistoryError> {
        let a = self.op(a)?;
        let b = self.op(b)?;
        Ok(match a.respond_seq {
            Some(resp) => resp < b.invoke_seq,
            None => false,
        })
    }

    /// Values written (by complete or pending writes) to `object`.
    pub fn written_values(&self, object: RegisterId) -> Vec<Value> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for ev in &self.events {
            if ev.phase == Phase::Invoke && ev.object == object {
                if let OpKind::Write(v) = ev.kind {
                    if seen.insert(v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// Candidate response values for a pending read of `object`: the initial
    /// value plus every value written in the history. Any other value could
    /// never satisfy the register-semantics condition, so the candidate set
    /// is pruned to these.
    pub fn read_candidates(&self, object: RegisterId) -> Vec<Value> {
        let mut out = Vec::new();
        if let Some(info) = self.objects.get(&object) {
            out.push(info.initial);
        }
        for v in self.written_values(object) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    fn pending_ops(&self) -> Vec<OpView> {
        self.ops().into_iter().filter(|o| !o.is_complete()).collect()
    }

    /// The completion construction: every history obtained by, for each
    /// pending operation, either discarding it or appending a response.
    /// Pending reads may respond with any candidate value, pending writes
    /// respond with unit, and pending audits are always discarded.
    pub fn completions(&self) -> Vec<History> {
        let pending = self.pending_ops();
        // Per-pending choice lists; `None` means discard.
        let mut choices: Vec<(OpId, Vec<Option<OpResult>>)> = Vec::new();
        for op in &pending {
            let mut opts: Vec<Option<OpResult>> = vec![None];
            match &op.kind {
                OpKind::Write(_) => opts.push(Some(OpResult::Wrote)),
                OpKind::Read => {
                    for v in self.read_candidates(op.object) {
                        opts.push(Some(OpResult::Read(v)));
                    }
                }
                // We never complete a pending audit.
                OpKind::Audit => {}
            }
            choices.push((op.op_id, opts));
        }

        let mut out = Vec::new();
        let mut picks = vec![0usize; choices.len()];
        loop {
            let assignment: Vec<(OpId, Option<&OpResult>)> = choices
                .iter()
                .zip(&picks)
                .map(|((id, opts), &i)| (*id, opts[i].as_ref()))
                .collect();
            out.push(self.apply_completion(&assignment));
            // Odometer over the choice lists.
            let mut pos = 0;
            loop {
                if pos == picks.len() {
                    return out;
                }
                picks[pos] += 1;
                if picks[pos] < choices[pos].1.len() {
                    break;
                }
                picks[pos] = 0;
                pos += 1;
            }
        }
    }

    fn apply_completion(&self, assignment: &[(OpId, Option<&OpResult>)]) -> History {
        let discard: BTreeSet<OpId> = assignment
            .iter()
            .filter(|(_, r)| r.is_none())
            .map(|(id, _)| *id)
            .collect();
        let mut events: Vec<Event> = self
            .events
            .iter()
            .filter(|ev| !discard.contains(&ev.op_id))
            .cloned()
            .collect();
        let mut next_seq = self.events.last().map(|e| e.seq + 1).unwrap_or(1);
        // Appended responses go after every existing event, in op-id order.
        let mut to_append: Vec<(OpId, &OpResult)> = assignment
            .iter()
            .filter_map(|(id, r)| r.map(|r| (*id, r)))
            .collect();
        to_append.sort_by_key(|(id, _)| *id);
        for (op_id, result) in to_append {
            let inv = events
                .iter()
                .find(|e| e.op_id == op_id && e.phase == Phase::Invoke)
                .expect("pending op retains its invocation")
                .clone();
            events.push(Event {
                seq: next_seq,
                process: inv.process,
                object: inv.object,
                op_id,
                phase: Phase::Respond,
                kind: inv.kind.clone(),
                result: Some(result.clone()),
            });
            next_seq += 1;
        }
        History {
            events,
            objects: self.objects.clone(),
        }
    }

    /// Restrict the history to the events of one object.
    pub fn restrict_to(&self, object: RegisterId) -> History {
        let mut objects = BTreeMap::new();
        if let Some(info) = self.objects.get(&object) {
            objects.insert(object, info.clone());
        }
        History {
            events: self
                .events
                .iter()
                .filter(|e| e.object == object)
                .cloned()
                .collect(),
            objects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> RoleSet {
        RoleSet {
            writer: ProcessId(0),
            readers: [ProcessId(1)].into(),
            auditors: [ProcessId(0)].into(),
        }
    }

    fn base() -> History {
        let mut objects = BTreeMap::new();
        objects.insert(
            RegisterId(0),
            ObjectInfo {
                initial: Value::Bottom,
                roles: roles(),
            },
        );
        History::new(objects)
    }

    fn ev(
        seq: u64,
        process: u32,
        op: u32,
        phase: Phase,
        kind: OpKind,
        result: Option<OpResult>,
    ) -> Event {
        Event {
            seq,
            process: ProcessId(process),
            object: RegisterId(0),
            op_id: OpId(op),
            phase,
            kind,
            result,
        }
    }

    #[test]
    fn complete_and_pending() {
        let mut h = base();
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h.events.push(ev(2, 0, 1, Phase::Respond, OpKind::Write(Value::Int(3)), Some(OpResult::Wrote)));
        h.events.push(ev(3, 1, 2, Phase::Invoke, OpKind::Read, None));
        h.validate().unwrap();
        assert!(h.is_complete(OpId(1)).unwrap());
        assert!(!h.is_complete(OpId(2)).unwrap());
        assert_eq!(h.is_complete(OpId(9)), Err(HistoryError::UnknownOp(OpId(9))));
    }

    #[test]
    fn empty_history_unknown_op_is_input_error() {
        let h = base();
        assert_eq!(h.is_complete(OpId(1)), Err(HistoryError::UnknownOp(OpId(1))));
    }

    #[test]
    fn precedence_cases() {
        let mut h = base();
        // a responds at 3, b invokes at 5 -> a precedes b.
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h.events.push(ev(3, 0, 1, Phase::Respond, OpKind::Write(Value::Int(3)), Some(OpResult::Wrote)));
        h.events.push(ev(5, 1, 2, Phase::Invoke, OpKind::Read, None));
        h.events.push(ev(6, 1, 2, Phase::Respond, OpKind::Read, Some(OpResult::Read(Value::Int(3)))));
        assert!(h.precedes(OpId(1), OpId(2)).unwrap());
        assert!(!h.precedes(OpId(2), OpId(1)).unwrap());

        // Overlapping ops precede in neither direction.
        let mut h2 = base();
        h2.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h2.events.push(ev(2, 1, 2, Phase::Invoke, OpKind::Read, None));
        h2.events.push(ev(3, 0, 1, Phase::Respond, OpKind::Write(Value::Int(3)), Some(OpResult::Wrote)));
        h2.events.push(ev(4, 1, 2, Phase::Respond, OpKind::Read, Some(OpResult::Read(Value::Int(3)))));
        assert!(!h2.precedes(OpId(1), OpId(2)).unwrap());
        assert!(!h2.precedes(OpId(2), OpId(1)).unwrap());

        // A pending op precedes nothing.
        let mut h3 = base();
        h3.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h3.events.push(ev(2, 1, 2, Phase::Invoke, OpKind::Read, None));
        h3.events.push(ev(3, 1, 2, Phase::Respond, OpKind::Read, Some(OpResult::Read(Value::Bottom))));
        assert!(!h3.precedes(OpId(1), OpId(2)).unwrap());
    }

    #[test]
    fn completions_identity_when_no_pending() {
        let mut h = base();
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h.events.push(ev(2, 0, 1, Phase::Respond, OpKind::Write(Value::Int(3)), Some(OpResult::Wrote)));
        let cs = h.completions();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0], h);
    }

    #[test]
    fn completions_of_pending_read_enumerate_candidates() {
        // Two written values v1, v2 plus initial bottom: discard or respond
        // with one of three candidates -> 4 completions.
        let mut h = base();
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(1)), None));
        h.events.push(ev(2, 0, 1, Phase::Respond, OpKind::Write(Value::Int(1)), Some(OpResult::Wrote)));
        h.events.push(ev(3, 0, 2, Phase::Invoke, OpKind::Write(Value::Int(2)), None));
        h.events.push(ev(4, 0, 2, Phase::Respond, OpKind::Write(Value::Int(2)), Some(OpResult::Wrote)));
        h.events.push(ev(5, 1, 3, Phase::Invoke, OpKind::Read, None));
        let cs = h.completions();
        assert_eq!(cs.len(), 4);
        for c in &cs {
            c.validate().unwrap();
            assert!(c.ops().iter().all(|o| o.is_complete()));
        }
        // One completion discards the read entirely.
        assert!(cs.iter().any(|c| c.ops().len() == 2));
        // The responding completions cover exactly {bottom, 1, 2}.
        let responded: BTreeSet<Value> = cs
            .iter()
            .filter_map(|c| {
                c.ops().iter().find(|o| o.op_id == OpId(3)).and_then(|o| match &o.result {
                    Some(OpResult::Read(v)) => Some(*v),
                    _ => None,
                })
            })
            .collect();
        assert_eq!(
            responded,
            [Value::Bottom, Value::Int(1), Value::Int(2)].into()
        );
    }

    #[test]
    fn pending_audit_is_always_discarded() {
        let mut h = base();
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Audit, None));
        let cs = h.completions();
        assert_eq!(cs.len(), 1);
        assert!(cs[0].events.is_empty());
    }

    #[test]
    fn completions_always_yield_at_least_one() {
        let h = base();
        assert_eq!(h.completions().len(), 1);
    }

    #[test]
    fn validate_rejects_overlap_within_process() {
        let mut h = base();
        h.events.push(ev(1, 0, 1, Phase::Invoke, OpKind::Write(Value::Int(3)), None));
        h.events.push(ev(2, 0, 2, Phase::Invoke, OpKind::Audit, None));
        assert!(matches!(
            h.validate(),
            Err(HistoryError::OverlappingOps { .. })
        ));
    }
}
