//! Deciders for the two audit consistency conditions.
//!
//! *Atomic with atomic audit*: some completion of the history admits a
//! sequential order of all its operations that respects real-time
//! precedence, gives every read the value of the most recent preceding
//! write (or the initial value), and has every audit return exactly the
//! pairs of the reads ordered before it.
//!
//! *Atomic with regular audit*: some completion admits such an order of the
//! reads and writes alone, while every audit, judged against the completion
//! directly, contains every read that completed before the audit's
//! invocation (completeness) and only pairs whose read was invoked before
//! the audit's response (accuracy).
//!
//! The decision procedure enumerates completions and searches linearization
//! prefixes depth-first with memoized frontier states; [`brute`] holds an
//! independent full-enumeration oracle used to cross-check it.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::history::{
    AuditSet, History, HistoryError, OpId, OpKind, OpResult, ProcessId, RegisterId, Value,
};

pub mod brute;

/// Which audit definition to decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditDefinition {
    /// Audits linearize together with reads and writes.
    Atomic,
    /// Audits are judged against the completion in real time.
    Regular,
}

impl fmt::Display for AuditDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditDefinition::Atomic => write!(f, "atomic-audit"),
            AuditDefinition::Regular => write!(f, "regular-audit"),
        }
    }
}

/// A sequential order of operation ids: the witness of an accepting check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linearization(pub Vec<OpId>);

impl fmt::Display for Linearization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// No order of the reads and writes satisfies register semantics and
    /// real-time precedence.
    RegisterSemantics,
    /// An audit misses a read it must report.
    Completeness,
    /// An audit reports a pair no read linearizable before it justifies.
    StrongAccuracy,
    /// An audit reports a pair no read invoked before its response justifies.
    Accuracy,
    /// Each audit is individually satisfiable but no joint order exists.
    AuditOrdering,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::RegisterSemantics => "register semantics",
            ViolationKind::Completeness => "Completeness",
            ViolationKind::StrongAccuracy => "Strong Accuracy",
            ViolationKind::Accuracy => "Accuracy",
            ViolationKind::AuditOrdering => "audit ordering",
        };
        write!(f, "{s}")
    }
}

/// Structured rejection reason.
#[derive(Debug, Clone)]
pub struct Violation {
    pub definition: AuditDefinition,
    pub kind: ViolationKind,
    pub op_ids: Vec<OpId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated ({}): {}", self.kind, self.definition, self.detail)?;
        if !self.op_ids.is_empty() {
            write!(f, " [")?;
            for (i, id) in self.op_ids.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{id}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// Outcome of a check: accepted with a witness, or rejected with a reason.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub accepted: bool,
    pub witness: Option<Linearization>,
    /// Responses assigned to pending operations by the accepting completion;
    /// pending operations not listed were discarded.
    pub completed_pending: Vec<(OpId, OpResult)>,
    pub violation: Option<Violation>,
}

impl Verdict {
    fn accept(witness: Linearization, completed_pending: Vec<(OpId, OpResult)>) -> Self {
        Verdict {
            accepted: true,
            witness: Some(witness),
            completed_pending,
            violation: None,
        }
    }

    fn reject(violation: Violation) -> Self {
        Verdict {
            accepted: false,
            witness: None,
            completed_pending: Vec::new(),
            violation: Some(violation),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("ill-formed history: {0}")]
    Input(#[from] HistoryError),
    #[error("duplicate written value {value} on {object}")]
    DuplicateWrittenValues { object: RegisterId, value: Value },
    #[error("bottom written by {op} on {object}")]
    BottomWritten { object: RegisterId, op: OpId },
    #[error("history has more than {0} operations on one object")]
    TooLarge(usize),
}

const MAX_OPS_PER_OBJECT: usize = 120;

/// One operation with an effective response position. Appended responses of
/// a completion sit at `u64::MAX`, after every real event.
#[derive(Debug, Clone)]
struct EffOp {
    op_id: OpId,
    process: ProcessId,
    kind: EffKind,
    inv: u64,
    resp: u64,
}

#[derive(Debug, Clone)]
enum EffKind {
    Write(Value),
    Read(Value),
    Audit(AuditSet),
}

/// How the search constrains an audit's returned set against the pairs of
/// the reads placed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AuditRule {
    /// Returned set equals the pairs seen: the combined
    /// completeness-and-strong-accuracy form.
    Exact,
    /// Returned set is a subset of the pairs seen (strong accuracy alone).
    SubsetOfSeen,
    /// Returned set contains all pairs seen (completeness alone).
    SupersetOfSeen,
}

/// Per-object working table.
struct ObjTable {
    initial: Value,
    complete: Vec<EffOp>,
    /// Pending ops by (op_id, process, kind, invoke seq).
    pending: Vec<(OpId, ProcessId, OpKind, u64)>,
    candidates: Vec<Value>,
}

fn build_table(h: &History, object: RegisterId) -> Result<ObjTable, CheckError> {
    let info = &h.objects[&object];
    let mut written = BTreeSet::new();
    let mut complete = Vec::new();
    let mut pending = Vec::new();
    for op in h.ops() {
        if op.object != object {
            continue;
        }
        if let OpKind::Write(v) = &op.kind {
            if v.is_bottom() {
                return Err(CheckError::BottomWritten { object, op: op.op_id });
            }
            if !written.insert(*v) {
                return Err(CheckError::DuplicateWrittenValues { object, value: *v });
            }
        }
        match op.respond_seq {
            Some(resp) => {
                let kind = match (&op.kind, &op.result) {
                    (OpKind::Write(v), _) => EffKind::Write(*v),
                    (OpKind::Read, Some(OpResult::Read(v))) => EffKind::Read(*v),
                    (OpKind::Audit, Some(OpResult::Audit(s))) => EffKind::Audit(s.clone()),
                    _ => return Err(CheckError::Input(HistoryError::MissingResult { seq: resp })),
                };
                complete.push(EffOp {
                    op_id: op.op_id,
                    process: op.process,
                    kind,
                    inv: op.invoke_seq,
                    resp,
                });
            }
            None => pending.push((op.op_id, op.process, op.kind.clone(), op.invoke_seq)),
        }
    }
    let table = ObjTable {
        initial: info.initial,
        complete,
        pending,
        candidates: h.read_candidates(object),
    };
    if table.complete.len() + table.pending.len() > MAX_OPS_PER_OBJECT {
        return Err(CheckError::TooLarge(MAX_OPS_PER_OBJECT));
    }
    Ok(table)
}

/// One way of resolving the pending operations.
#[derive(Debug, Clone, PartialEq)]
enum PendChoice {
    Discard,
    Write,
    Read(Value),
}

impl ObjTable {
    fn pending_choices(&self) -> Vec<Vec<PendChoice>> {
        self.pending
            .iter()
            .map(|(_, _, kind, _)| {
                let mut opts = vec![PendChoice::Discard];
                match kind {
                    OpKind::Write(_) => opts.push(PendChoice::Write),
                    OpKind::Read => {
                        for v in &self.candidates {
                            opts.push(PendChoice::Read(*v));
                        }
                    }
                    // Pending audits are never completed.
                    OpKind::Audit => {}
                }
                opts
            })
            .collect()
    }

    /// Iterate every completion, applying `f` until it yields `Some`.
    fn for_each_completion<T>(
        &self,
        mut f: impl FnMut(&[EffOp], &[(OpId, OpResult)]) -> Option<T>,
    ) -> Option<T> {
        let choice_lists = self.pending_choices();
        let mut picks = vec![0usize; choice_lists.len()];
        loop {
            let mut eff = self.complete.clone();
            let mut appended = Vec::new();
            for (i, &(op_id, process, ref kind, inv)) in self.pending.iter().enumerate() {
                match &choice_lists[i][picks[i]] {
                    PendChoice::Discard => {}
                    PendChoice::Write => {
                        let OpKind::Write(v) = kind else { unreachable!() };
                        eff.push(EffOp {
                            op_id,
                            process,
                            kind: EffKind::Write(*v),
                            inv,
                            resp: u64::MAX,
                        });
                        appended.push((op_id, OpResult::Wrote));
                    }
                    PendChoice::Read(v) => {
                        eff.push(EffOp {
                            op_id,
                            process,
                            kind: EffKind::Read(*v),
                            inv,
                            resp: u64::MAX,
                        });
                        appended.push((op_id, OpResult::Read(*v)));
                    }
                }
            }
            eff.sort_by_key(|o| o.op_id);
            if let Some(t) = f(&eff, &appended) {
                return Some(t);
            }
            let mut pos = 0;
            loop {
                if pos == picks.len() {
                    return None;
                }
                picks[pos] += 1;
                if picks[pos] < choice_lists[pos].len() {
                    break;
                }
                picks[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// Depth-first search for a sequential order of `ops` that extends real-time
/// precedence, satisfies register semantics, and satisfies `rule` at every
/// audit. Exploration picks ops in ascending op-id order (a tie-break fixed
/// for reproducibility); frontier states are memoized on (placed-set,
/// register value), since the pairs read so far are a function of the placed
/// set.
fn linearize(ops: &[EffOp], initial: Value, rule: AuditRule) -> Option<Vec<OpId>> {
    let n = ops.len();
    assert!(n <= 128, "guarded by MAX_OPS_PER_OBJECT");
    if n == 0 {
        return Some(Vec::new());
    }
    // Value table: register contents are always the initial value or a
    // written value.
    let mut values = vec![initial];
    for op in ops {
        if let EffKind::Write(v) = &op.kind {
            if !values.contains(v) {
                values.push(*v);
            }
        }
    }
    let value_idx = |v: &Value| values.iter().position(|x| x == v);

    // preds[i] = set of ops that must be placed before i.
    let mut preds = vec![0u128; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && ops[j].resp < ops[i].inv {
                preds[i] |= 1 << j;
            }
        }
    }

    struct Dfs<'a> {
        ops: &'a [EffOp],
        preds: &'a [u128],
        values: &'a [Value],
        rule: AuditRule,
        seen: BTreeSet<(ProcessId, Value)>,
        order: Vec<usize>,
        memo: HashSet<(u128, u8)>,
        full: u128,
    }

    impl Dfs<'_> {
        fn run(&mut self, placed: u128, reg: u8) -> bool {
            if placed == self.full {
                return true;
            }
            if !self.memo.insert((placed, reg)) {
                return false;
            }
            for i in 0..self.ops.len() {
                if placed & (1 << i) != 0 || self.preds[i] & !placed != 0 {
                    continue;
                }
                match &self.ops[i].kind {
                    EffKind::Write(v) => {
                        let next = self
                            .values
                            .iter()
                            .position(|x| x == v)
                            .expect("writes are in the value table") as u8;
                        self.order.push(i);
                        if self.run(placed | (1 << i), next) {
                            return true;
                        }
                        self.order.pop();
                    }
                    EffKind::Read(v) => {
                        if self.values[reg as usize] != *v {
                            continue;
                        }
                        let inserted = self.seen.insert((self.ops[i].process, *v));
                        self.order.push(i);
                        if self.run(placed | (1 << i), reg) {
                            return true;
                        }
                        self.order.pop();
                        if inserted {
                            self.seen.remove(&(self.ops[i].process, *v));
                        }
                    }
                    EffKind::Audit(p) => {
                        let ok = match self.rule {
                            AuditRule::Exact => p.0 == self.seen,
                            AuditRule::SubsetOfSeen => p.0.is_subset(&self.seen),
                            AuditRule::SupersetOfSeen => p.0.is_superset(&self.seen),
                        };
                        if !ok {
                            continue;
                        }
                        self.order.push(i);
                        if self.run(placed | (1 << i), reg) {
                            return true;
                        }
                        self.order.pop();
                    }
                }
            }
            false
        }
    }

    // Reads of values that are neither written nor initial can never be
    // placed; fail fast so the memo table stays small.
    for op in ops {
        if let EffKind::Read(v) = &op.kind {
            value_idx(v)?;
        }
    }

    let mut dfs = Dfs {
        ops,
        preds: &preds,
        values: &values,
        rule,
        seen: BTreeSet::new(),
        order: Vec::with_capacity(n),
        memo: HashSet::new(),
        full: if n == 128 { u128::MAX } else { (1 << n) - 1 },
    };
    if dfs.run(0, 0) {
        Some(dfs.order.iter().map(|&i| ops[i].op_id).collect())
    } else {
        None
    }
}

fn without_audits(ops: &[EffOp]) -> Vec<EffOp> {
    ops.iter()
        .filter(|o| !matches!(o.kind, EffKind::Audit(_)))
        .cloned()
        .collect()
}

/// The regular-audit conditions, judged directly against one completion.
/// Returns the first failing (audit, kind, partner, detail).
fn regular_audit_failure(ops: &[EffOp]) -> Option<(OpId, ViolationKind, Vec<OpId>, String)> {
    for audit in ops {
        let EffKind::Audit(p) = &audit.kind else {
            continue;
        };
        // Completeness: reads completed before the audit's invocation.
        for read in ops {
            let EffKind::Read(v) = &read.kind else {
                continue;
            };
            if read.resp < audit.inv && !p.contains(read.process, *v) {
                return Some((
                    audit.op_id,
                    ViolationKind::Completeness,
                    vec![audit.op_id, read.op_id],
                    format!(
                        "read {} of {} by {} completed before the audit's invocation but is not reported",
                        read.op_id, v, read.process
                    ),
                ));
            }
        }
        // Accuracy: each reported pair has a read invoked before the audit's
        // response.
        for (proc, v) in p.iter() {
            let justified = ops.iter().any(|r| {
                matches!(&r.kind, EffKind::Read(rv) if rv == v)
                    && r.process == *proc
                    && r.inv < audit.resp
            });
            if !justified {
                return Some((
                    audit.op_id,
                    ViolationKind::Accuracy,
                    vec![audit.op_id],
                    format!(
                        "reported pair ({proc},{v}) has no read invoked before the audit's response"
                    ),
                ));
            }
        }
    }
    None
}

fn check_object_atomic(table: &ObjTable) -> Verdict {
    let hit = table.for_each_completion(|eff, appended| {
        linearize(eff, table.initial, AuditRule::Exact)
            .map(|order| (order, appended.to_vec()))
    });
    if let Some((order, appended)) = hit {
        return Verdict::accept(Linearization(order), appended);
    }
    // Rejected: name the failing condition.
    let rw_ok = table
        .for_each_completion(|eff, _| {
            linearize(&without_audits(eff), table.initial, AuditRule::Exact).map(|_| ())
        })
        .is_some();
    if !rw_ok {
        return Verdict::reject(register_semantics_violation(
            table,
            AuditDefinition::Atomic,
        ));
    }
    let accuracy_ok = table
        .for_each_completion(|eff, _| {
            linearize(eff, table.initial, AuditRule::SubsetOfSeen).map(|_| ())
        })
        .is_some();
    if !accuracy_ok {
        return Verdict::reject(strong_accuracy_violation(table));
    }
    let completeness_ok = table
        .for_each_completion(|eff, _| {
            linearize(eff, table.initial, AuditRule::SupersetOfSeen).map(|_| ())
        })
        .is_some();
    if !completeness_ok {
        return Verdict::reject(completeness_violation(table));
    }
    Verdict::reject(Violation {
        definition: AuditDefinition::Atomic,
        kind: ViolationKind::AuditOrdering,
        op_ids: audit_ids(table),
        detail: "each audit is individually satisfiable but no joint linearization exists".into(),
    })
}

fn check_object_regular(table: &ObjTable) -> Verdict {
    let hit = table.for_each_completion(|eff, appended| {
        if regular_audit_failure(eff).is_some() {
            return None;
        }
        linearize(&without_audits(eff), table.initial, AuditRule::Exact)
            .map(|order| (order, appended.to_vec()))
    });
    if let Some((order, appended)) = hit {
        return Verdict::accept(Linearization(order), appended);
    }
    // Prefer explaining an audit failure from a completion whose reads and
    // writes do linearize.
    let audit_failure = table.for_each_completion(|eff, _| {
        if linearize(&without_audits(eff), table.initial, AuditRule::Exact).is_none() {
            return None;
        }
        regular_audit_failure(eff)
    });
    match audit_failure {
        Some((_, kind, op_ids, detail)) => Verdict::reject(Violation {
            definition: AuditDefinition::Regular,
            kind,
            op_ids,
            detail,
        }),
        None => Verdict::reject(register_semantics_violation(
            table,
            AuditDefinition::Regular,
        )),
    }
}

fn audit_ids(table: &ObjTable) -> Vec<OpId> {
    table
        .complete
        .iter()
        .filter(|o| matches!(o.kind, EffKind::Audit(_)))
        .map(|o| o.op_id)
        .collect()
}

fn register_semantics_violation(table: &ObjTable, definition: AuditDefinition) -> Violation {
    // Definite witnesses when one exists: a read of a value never available,
    // or a read wholly before the write of its value.
    for op in &table.complete {
        if let EffKind::Read(v) = &op.kind {
            if !table.candidates.contains(v) {
                return Violation {
                    definition,
                    kind: ViolationKind::RegisterSemantics,
                    op_ids: vec![op.op_id],
                    detail: format!("read {} returned {v}, which was never written", op.op_id),
                };
            }
            if let Some(w) = table.complete.iter().find(
                |w| matches!(&w.kind, EffKind::Write(wv) if wv == v) && op.resp < w.inv,
            ) {
                return Violation {
                    definition,
                    kind: ViolationKind::RegisterSemantics,
                    op_ids: vec![op.op_id, w.op_id],
                    detail: format!(
                        "read {} returned {v} but completed before write {} of that value",
                        op.op_id, w.op_id
                    ),
                };
            }
            // Stale read: some later write completed before the read began.
            let source_resp = table
                .complete
                .iter()
                .find(|w| matches!(&w.kind, EffKind::Write(wv) if wv == v))
                .map(|w| w.resp);
            if let Some(overwriter) = table.complete.iter().find(|w| {
                matches!(&w.kind, EffKind::Write(wv) if wv != v)
                    && w.resp < op.inv
                    && source_resp.map(|r| r < w.inv).unwrap_or(*v == table.initial)
            }) {
                return Violation {
                    definition,
                    kind: ViolationKind::RegisterSemantics,
                    op_ids: vec![op.op_id, overwriter.op_id],
                    detail: format!(
                        "read {} returned the stale value {v}: write {} overwrote it before the read began",
                        op.op_id, overwriter.op_id
                    ),
                };
            }
        }
    }
    Violation {
        definition,
        kind: ViolationKind::RegisterSemantics,
        op_ids: Vec::new(),
        detail: "no order of the reads and writes respects real-time precedence and register semantics"
            .into(),
    }
}

fn strong_accuracy_violation(table: &ObjTable) -> Violation {
    // Definite witness: a reported pair no read (complete or completable)
    // could justify.
    for op in &table.complete {
        if let EffKind::Audit(p) = &op.kind {
            for (proc, v) in p.iter() {
                let complete_read = table.complete.iter().any(|r| {
                    r.process == *proc && matches!(&r.kind, EffKind::Read(rv) if rv == v)
                });
                let completable = table.pending.iter().any(|(_, rp, kind, _)| {
                    rp == proc && matches!(kind, OpKind::Read) && table.candidates.contains(v)
                });
                if !complete_read && !completable {
                    return Violation {
                        definition: AuditDefinition::Atomic,
                        kind: ViolationKind::StrongAccuracy,
                        op_ids: vec![op.op_id],
                        detail: format!(
                            "audit {} reports ({proc},{v}) but no read by {proc} returned {v}",
                            op.op_id
                        ),
                    };
                }
            }
        }
    }
    Violation {
        definition: AuditDefinition::Atomic,
        kind: ViolationKind::StrongAccuracy,
        op_ids: audit_ids(table),
        detail: "some reported pair has no read linearizable before its audit".into(),
    }
}

fn completeness_violation(table: &ObjTable) -> Violation {
    // Definite witness: a read that precedes the audit in real time yet is
    // missing from its set.
    for op in &table.complete {
        if let EffKind::Audit(p) = &op.kind {
            for r in &table.complete {
                if let EffKind::Read(v) = &r.kind {
                    if r.resp < op.inv && !p.contains(r.process, *v) {
                        return Violation {
                            definition: AuditDefinition::Atomic,
                            kind: ViolationKind::Completeness,
                            op_ids: vec![op.op_id, r.op_id],
                            detail: format!(
                                "read {} of {v} by {} precedes audit {} but is not reported",
                                r.op_id, r.process, op.op_id
                            ),
                        };
                    }
                }
            }
        }
    }
    Violation {
        definition: AuditDefinition::Atomic,
        kind: ViolationKind::Completeness,
        op_ids: audit_ids(table),
        detail: "some read must be linearized before an audit that does not report it".into(),
    }
}

/// Decide one definition for a whole history. Multi-object histories are
/// checked per object (linearizability is compositional); the verdict
/// aggregates witnesses and reports the first rejection.
pub fn check(h: &History, definition: AuditDefinition) -> Result<Verdict, CheckError> {
    h.validate()?;
    let mut witness = Vec::new();
    let mut completed_pending = Vec::new();
    for object in h.objects.keys().copied().collect::<Vec<_>>() {
        let table = build_table(h, object)?;
        let verdict = match definition {
            AuditDefinition::Atomic => check_object_atomic(&table),
            AuditDefinition::Regular => check_object_regular(&table),
        };
        if !verdict.accepted {
            return Ok(verdict);
        }
        witness.extend(verdict.witness.expect("accepting verdict has witness").0);
        completed_pending.extend(verdict.completed_pending);
    }
    Ok(Verdict::accept(Linearization(witness), completed_pending))
}

/// Register semantics of a proposed sequential order: every read returns the
/// most recent preceding write's value, or the initial value. Audits in the
/// order are ignored. The order must cover exactly the complete read/write
/// operations of the (single-object) history.
pub fn check_sequential_register(seq: &Linearization, h: &History) -> Result<bool, CheckError> {
    h.validate()?;
    let object = single_object(h)?;
    let ops = index_complete_ops(h)?;
    let mut expected: BTreeSet<OpId> = ops
        .values()
        .filter(|o| !matches!(o.kind, EffKind::Audit(_)))
        .map(|o| o.op_id)
        .collect();
    let mut reg = h.objects[&object].initial;
    for id in &seq.0 {
        let op = ops.get(id).ok_or(HistoryError::UnknownOp(*id))?;
        match &op.kind {
            EffKind::Write(v) => {
                expected.remove(id);
                reg = *v;
            }
            EffKind::Read(v) => {
                expected.remove(id);
                if *v != reg {
                    return Ok(false);
                }
            }
            EffKind::Audit(_) => {}
        }
    }
    Ok(expected.is_empty())
}

/// Atomic-audit condition over a proposed sequential order: every audit
/// returns exactly the pairs of the reads placed before it (the combined
/// completeness-and-strong-accuracy form).
pub fn check_audit_conditions(seq: &Linearization, h: &History) -> Result<bool, CheckError> {
    h.validate()?;
    single_object(h)?;
    let ops = index_complete_ops(h)?;
    let mut seen: BTreeSet<(ProcessId, Value)> = BTreeSet::new();
    for id in &seq.0 {
        let op = ops.get(id).ok_or(HistoryError::UnknownOp(*id))?;
        match &op.kind {
            EffKind::Read(v) => {
                seen.insert((op.process, *v));
            }
            EffKind::Audit(p) => {
                if p.0 != seen {
                    return Ok(false);
                }
            }
            EffKind::Write(_) => {}
        }
    }
    Ok(true)
}

fn single_object(h: &History) -> Result<RegisterId, CheckError> {
    let mut it = h.objects.keys();
    match (it.next(), it.next()) {
        (Some(&o), None) => Ok(o),
        _ => Err(CheckError::Input(HistoryError::UnknownOp(OpId(0)))),
    }
}

fn index_complete_ops(h: &History) -> Result<BTreeMap<OpId, EffOp>, CheckError> {
    let mut out = BTreeMap::new();
    for op in h.ops() {
        if let Some(resp) = op.respond_seq {
            let kind = match (&op.kind, &op.result) {
                (OpKind::Write(v), _) => EffKind::Write(*v),
                (OpKind::Read, Some(OpResult::Read(v))) => EffKind::Read(*v),
                (OpKind::Audit, Some(OpResult::Audit(s))) => EffKind::Audit(s.clone()),
                _ => return Err(CheckError::Input(HistoryError::MissingResult { seq: resp })),
            };
            out.insert(
                op.op_id,
                EffOp {
                    op_id: op.op_id,
                    process: op.process,
                    kind,
                    inv: op.invoke_seq,
                    resp,
                },
            );
        }
    }
    Ok(out)
}

/// Re-run the definitional predicates on a verdict's witness: the completion
/// it names must make the witness a legal sequential execution. Used to
/// validate accepting verdicts independently of the search path.
pub fn verify_witness(
    h: &History,
    verdict: &Verdict,
    definition: AuditDefinition,
) -> Result<bool, CheckError> {
    if !verdict.accepted {
        return Ok(false);
    }
    let witness = verdict.witness.as_ref().expect("accepting verdict");
    let completed: BTreeMap<OpId, OpResult> = verdict.completed_pending.iter().cloned().collect();
    // Materialize the completion the verdict names.
    let mut h2 = h.clone();
    let pending_ids: Vec<OpId> = h
        .ops()
        .iter()
        .filter(|o| !o.is_complete())
        .map(|o| o.op_id)
        .collect();
    let mut next_seq = h.events.last().map(|e| e.seq + 1).unwrap_or(1);
    for id in pending_ids {
        match completed.get(&id) {
            Some(result) => {
                let inv = h2
                    .events
                    .iter()
                    .find(|e| e.op_id == id && e.phase == crate::history::Phase::Invoke)
                    .expect("pending op has an invocation")
                    .clone();
                h2.events.push(crate::history::Event {
                    seq: next_seq,
                    process: inv.process,
                    object: inv.object,
                    op_id: id,
                    phase: crate::history::Phase::Respond,
                    kind: inv.kind.clone(),
                    result: Some(result.clone()),
                });
                next_seq += 1;
            }
            None => h2.events.retain(|e| e.op_id != id),
        }
    }
    h2.validate()?;

    // Witness order must extend real-time precedence.
    for (i, a) in witness.0.iter().enumerate() {
        for b in &witness.0[i + 1..] {
            if h2.precedes(*b, *a)? {
                return Ok(false);
            }
        }
    }
    // Per object: the witness restricted to the object must satisfy the
    // register semantics, the audit conditions, and (for the atomic
    // definition) cover every completed operation.
    for object in h2.objects.keys().copied().collect::<Vec<_>>() {
        let obj_hist = h2.restrict_to(object);
        let obj_ids: BTreeSet<OpId> = obj_hist.ops().iter().map(|o| o.op_id).collect();
        let obj_seq = Linearization(
            witness
                .0
                .iter()
                .copied()
                .filter(|id| obj_ids.contains(id))
                .collect(),
        );
        let audits_in_witness = obj_seq.0.iter().any(|id| {
            obj_hist
                .ops()
                .iter()
                .any(|o| o.op_id == *id && matches!(o.kind, OpKind::Audit))
        });
        match definition {
            AuditDefinition::Atomic => {
                let n_ops = obj_hist.ops().len();
                if obj_seq.0.len() != n_ops {
                    return Ok(false);
                }
                if !check_sequential_register(&obj_seq, &obj_hist)?
                    || !check_audit_conditions(&obj_seq, &obj_hist)?
                {
                    return Ok(false);
                }
            }
            AuditDefinition::Regular => {
                if audits_in_witness {
                    return Ok(false);
                }
                if !check_sequential_register(&obj_seq, &obj_hist)? {
                    return Ok(false);
                }
                let table = build_table(&obj_hist, object)?;
                if regular_audit_failure(&table.complete).is_some() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
