//! Brute-force enumeration oracle: every completion, every real-time-
//! respecting permutation, with the definitional predicates spelled out
//! naively. Deliberately shares no search machinery with the main checker;
//! its job is to catch drift in the fast decision procedure, at small scale
//! only.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::history::{History, OpId, OpKind, OpResult, OpView, ProcessId, Value};

use super::{AuditDefinition, CheckError, Linearization, Verdict, Violation, ViolationKind};

pub const DEFAULT_ORACLE_BOUND: usize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("history exceeds the oracle bound of {0} operations")]
    OverBound(usize),
    #[error(transparent)]
    Input(#[from] CheckError),
}

/// Decide `definition` by exhaustive enumeration. Refuses histories with
/// more than `bound` operations; this is an oracle, not a checker.
pub fn brute_force_oracle(
    h: &History,
    definition: AuditDefinition,
    bound: usize,
) -> Result<Verdict, OracleError> {
    h.validate().map_err(CheckError::Input)?;
    validate_writes(h)?;
    if h.ops().len() > bound {
        return Err(OracleError::OverBound(bound));
    }
    for completion in h.completions() {
        let ops = completion.ops();
        if ops.len() > bound {
            return Err(OracleError::OverBound(bound));
        }
        if let Some(verdict) = try_completion(h, &completion, &ops, definition) {
            return Ok(verdict);
        }
    }
    Ok(Verdict::reject(Violation {
        definition,
        kind: ViolationKind::AuditOrdering,
        op_ids: Vec::new(),
        detail: "no completion admits a legal sequential execution".into(),
    }))
}

fn validate_writes(h: &History) -> Result<(), CheckError> {
    for object in h.objects.keys() {
        let mut seen = BTreeSet::new();
        for op in h.ops() {
            if op.object != *object {
                continue;
            }
            if let OpKind::Write(v) = op.kind {
                if v.is_bottom() {
                    return Err(CheckError::BottomWritten {
                        object: *object,
                        op: op.op_id,
                    });
                }
                if !seen.insert(v) {
                    return Err(CheckError::DuplicateWrittenValues {
                        object: *object,
                        value: v,
                    });
                }
            }
        }
    }
    Ok(())
}

fn try_completion(
    original: &History,
    completion: &History,
    ops: &[OpView],
    definition: AuditDefinition,
) -> Option<Verdict> {
    let to_permute: Vec<&OpView> = match definition {
        AuditDefinition::Atomic => ops.iter().collect(),
        AuditDefinition::Regular => ops
            .iter()
            .filter(|o| !matches!(o.kind, OpKind::Audit))
            .collect(),
    };
    if definition == AuditDefinition::Regular && !regular_audits_hold(completion, ops) {
        return None;
    }
    let mut used = vec![false; to_permute.len()];
    let mut perm: Vec<usize> = Vec::with_capacity(to_permute.len());
    if permute(completion, &to_permute, &mut used, &mut perm, definition) {
        let witness = Linearization(perm.iter().map(|&i| to_permute[i].op_id).collect());
        let completed_pending = appended_responses(original, completion);
        return Some(Verdict::accept(witness, completed_pending));
    }
    None
}

/// Enumerate permutations (pruned only by real-time precedence, which any
/// extension of a violating prefix also violates) and test each complete one
/// against the definitional predicates.
fn permute(
    h: &History,
    ops: &[&OpView],
    used: &mut [bool],
    perm: &mut Vec<usize>,
    definition: AuditDefinition,
) -> bool {
    if perm.len() == ops.len() {
        return sequential_ok(h, ops, perm)
            && (definition == AuditDefinition::Regular || atomic_audits_ok(ops, perm));
    }
    for i in 0..ops.len() {
        if used[i] {
            continue;
        }
        // Real-time order: nothing still unplaced may precede ops[i].
        let blocked = (0..ops.len()).any(|j| {
            !used[j]
                && j != i
                && h.precedes(ops[j].op_id, ops[i].op_id).expect("ops exist in history")
        });
        if blocked {
            continue;
        }
        used[i] = true;
        perm.push(i);
        if permute(h, ops, used, perm, definition) {
            return true;
        }
        perm.pop();
        used[i] = false;
    }
    false
}

/// Condition 2, checked per object by replaying the permutation.
fn sequential_ok(h: &History, ops: &[&OpView], perm: &[usize]) -> bool {
    for (object, info) in &h.objects {
        let mut reg = info.initial;
        for &i in perm {
            let op = ops[i];
            if op.object != *object {
                continue;
            }
            match (&op.kind, &op.result) {
                (OpKind::Write(v), _) => reg = *v,
                (OpKind::Read, Some(OpResult::Read(v))) => {
                    if *v != reg {
                        return false;
                    }
                }
                (OpKind::Audit, _) => {}
                _ => return false,
            }
        }
    }
    true
}

/// Condition 3 of the atomic definition: each audit returns a pair (p, v)
/// if and only if a read by p returning v is ordered before it.
fn atomic_audits_ok(ops: &[&OpView], perm: &[usize]) -> bool {
    for (object, _) in group_objects(ops) {
        let mut seen: BTreeSet<(ProcessId, Value)> = BTreeSet::new();
        for &i in perm {
            let op = ops[i];
            if op.object != object {
                continue;
            }
            match (&op.kind, &op.result) {
                (OpKind::Read, Some(OpResult::Read(v))) => {
                    seen.insert((op.process, *v));
                }
                (OpKind::Audit, Some(OpResult::Audit(p))) => {
                    if p.0 != seen {
                        return false;
                    }
                }
                _ => {}
            }
        }
    }
    true
}

fn group_objects<'a>(ops: &[&'a OpView]) -> Vec<(crate::history::RegisterId, &'a OpView)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for op in ops {
        if seen.insert(op.object) {
            out.push((op.object, *op));
        }
    }
    out
}

/// Condition 3 of the regular definition, stated on the completion itself.
fn regular_audits_hold(h: &History, ops: &[OpView]) -> bool {
    for audit in ops {
        let (OpKind::Audit, Some(OpResult::Audit(p))) = (&audit.kind, &audit.result) else {
            continue;
        };
        let audit_inv = audit.invoke_seq;
        let audit_resp = audit.respond_seq.expect("completions are complete");
        // Completeness: every read of the same object that completes before
        // the audit's invocation is reported.
        for read in ops {
            if read.object != audit.object {
                continue;
            }
            let (OpKind::Read, Some(OpResult::Read(v))) = (&read.kind, &read.result) else {
                continue;
            };
            let read_resp = read.respond_seq.expect("completions are complete");
            if read_resp < audit_inv && !p.contains(read.process, *v) {
                return false;
            }
        }
        // Accuracy: every reported pair is justified by a read invoked
        // before the audit's response.
        for (proc, v) in p.iter() {
            let justified = ops.iter().any(|r| {
                r.object == audit.object
                    && r.process == *proc
                    && matches!(&r.kind, OpKind::Read)
                    && matches!(&r.result, Some(OpResult::Read(rv)) if rv == v)
                    && r.invoke_seq < audit_resp
            });
            if !justified {
                return false;
            }
        }
        let _ = h;
    }
    true
}

/// The responses a completion appended to pending operations of the
/// original history.
fn appended_responses(original: &History, completion: &History) -> Vec<(OpId, OpResult)> {
    let pending: BTreeSet<OpId> = original
        .ops()
        .iter()
        .filter(|o| !o.is_complete())
        .map(|o| o.op_id)
        .collect();
    completion
        .ops()
        .iter()
        .filter(|o| pending.contains(&o.op_id) && o.is_complete())
        .map(|o| (o.op_id, o.result.clone().expect("complete op has result")))
        .collect()
}
