//! Random history generation and canned fixtures for cross-validating the
//! checkers against the enumeration oracle. Generated histories are
//! well-formed and role-plausible but deliberately mix consistent and
//! inconsistent results.

use std::collections::BTreeMap;

use rand::Rng;

use crate::history::{
    AuditSet, Event, History, ObjectInfo, OpId, OpKind, OpResult, Phase, ProcessId, RegisterId,
    RoleSet, Value,
};

/// The single-writer scenario with one overlapping read used throughout:
/// write(1) completes; a read by the sole reader starts; write(2) completes;
/// an audit runs entirely after write(2) and returns `audit_set`; the read
/// then responds 1. An atomic audit must report the read, a regular audit
/// may miss it.
pub fn separation_history(audit_set: AuditSet) -> History {
    let writer = ProcessId(0);
    let reader = ProcessId(1);
    let auditor = ProcessId(2);
    let object = RegisterId(0);
    let mut objects = BTreeMap::new();
    objects.insert(
        object,
        ObjectInfo {
            initial: Value::Bottom,
            roles: RoleSet {
                writer,
                readers: [reader].into(),
                auditors: [writer, auditor].into(),
            },
        },
    );
    let mut h = History::new(objects);
    let mut push = |seq: u64, process: ProcessId, op: u32, phase: Phase, kind: OpKind, result: Option<OpResult>| {
        h.events.push(Event {
            seq,
            process,
            object,
            op_id: OpId(op),
            phase,
            kind,
            result,
        });
    };
    let w1 = OpKind::Write(Value::Int(1));
    let w2 = OpKind::Write(Value::Int(2));
    push(1, writer, 1, Phase::Invoke, w1.clone(), None);
    push(2, writer, 1, Phase::Respond, w1, Some(OpResult::Wrote));
    push(3, reader, 2, Phase::Invoke, OpKind::Read, None);
    push(4, writer, 3, Phase::Invoke, w2.clone(), None);
    push(5, writer, 3, Phase::Respond, w2, Some(OpResult::Wrote));
    push(6, auditor, 4, Phase::Invoke, OpKind::Audit, None);
    push(7, auditor, 4, Phase::Respond, OpKind::Audit, Some(OpResult::Audit(audit_set)));
    push(8, reader, 2, Phase::Respond, OpKind::Read, Some(OpResult::Read(Value::Int(1))));
    h
}

/// Generate one random single-object history with at most `max_ops`
/// operations. Process 0 writes and audits, process 1 reads, process 2
/// reads and audits.
pub fn random_history(rng: &mut impl Rng, max_ops: usize) -> History {
    let object = RegisterId(0);
    let writer = ProcessId(0);
    let readers = [ProcessId(1), ProcessId(2)];
    let mut objects = BTreeMap::new();
    objects.insert(
        object,
        ObjectInfo {
            initial: Value::Bottom,
            roles: RoleSet {
                writer,
                readers: readers.into(),
                auditors: [writer, ProcessId(2)].into(),
            },
        },
    );

    // Assign operations to processes.
    let n_ops = rng.gen_range(1..=max_ops.max(1));
    let mut programs: BTreeMap<ProcessId, Vec<OpKind>> = BTreeMap::new();
    let mut next_value = 1u64;
    for _ in 0..n_ops {
        let p = ProcessId(rng.gen_range(0..3));
        let kind = match p.0 {
            0 => {
                if rng.gen_bool(0.6) {
                    let v = Value::Int(next_value);
                    next_value += 1;
                    OpKind::Write(v)
                } else {
                    OpKind::Audit
                }
            }
            1 => OpKind::Read,
            _ => {
                if rng.gen_bool(0.6) {
                    OpKind::Read
                } else {
                    OpKind::Audit
                }
            }
        };
        programs.entry(p).or_default().push(kind);
    }

    // Interleave invocations and responses, one process at a time, keeping
    // per-process sequentiality. `state[p] = (next op index, mid-op flag)`.
    let mut h = History::new(objects);
    let mut state: BTreeMap<ProcessId, (usize, Option<(OpId, OpKind)>)> =
        programs.keys().map(|p| (*p, (0, None))).collect();
    let mut stopped: Vec<ProcessId> = Vec::new();
    let mut seq = 1u64;
    let mut next_op_id = 1u32;
    let mut written_so_far: Vec<Value> = Vec::new();
    let mut responded_reads: Vec<(ProcessId, Value)> = Vec::new();
    loop {
        let ready: Vec<ProcessId> = state
            .iter()
            .filter(|(p, (i, mid))| {
                !stopped.contains(p) && (mid.is_some() || *i < programs[p].len())
            })
            .map(|(p, _)| *p)
            .collect();
        if ready.is_empty() {
            break;
        }
        let p = ready[rng.gen_range(0..ready.len())];
        let (i, mid) = state.get_mut(&p).expect("tracked process");
        match mid.take() {
            None => {
                let kind = programs[&p][*i].clone();
                *i += 1;
                let op_id = OpId(next_op_id);
                next_op_id += 1;
                if let OpKind::Write(v) = &kind {
                    written_so_far.push(*v);
                }
                h.events.push(Event {
                    seq,
                    process: p,
                    object,
                    op_id,
                    phase: Phase::Invoke,
                    kind: kind.clone(),
                    result: None,
                });
                *mid = Some((op_id, kind));
            }
            Some((op_id, kind)) => {
                // Occasionally leave the op pending forever; the process
                // then takes no further turns.
                if rng.gen_bool(0.12) {
                    stopped.push(p);
                    continue;
                }
                let result = match &kind {
                    OpKind::Write(_) => OpResult::Wrote,
                    OpKind::Read => OpResult::Read(random_read_value(rng, &written_so_far)),
                    OpKind::Audit => {
                        OpResult::Audit(random_audit_set(rng, &responded_reads, &written_so_far))
                    }
                };
                if let OpResult::Read(v) = &result {
                    responded_reads.push((p, *v));
                }
                h.events.push(Event {
                    seq,
                    process: p,
                    object,
                    op_id,
                    phase: Phase::Respond,
                    kind,
                    result: Some(result),
                });
            }
        }
        seq += 1;
    }
    h
}

fn random_read_value(rng: &mut impl Rng, written: &[Value]) -> Value {
    // Mostly a plausible value, sometimes one that was never written.
    if rng.gen_bool(0.08) {
        return Value::Int(99);
    }
    let mut candidates = vec![Value::Bottom];
    candidates.extend_from_slice(written);
    candidates[rng.gen_range(0..candidates.len())]
}

fn random_audit_set(
    rng: &mut impl Rng,
    responded_reads: &[(ProcessId, Value)],
    written: &[Value],
) -> AuditSet {
    let mut set = AuditSet::new();
    if rng.gen_bool(0.5) {
        // The honest answer at this moment.
        for (p, v) in responded_reads {
            set.add(*p, *v);
        }
        // With a small chance, drop or add one pair.
        if !set.0.is_empty() && rng.gen_bool(0.3) {
            let victim = *set.0.iter().nth(rng.gen_range(0..set.0.len())).expect("non-empty");
            set.0.remove(&victim);
        }
        return set;
    }
    let mut pool = vec![Value::Bottom];
    pool.extend_from_slice(written);
    for _ in 0..rng.gen_range(0..=2) {
        let p = ProcessId(rng.gen_range(1..3));
        set.add(p, pool[rng.gen_range(0..pool.len())]);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_histories_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let h = random_history(&mut rng, 8);
            h.validate().unwrap();
            assert!(h.ops().len() <= 8);
        }
    }

    #[test]
    fn separation_history_is_well_formed() {
        separation_history(AuditSet::new()).validate().unwrap();
        separation_history(AuditSet::singleton(ProcessId(1), Value::Int(1)))
            .validate()
            .unwrap();
    }
}
