//! Line-delimited history format: one event per line, fields in fixed order
//! `global_seq process object op_id phase kind argument result`.
//!
//! Header lines (`init`, `roles`) carry per-object metadata, `prim`-marked
//! lines carry primitive-level trace records, and `#` starts a comment.
//! This format is the contract between the scheduler, the checker, and the
//! CLI.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    AuditSet, Event, History, ObjectInfo, OpKind, OpResult, Phase, ProcessId, RegisterId, RoleSet,
    Value,
};

/// Serialized form of the bottom value.
pub const BOTTOM_TOKEN: &str = "_|_";

const NONE_TOKEN: &str = "-";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        msg: msg.into(),
    }
}

pub fn format_value(v: &Value) -> String {
    v.to_string()
}

pub fn parse_value(tok: &str, line: usize) -> Result<Value, ParseError> {
    if tok == BOTTOM_TOKEN {
        return Ok(Value::Bottom);
    }
    tok.parse::<u64>()
        .map(Value::Int)
        .map_err(|_| err(line, format!("bad value token `{tok}`")))
}

fn format_audit_set(s: &AuditSet) -> String {
    s.to_string()
}

fn parse_audit_set(tok: &str, line: usize) -> Result<AuditSet, ParseError> {
    let inner = tok
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| err(line, format!("bad audit set `{tok}`")))?;
    let mut set = AuditSet::new();
    if inner.is_empty() {
        return Ok(set);
    }
    for part in inner.split(',') {
        let (p, v) = part
            .split_once(':')
            .ok_or_else(|| err(line, format!("bad audit pair `{part}`")))?;
        let p = p
            .parse::<u32>()
            .map_err(|_| err(line, format!("bad process in audit pair `{part}`")))?;
        set.add(ProcessId(p), parse_value(v, line)?);
    }
    Ok(set)
}

fn parse_object(tok: &str, line: usize) -> Result<RegisterId, ParseError> {
    let digits = tok.strip_prefix('r').unwrap_or(tok);
    digits
        .parse::<u32>()
        .map(RegisterId)
        .map_err(|_| err(line, format!("bad object `{tok}`")))
}

fn format_event(ev: &Event) -> String {
    let phase = match ev.phase {
        Phase::Invoke => "inv",
        Phase::Respond => "resp",
    };
    let argument = match &ev.kind {
        OpKind::Write(v) => format_value(v),
        _ => NONE_TOKEN.to_string(),
    };
    let result = match &ev.result {
        None => NONE_TOKEN.to_string(),
        Some(OpResult::Wrote) => "ok".to_string(),
        Some(OpResult::Read(v)) => format_value(v),
        Some(OpResult::Audit(s)) => format_audit_set(s),
    };
    format!(
        "{} {} r{} {} {} {} {} {}",
        ev.seq, ev.process.0, ev.object.0, ev.op_id.0, phase, ev.kind.label(), argument, result
    )
}

/// Serialize a history to the line format. Header lines come first, then
/// events in sequence order.
pub fn to_lines(h: &History) -> String {
    let mut out = String::new();
    for (id, info) in &h.objects {
        out.push_str(&format!("init r{} {}\n", id.0, format_value(&info.initial)));
        let readers: Vec<String> = info.roles.readers.iter().map(|p| p.0.to_string()).collect();
        let auditors: Vec<String> = info.roles.auditors.iter().map(|p| p.0.to_string()).collect();
        out.push_str(&format!(
            "roles r{} writer={} readers={} auditors={}\n",
            id.0,
            info.roles.writer.0,
            readers.join(","),
            auditors.join(",")
        ));
    }
    for ev in &h.events {
        out.push_str(&format_event(ev));
        out.push('\n');
    }
    out
}

fn parse_id_list(tok: &str, line: usize) -> Result<Vec<ProcessId>, ParseError> {
    if tok.is_empty() {
        return Ok(Vec::new());
    }
    tok.split(',')
        .map(|t| {
            t.parse::<u32>()
                .map(ProcessId)
                .map_err(|_| err(line, format!("bad process id `{t}`")))
        })
        .collect()
}

/// Parse the line format back into a history. `prim` lines are skipped; the
/// checker consumes only high-level events.
pub fn parse(text: &str) -> Result<History, ParseError> {
    let mut objects: BTreeMap<RegisterId, ObjectInfo> = BTreeMap::new();
    let mut events: Vec<Event> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "init" => {
                if fields.len() != 3 {
                    return Err(err(line_no, "init takes `init <object> <value>`"));
                }
                let object = parse_object(fields[1], line_no)?;
                let initial = parse_value(fields[2], line_no)?;
                objects
                    .entry(object)
                    .or_insert_with(|| ObjectInfo {
                        initial: Value::Bottom,
                        roles: RoleSet {
                            writer: ProcessId(0),
                            readers: Default::default(),
                            auditors: Default::default(),
                        },
                    })
                    .initial = initial;
            }
            "roles" => {
                if fields.len() != 5 {
                    return Err(err(
                        line_no,
                        "roles takes `roles <object> writer=W readers=A,B auditors=C,D`",
                    ));
                }
                let object = parse_object(fields[1], line_no)?;
                let mut writer = None;
                let mut readers = Vec::new();
                let mut auditors = Vec::new();
                for f in &fields[2..] {
                    let (key, val) = f
                        .split_once('=')
                        .ok_or_else(|| err(line_no, format!("bad roles field `{f}`")))?;
                    match key {
                        "writer" => {
                            writer = Some(ProcessId(val.parse::<u32>().map_err(|_| {
                                err(line_no, format!("bad writer `{val}`"))
                            })?))
                        }
                        "readers" => readers = parse_id_list(val, line_no)?,
                        "auditors" => auditors = parse_id_list(val, line_no)?,
                        _ => return Err(err(line_no, format!("unknown roles field `{key}`"))),
                    }
                }
                let writer =
                    writer.ok_or_else(|| err(line_no, "roles line missing writer"))?;
                let entry = objects.entry(object).or_insert_with(|| ObjectInfo {
                    initial: Value::Bottom,
                    roles: RoleSet {
                        writer,
                        readers: Default::default(),
                        auditors: Default::default(),
                    },
                });
                entry.roles = RoleSet {
                    writer,
                    readers: readers.into_iter().collect(),
                    auditors: auditors.into_iter().collect(),
                };
            }
            "prim" => continue,
            _ => {
                if fields.len() != 8 {
                    return Err(err(
                        line_no,
                        format!("expected 8 event fields, got {}", fields.len()),
                    ));
                }
                let seq = fields[0]
                    .parse::<u64>()
                    .map_err(|_| err(line_no, format!("bad seq `{}`", fields[0])))?;
                let process = ProcessId(
                    fields[1]
                        .parse::<u32>()
                        .map_err(|_| err(line_no, format!("bad process `{}`", fields[1])))?,
                );
                let object = parse_object(fields[2], line_no)?;
                let op_id = super::OpId(
                    fields[3]
                        .parse::<u32>()
                        .map_err(|_| err(line_no, format!("bad op id `{}`", fields[3])))?,
                );
                let phase = match fields[4] {
                    "inv" => Phase::Invoke,
                    "resp" => Phase::Respond,
                    other => return Err(err(line_no, format!("bad phase `{other}`"))),
                };
                let kind = match fields[5] {
                    "write" => OpKind::Write(parse_value(fields[6], line_no)?),
                    "read" => OpKind::Read,
                    "audit" => OpKind::Audit,
                    other => return Err(err(line_no, format!("bad kind `{other}`"))),
                };
                let result = match (phase, &kind, fields[7]) {
                    (Phase::Invoke, _, NONE_TOKEN) => None,
                    (Phase::Invoke, _, other) => {
                        return Err(err(line_no, format!("invocation carries result `{other}`")))
                    }
                    (Phase::Respond, OpKind::Write(_), "ok") => Some(OpResult::Wrote),
                    (Phase::Respond, OpKind::Read, tok) => {
                        Some(OpResult::Read(parse_value(tok, line_no)?))
                    }
                    (Phase::Respond, OpKind::Audit, tok) => {
                        Some(OpResult::Audit(parse_audit_set(tok, line_no)?))
                    }
                    (Phase::Respond, _, other) => {
                        return Err(err(line_no, format!("bad result `{other}`")))
                    }
                };
                if !objects.contains_key(&object) {
                    return Err(err(
                        line_no,
                        format!("event references object r{} before its init line", object.0),
                    ));
                }
                events.push(Event {
                    seq,
                    process,
                    object,
                    op_id,
                    phase,
                    kind,
                    result,
                });
            }
        }
    }
    let h = History { events, objects };
    h.validate()
        .map_err(|e| err(0, format!("ill-formed history: {e}")))?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::super::{OpId, Value};
    use super::*;

    #[test]
    fn round_trips_through_lines() {
        let text = "\
init r0 _|_
roles r0 writer=0 readers=1 auditors=0,2
1 0 r0 1 inv write 3 -
2 0 r0 1 resp write 3 ok
3 1 r0 2 inv read - -
4 1 r0 2 resp read - 3
5 2 r0 3 inv audit - -
6 2 r0 3 resp audit - {1:3}
";
        let h = parse(text).unwrap();
        assert_eq!(h.events.len(), 6);
        assert_eq!(to_lines(&h), text);
        let audit = h.op(OpId(3)).unwrap();
        match audit.result.unwrap() {
            OpResult::Audit(s) => assert!(s.contains(ProcessId(1), Value::Int(3))),
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn reports_offending_line() {
        let text = "init r0 _|_\nroles r0 writer=0 readers=1 auditors=0\n1 0 r0 1 inv write x -\n";
        let e = parse(text).unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn empty_audit_set_and_bottom_round_trip() {
        let text = "\
init r0 7
roles r0 writer=0 readers=1 auditors=0
1 1 r0 1 inv read - -
2 1 r0 1 resp read - _|_
3 0 r0 2 inv audit - -
4 0 r0 2 resp audit - {}
";
        let h = parse(text).unwrap();
        assert_eq!(to_lines(&h), text);
    }

    #[test]
    fn prim_lines_are_skipped() {
        let text = "\
init r0 _|_
roles r0 writer=0 readers=1 auditors=0
1 0 r0 1 inv write 3 -
prim 2 0 r0 R 1 swap _|_ _|_
3 0 r0 1 resp write 3 ok
";
        let h = parse(text).unwrap();
        assert_eq!(h.events.len(), 2);
    }
}
