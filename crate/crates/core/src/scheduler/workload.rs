//! Workload descriptions: one register, its roles, and per-process
//! operation scripts, with a declarative text format and the built-in demo
//! workloads the CLI and the test suite share.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::history::{OpKind, ProcessId, RegisterId, Value};
use crate::registers::{AlgorithmTag, Mutation, RegisterConfig};

use super::{ExecError, Executor, ScriptDriver};

#[derive(Debug, Clone)]
pub struct Workload {
    pub registers: Vec<RegisterConfig>,
    pub programs: BTreeMap<ProcessId, Vec<(RegisterId, OpKind)>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct WorkloadParseError {
    pub line: usize,
    pub msg: String,
}

impl Workload {
    pub fn new(
        registers: Vec<RegisterConfig>,
        programs: BTreeMap<ProcessId, Vec<(RegisterId, OpKind)>>,
    ) -> Self {
        Workload {
            registers,
            programs,
        }
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        for r in &mut self.registers {
            r.mutation = mutation;
        }
        self
    }

    pub fn executor(&self) -> Result<Executor<ScriptDriver>, ExecError> {
        let drivers = self
            .programs
            .iter()
            .map(|(p, ops)| (*p, ScriptDriver::new(ops.clone())))
            .collect();
        Executor::new(self.registers.clone(), drivers)
    }

    /// Program consistency: every op is role-legal and write arguments are
    /// pairwise distinct and non-bottom.
    pub fn validate(&self) -> Result<(), String> {
        let mut written = Vec::new();
        for (p, ops) in &self.programs {
            for (object, kind) in ops {
                let config = self
                    .registers
                    .iter()
                    .find(|r| r.object == *object)
                    .ok_or_else(|| format!("program of {p} references unknown register {object}"))?;
                let ok = match kind {
                    OpKind::Write(v) => {
                        if v.is_bottom() {
                            return Err(format!("{p} writes bottom to {object}"));
                        }
                        if written.contains(v) {
                            return Err(format!("duplicate write argument {v}"));
                        }
                        written.push(*v);
                        *p == config.writer
                    }
                    OpKind::Read => config.readers.contains(p),
                    OpKind::Audit => config.auditors.contains(p),
                };
                if !ok {
                    return Err(format!("{p} may not {} {object}", kind.label()));
                }
            }
        }
        Ok(())
    }
}

fn err(line: usize, msg: impl Into<String>) -> WorkloadParseError {
    WorkloadParseError {
        line,
        msg: msg.into(),
    }
}

/// Parse the workload text format:
///
/// ```text
/// algorithm a4
/// initial 7
/// writer 0
/// readers 1 2
/// auditors 0
/// program 0 write 3, write 5, audit
/// program 1 read, read
/// ```
pub fn parse_workload(text: &str) -> Result<Workload, WorkloadParseError> {
    let mut algorithm = None;
    let mut initial = Value::Bottom;
    let mut writer = None;
    let mut readers = Vec::new();
    let mut auditors = Vec::new();
    let mut programs: BTreeMap<ProcessId, Vec<(RegisterId, OpKind)>> = BTreeMap::new();
    let object = RegisterId(0);

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key {
            "algorithm" => {
                algorithm = Some(rest.parse::<AlgorithmTag>().map_err(|e| err(line_no, e))?)
            }
            "initial" => {
                initial = crate::history::format::parse_value(rest, line_no)
                    .map_err(|e| err(line_no, e.msg))?
            }
            "writer" => {
                writer = Some(ProcessId(
                    rest.parse::<u32>().map_err(|_| err(line_no, "bad writer id"))?,
                ))
            }
            "readers" => {
                readers = parse_process_list(rest, line_no)?;
            }
            "auditors" => {
                auditors = parse_process_list(rest, line_no)?;
            }
            "program" => {
                let (pid, ops_text) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err(line_no, "program takes `program <pid> <ops>`"))?;
                let pid = ProcessId(
                    pid.parse::<u32>().map_err(|_| err(line_no, "bad process id"))?,
                );
                let mut ops = Vec::new();
                for op_text in ops_text.split(',') {
                    let op_text = op_text.trim();
                    if op_text.is_empty() {
                        continue;
                    }
                    let kind = match op_text.split_once(char::is_whitespace) {
                        Some(("write", v)) => OpKind::Write(
                            crate::history::format::parse_value(v.trim(), line_no)
                                .map_err(|e| err(line_no, e.msg))?,
                        ),
                        None if op_text == "read" => OpKind::Read,
                        None if op_text == "audit" => OpKind::Audit,
                        _ => return Err(err(line_no, format!("bad op `{op_text}`"))),
                    };
                    ops.push((object, kind));
                }
                programs.insert(pid, ops);
            }
            other => return Err(err(line_no, format!("unknown directive `{other}`"))),
        }
    }

    let algorithm = algorithm.ok_or_else(|| err(0, "missing `algorithm` line"))?;
    let writer = writer.ok_or_else(|| err(0, "missing `writer` line"))?;
    let config = RegisterConfig::new(object, algorithm, writer, readers, auditors, initial);
    let w = Workload::new(vec![config], programs);
    w.validate().map_err(|msg| err(0, msg))?;
    Ok(w)
}

fn parse_process_list(text: &str, line_no: usize) -> Result<Vec<ProcessId>, WorkloadParseError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<u32>()
                .map(ProcessId)
                .map_err(|_| err(line_no, format!("bad process id `{t}`")))
        })
        .collect()
}

fn script(object: RegisterId, kinds: Vec<OpKind>) -> Vec<(RegisterId, OpKind)> {
    kinds.into_iter().map(|k| (object, k)).collect()
}

fn w(v: u64) -> OpKind {
    OpKind::Write(Value::Int(v))
}

/// The small per-algorithm workloads used for exhaustive exploration.
pub fn demo_workload(tag: AlgorithmTag) -> Workload {
    let r0 = RegisterId(0);
    let p = ProcessId;
    match tag {
        AlgorithmTag::A3 => {
            let config = RegisterConfig::new(r0, tag, p(0), [p(1)], [p(0)], Value::Bottom);
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), OpKind::Audit]));
            programs.insert(p(1), script(r0, vec![OpKind::Read, OpKind::Read, OpKind::Read]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A4 => {
            let config = RegisterConfig::new(r0, tag, p(0), [p(1), p(2)], [p(0)], Value::Int(7));
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), OpKind::Audit]));
            programs.insert(p(1), script(r0, vec![OpKind::Read, OpKind::Read]));
            programs.insert(p(2), script(r0, vec![OpKind::Read]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A5 => {
            let config =
                RegisterConfig::new(r0, tag, p(0), [p(1)], [p(0), p(2)], Value::Bottom);
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), w(3), OpKind::Audit]));
            programs.insert(p(1), script(r0, vec![OpKind::Read]));
            programs.insert(p(2), script(r0, vec![OpKind::Audit]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A6 => {
            let config = RegisterConfig::new(
                r0,
                tag,
                p(0),
                [p(1), p(2)],
                [p(0), p(2)],
                Value::Int(7),
            );
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), OpKind::Audit]));
            programs.insert(p(1), script(r0, vec![OpKind::Read, OpKind::Read]));
            programs.insert(p(2), script(r0, vec![OpKind::Read]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A7 => {
            let config = RegisterConfig::new(
                r0,
                tag,
                p(0),
                [p(1), p(2)],
                [p(0), p(3)],
                Value::Bottom,
            );
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), OpKind::Audit]));
            programs.insert(p(1), script(r0, vec![OpKind::Read, OpKind::Read]));
            programs.insert(p(2), script(r0, vec![OpKind::Read]));
            Workload::new(vec![config], programs)
        }
    }
}

/// The larger 12-operation workloads used for seeded-random exploration.
pub fn random_workload(tag: AlgorithmTag) -> Workload {
    let r0 = RegisterId(0);
    let p = ProcessId;
    match tag {
        AlgorithmTag::A3 => {
            let config = RegisterConfig::new(r0, tag, p(0), [p(1)], [p(0)], Value::Bottom);
            let mut programs = BTreeMap::new();
            programs.insert(
                p(0),
                script(r0, vec![w(1), w(2), OpKind::Audit, w(3), w(4), OpKind::Audit]),
            );
            programs.insert(p(1), script(r0, vec![OpKind::Read; 6]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A4 => {
            let config = RegisterConfig::new(r0, tag, p(0), [p(1), p(2)], [p(0)], Value::Int(7));
            let mut programs = BTreeMap::new();
            programs.insert(
                p(0),
                script(r0, vec![w(1), w(2), OpKind::Audit, w(3), w(4), OpKind::Audit]),
            );
            programs.insert(p(1), script(r0, vec![OpKind::Read; 3]));
            programs.insert(p(2), script(r0, vec![OpKind::Read; 3]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A5 => {
            let config =
                RegisterConfig::new(r0, tag, p(0), [p(1)], [p(0), p(2)], Value::Bottom);
            let mut programs = BTreeMap::new();
            programs.insert(
                p(0),
                script(r0, vec![w(1), w(2), w(3), w(4), OpKind::Audit, OpKind::Audit]),
            );
            programs.insert(p(1), script(r0, vec![OpKind::Read; 4]));
            programs.insert(p(2), script(r0, vec![OpKind::Audit, OpKind::Audit]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A6 => {
            let config = RegisterConfig::new(
                r0,
                tag,
                p(0),
                [p(1), p(2)],
                [p(0), p(1)],
                Value::Int(7),
            );
            let mut programs = BTreeMap::new();
            programs.insert(
                p(0),
                script(r0, vec![w(1), w(2), w(3), w(4), OpKind::Audit]),
            );
            programs.insert(
                p(1),
                script(r0, vec![OpKind::Read, OpKind::Read, OpKind::Read, OpKind::Audit]),
            );
            programs.insert(p(2), script(r0, vec![OpKind::Read; 3]));
            Workload::new(vec![config], programs)
        }
        AlgorithmTag::A7 => {
            let config = RegisterConfig::new(
                r0,
                tag,
                p(0),
                [p(1), p(2)],
                [p(0), p(3)],
                Value::Bottom,
            );
            let mut programs = BTreeMap::new();
            programs.insert(p(0), script(r0, vec![w(1), w(2), w(3), w(4)]));
            programs.insert(p(1), script(r0, vec![OpKind::Read; 3]));
            programs.insert(p(2), script(r0, vec![OpKind::Read; 3]));
            programs.insert(p(3), script(r0, vec![OpKind::Audit, OpKind::Audit]));
            Workload::new(vec![config], programs)
        }
    }
}
