//! Command-line front end: run workloads, explore schedules, check recorded
//! histories, and drive consensus campaigns.
//!
//! Exit codes: 0 on success or acceptance, 1 when a property violation is
//! found, 2 on usage or parse errors.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use auditreg_core::checker::{check, AuditDefinition, Verdict};
use auditreg_core::consensus::{
    consensus2_executor, consensus_n_executor, outcomes2, outcomes_n, verify_consensus, Backing,
};
use auditreg_core::history::format::to_lines;
use auditreg_core::history::{History, ProcessId, Value};
use auditreg_core::registers::{AlgorithmTag, Mutation};
use auditreg_core::scheduler::workload::{demo_workload, parse_workload, random_workload, Workload};
use auditreg_core::scheduler::{
    explore_exhaustive, explore_random, run_round_robin, run_schedule, run_seeded, CrashMode,
    ExploreError, ExploreOptions, Schedule,
};

/// An algorithm tag, optionally naming a built-in fault-seeded variant.
#[derive(Debug, Clone, Copy)]
struct AlgorithmSpec {
    tag: AlgorithmTag,
    mutation: Mutation,
}

impl FromStr for AlgorithmSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(tag) = s.parse::<AlgorithmTag>() {
            return Ok(AlgorithmSpec {
                tag,
                mutation: Mutation::None,
            });
        }
        if let Ok(mutation) = s.parse::<Mutation>() {
            return Ok(AlgorithmSpec {
                tag: mutation.algorithm().expect("mutants name an algorithm"),
                mutation,
            });
        }
        let mutants: Vec<&str> = Mutation::all().iter().map(|m| m.name()).collect();
        Err(format!(
            "expected a3..a7 or one of the mutants: {}",
            mutants.join(", ")
        ))
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mutation {
            Mutation::None => write!(f, "{}", self.tag),
            m => write!(f, "{}", m.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DefinitionArg {
    #[value(name = "1")]
    Atomic,
    #[value(name = "2")]
    Regular,
}

impl From<DefinitionArg> for AuditDefinition {
    fn from(d: DefinitionArg) -> Self {
        match d {
            DefinitionArg::Atomic => AuditDefinition::Atomic,
            DefinitionArg::Regular => AuditDefinition::Regular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// The line-record history format.
    Line,
    /// A per-operation summary table.
    Text,
}

#[derive(Parser)]
#[command(
    name = "auditreg",
    about = "Auditable-register workbench: run, explore, check, consensus",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload under one schedule and print the history.
    Run(RunArgs),
    /// Explore schedules and pipe every history through the checker.
    Explore(ExploreArgs),
    /// Check a recorded history file against an audit definition.
    Check(CheckArgs),
    /// Run a consensus campaign and tally property violations.
    Consensus(ConsensusArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm (a3..a7) or a built-in mutant name.
    #[arg(long)]
    algorithm: AlgorithmSpec,
    /// `demo`, `demo12`, or a workload file path.
    #[arg(long, default_value = "demo")]
    script: String,
    /// Seed for a random schedule.
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit schedule: comma-separated process ids.
    #[arg(long, conflicts_with = "seed")]
    schedule: Option<String>,
    #[arg(long, value_enum, default_value = "line")]
    format: OutputFormat,
    /// Also dump primitive-level trace records.
    #[arg(long)]
    prims: bool,
}

#[derive(Args)]
struct ExploreArgs {
    /// Algorithm (a3..a7) or a built-in mutant name.
    #[arg(long)]
    algorithm: AlgorithmSpec,
    /// `demo`, `demo12`, or a workload file path.
    #[arg(long, default_value = "demo")]
    script: String,
    /// Enumerate every interleaving (default: seeded-random schedules).
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random schedules.
    #[arg(long, default_value_t = 1000)]
    max_schedules: u64,
    /// Inject single-process crashes at every step boundary (exhaustive only).
    #[arg(long)]
    crash: bool,
    #[arg(long, default_value_t = 512)]
    step_bound: usize,
    /// Audit definition; defaults to 2 for a7 and 1 otherwise.
    #[arg(long, value_enum)]
    definition: Option<DefinitionArg>,
}

#[derive(Args)]
struct CheckArgs {
    /// Audit definition to decide.
    #[arg(long, value_enum)]
    definition: DefinitionArg,
    /// History file in the line-record format.
    file: PathBuf,
}

#[derive(Args)]
struct ConsensusArgs {
    /// Two-process consensus over a pair of owned registers.
    #[arg(long, conflicts_with = "n")]
    two: bool,
    /// n-process consensus over n shared registers.
    #[arg(long)]
    n: Option<usize>,
    /// Proposed values, comma-separated; must be pairwise distinct.
    #[arg(long)]
    inputs: Option<String>,
    /// Enumerate every interleaving (two-process: with single-crash injection).
    #[arg(long)]
    exhaustive: bool,
    /// Disable crash injection in the exhaustive campaign.
    #[arg(long)]
    no_crash: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: u64,
    /// Register construction backing the two-process registers.
    #[arg(long, default_value = "a5")]
    backing: String,
}

struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            msg: msg.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Explore(args) => cmd_explore(args),
        Cmd::Check(args) => cmd_check(args),
        Cmd::Consensus(args) => cmd_consensus(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn load_workload(algorithm: &AlgorithmSpec, script: &str) -> Result<Workload, CliError> {
    let w = match script {
        "demo" => demo_workload(algorithm.tag),
        "demo12" => random_workload(algorithm.tag),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {path}: {e}")))?;
            let w = parse_workload(&text).map_err(|e| CliError::usage(e.to_string()))?;
            if w.registers[0].algorithm != algorithm.tag {
                return Err(CliError::usage(format!(
                    "workload file is for {}, but --algorithm says {}",
                    w.registers[0].algorithm, algorithm.tag
                )));
            }
            w
        }
    };
    Ok(w.with_mutation(algorithm.mutation))
}

fn render_text(h: &History) -> String {
    let mut out = String::new();
    for op in h.ops() {
        let arg = match &op.kind {
            auditreg_core::history::OpKind::Write(v) => format!("({v})"),
            _ => String::new(),
        };
        let result = match (&op.respond_seq, &op.result) {
            (Some(_), Some(r)) => match r {
                auditreg_core::history::OpResult::Wrote => "ok".to_string(),
                auditreg_core::history::OpResult::Read(v) => v.to_string(),
                auditreg_core::history::OpResult::Audit(s) => s.to_string(),
            },
            _ => "pending".to_string(),
        };
        let span = match op.respond_seq {
            Some(resp) => format!("@{}..{}", op.invoke_seq, resp),
            None => format!("@{}..", op.invoke_seq),
        };
        out.push_str(&format!(
            "{} {} {} {}{arg} {span} -> {result}\n",
            op.op_id,
            op.process,
            op.object,
            op.kind.label()
        ));
    }
    out
}

fn cmd_run(args: RunArgs) -> Result<u8, CliError> {
    let workload = load_workload(&args.algorithm, &args.script)?;
    let mut ex = workload
        .executor()
        .map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(schedule) = &args.schedule {
        let slots = schedule
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map(ProcessId)
                    .map_err(|_| CliError::usage(format!("bad process id `{t}` in --schedule")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        run_schedule(&mut ex, &Schedule::round_robin_of(slots))
            .map_err(|e| CliError::usage(e.to_string()))?;
    } else if let Some(seed) = args.seed {
        run_seeded(&mut ex, seed).map_err(|e| CliError::usage(e.to_string()))?;
    } else {
        run_round_robin(&mut ex).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let h = ex.history();
    match args.format {
        OutputFormat::Line => print!("{}", to_lines(&h)),
        OutputFormat::Text => print!("{}", render_text(&h)),
    }
    if args.prims {
        for (object, machine) in ex.machines() {
            print!("{}", auditreg_core::sim::trace_lines(*object, &machine.memory));
        }
    }
    Ok(0)
}

fn explore_error(e: ExploreError) -> CliError {
    CliError::usage(e.to_string())
}

fn cmd_explore(args: ExploreArgs) -> Result<u8, CliError> {
    let workload = load_workload(&args.algorithm, &args.script)?;
    let definition: AuditDefinition = match args.definition {
        Some(d) => d.into(),
        None if args.algorithm.tag == AlgorithmTag::A7 => AuditDefinition::Regular,
        None => AuditDefinition::Atomic,
    };
    let mut rejected: Option<(u64, History, Verdict)> = None;
    let mut visit = |index: u64, ex: &auditreg_core::scheduler::Executor<_>| {
        let h = ex.history();
        match check(&h, definition) {
            Ok(v) if v.accepted => ControlFlow::Continue(()),
            Ok(v) => {
                rejected = Some((index, h, v));
                ControlFlow::Break(())
            }
            Err(e) => {
                rejected = Some((
                    index,
                    h,
                    Verdict {
                        accepted: false,
                        witness: None,
                        completed_pending: Vec::new(),
                        violation: None,
                    },
                ));
                eprintln!("error: {e}");
                ControlFlow::Break(())
            }
        }
    };
    let stats = if args.exhaustive {
        let options = ExploreOptions {
            crash: if args.crash {
                CrashMode::SingleProcess
            } else {
                CrashMode::Off
            },
            step_bound: args.step_bound,
        };
        explore_exhaustive(|| workload.executor(), &options, &mut visit).map_err(explore_error)?
    } else {
        explore_random(|| workload.executor(), args.seed, args.max_schedules, &mut visit)
            .map_err(explore_error)?
    };
    match rejected {
        None => {
            println!(
                "schedules: {} accepted: {} definition: {definition}",
                stats.histories, stats.histories
            );
            Ok(0)
        }
        Some((index, h, verdict)) => {
            println!("rejected history (schedule {index}, {definition}):");
            print!("{}", to_lines(&h));
            if let Some(v) = &verdict.violation {
                println!("violation: {v}");
            }
            Ok(1)
        }
    }
}

fn cmd_check(args: CheckArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&args.file)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.file.display())))?;
    let h = auditreg_core::history::format::parse(&text)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let definition: AuditDefinition = args.definition.into();
    let verdict = check(&h, definition).map_err(|e| CliError::usage(e.to_string()))?;
    if verdict.accepted {
        println!("accepted ({definition})");
        if let Some(w) = &verdict.witness {
            println!("witness: {w}");
        }
        for (op, result) in &verdict.completed_pending {
            let shown = match result {
                auditreg_core::history::OpResult::Wrote => "ok".to_string(),
                auditreg_core::history::OpResult::Read(v) => v.to_string(),
                auditreg_core::history::OpResult::Audit(s) => s.to_string(),
            };
            println!("completed-pending: {op} -> {shown}");
        }
        Ok(0)
    } else {
        println!("rejected ({definition})");
        if let Some(v) = &verdict.violation {
            println!("violation: {v}");
        }
        Ok(1)
    }
}

fn parse_inputs(text: &str) -> Result<Vec<Value>, CliError> {
    let values: Vec<u64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("bad input value `{t}`")))
        })
        .collect::<Result<_, _>>()?;
    for (i, a) in values.iter().enumerate() {
        if values[i + 1..].contains(a) {
            return Err(CliError::usage("proposed inputs must be pairwise distinct"));
        }
    }
    Ok(values.into_iter().map(Value::Int).collect())
}

fn default_inputs(n: usize) -> Vec<Value> {
    // Distinct, with a non-monotone start so the maximum is not simply the
    // last proposer's value.
    (0..n)
        .map(|i| match i {
            0 => Value::Int(5),
            1 => Value::Int(3),
            _ => Value::Int(5 + 2 * i as u64),
        })
        .collect()
}

fn cmd_consensus(args: ConsensusArgs) -> Result<u8, CliError> {
    if !args.two && args.n.is_none() {
        return Err(CliError::usage("choose --two or --n <processes>"));
    }
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let n = if args.two { 2 } else { args.n.unwrap() };
    if n < 1 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let inputs = match &args.inputs {
        Some(text) => {
            let v = parse_inputs(text)?;
            if v.len() != n {
                return Err(CliError::usage(format!(
                    "{n} processes need {n} inputs, got {}",
                    v.len()
                )));
            }
            v
        }
        None => default_inputs(n),
    };
    let expect: BTreeMap<ProcessId, Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, v)| (ProcessId(i as u32), *v))
        .collect();

    let mut violations = 0u64;
    let schedules;
    if args.two {
        let backing = match args.backing.as_str() {
            "a3" => Backing::A3,
            "a5" => Backing::A5,
            other => return Err(CliError::usage(format!("unknown backing `{other}`"))),
        };
        let pair = (inputs[0], inputs[1]);
        let mut visit = |_: u64, ex: &auditreg_core::scheduler::Executor<_>| {
            if !verify_consensus(&expect, &outcomes2(ex)).ok() {
                violations += 1;
            }
            ControlFlow::Continue(())
        };
        let stats = if args.exhaustive {
            let options = ExploreOptions {
                crash: if args.no_crash {
                    CrashMode::Off
                } else {
                    CrashMode::SingleProcess
                },
                step_bound: 512,
            };
            explore_exhaustive(|| consensus2_executor(backing, pair), &options, &mut visit)
                .map_err(explore_error)?
        } else {
            explore_random(
                || consensus2_executor(backing, pair),
                args.seed,
                args.count,
                &mut visit,
            )
            .map_err(explore_error)?
        };
        schedules = stats.histories;
    } else {
        if args.exhaustive && n > 2 {
            return Err(CliError::usage(
                "exhaustive enumeration supports at most 2 processes; use --count with --seed",
            ));
        }
        let mut visit = |_: u64, ex: &auditreg_core::scheduler::Executor<_>| {
            if !verify_consensus(&expect, &outcomes_n(ex)).ok() {
                violations += 1;
            }
            ControlFlow::Continue(())
        };
        let stats = if args.exhaustive {
            explore_exhaustive(
                || consensus_n_executor(&inputs),
                &ExploreOptions::default(),
                &mut visit,
            )
            .map_err(explore_error)?
        } else {
            explore_random(
                || consensus_n_executor(&inputs),
                args.seed,
                args.count,
                &mut visit,
            )
            .map_err(explore_error)?
        };
        schedules = stats.histories;
    }
    println!("schedules: {schedules}");
    println!("violations: {violations}");
    Ok(if violations == 0 { 0 } else { 1 })
}
