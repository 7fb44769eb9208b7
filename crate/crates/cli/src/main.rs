//! Command-line frontend: run programs, slice executions, cross-check the
//! slicers, drive the benchmark harness, and dump analysis relations.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reslice_core::baselines::{self, ExecuteOnceSession};
use reslice_core::bench::{self, BenchConfig, ReportFormat};
use reslice_core::cfgdep;
use reslice_core::exec;
use reslice_core::minilang::{parse_program, Program};
use reslice_core::report::{self, BatchEntry, SliceReport};
use reslice_core::sda;
use reslice_core::slicer::{Criterion, OccurrenceSpec, SliceError, SliceMode, SliceSession};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_PROGRAM: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_NO_CRITERION: u8 = 4;
const EXIT_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(
    name = "reslice",
    about = "Dynamic slicing by targeted re-execution for the mini language",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Inline input: whitespace-separated integers.
    #[arg(long, conflicts_with = "input_file")]
    input: Option<String>,
    /// Input file of whitespace-separated integers; `-` reads stdin.
    #[arg(long)]
    input_file: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a program and print its output values.
    Run {
        program: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Dump the execution trace (one `proc:line#count [ctx]` per line)
        /// to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Slice one or more criteria and emit JSON reports.
    Slice {
        program: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Criterion `proc:line[#occurrence|#last]`; repeatable.
        #[arg(long = "criterion", required = true)]
        criteria: Vec<String>,
        /// ondemand-inter, ondemand-intra, execute-once, upfront-all or
        /// upfront-slice.
        #[arg(long, default_value = "ondemand-inter")]
        mode: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Slice with both the re-execution slicer and the trace-based one,
    /// reporting any difference.
    OracleCheck {
        program: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long = "criterion", required = true)]
        criterion: String,
    },
    /// Run a benchmark suite from a JSON config and emit a report.
    Bench {
        /// JSON file with family, sizes, seeds, modes, trials.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print analysis relations as text edge lists.
    Dump {
        program: PathBuf,
        /// Control flow graph arcs.
        #[arg(long)]
        cfg: bool,
        /// Control dependences (`controller -> dependent`).
        #[arg(long)]
        control: bool,
        /// Static data dependencies (`writer -> reader`).
        #[arg(long)]
        data: bool,
    },
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(dispatch(cli)),
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> u8 {
    match cli.command {
        Command::Run {
            program,
            input,
            trace,
        } => cmd_run(&program, &input, trace),
        Command::Slice {
            program,
            input,
            criteria,
            mode,
            output,
        } => cmd_slice(&program, &input, &criteria, &mode, output.as_deref()),
        Command::OracleCheck {
            program,
            input,
            criterion,
        } => cmd_oracle_check(&program, &input, &criterion),
        Command::Bench {
            config,
            format,
            output,
        } => cmd_bench(&config, &format, output.as_deref()),
        Command::Dump {
            program,
            cfg,
            control,
            data,
        } => cmd_dump(&program, cfg, control, data),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> u8 {
    eprintln!("reslice: {message}");
    code
}

fn load_program(path: &Path) -> Result<Program, u8> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| fail(EXIT_PROGRAM, e))
}

fn load_input(args: &InputArgs) -> Result<Vec<i64>, u8> {
    let text = match (&args.input, &args.input_file) {
        (Some(inline), _) => inline.clone(),
        (None, Some(path)) if path == "-" => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| fail(EXIT_USAGE, format!("cannot read stdin: {e}")))?;
            buf
        }
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| fail(EXIT_USAGE, format!("cannot read {path}: {e}")))?,
        (None, None) => String::new(),
    };
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<i64>()
                .map_err(|_| fail(EXIT_USAGE, format!("bad input integer: {tok}")))
        })
        .collect()
}

/// `proc:line[#occurrence|#last]`, defaulting to the last occurrence.
fn parse_criterion(program: &Program, spec: &str) -> Result<Criterion, u8> {
    let (loc, occ) = match spec.split_once('#') {
        Some((loc, occ)) => (loc, Some(occ)),
        None => (spec, None),
    };
    let (proc_name, line) = loc
        .split_once(':')
        .ok_or_else(|| fail(EXIT_USAGE, format!("criterion `{spec}` is not proc:line")))?;
    let line: u32 = line
        .parse()
        .map_err(|_| fail(EXIT_USAGE, format!("bad line in criterion `{spec}`")))?;
    let node = program
        .node_by_label(proc_name, line)
        .ok_or_else(|| fail(EXIT_PROGRAM, format!("no node at {proc_name}:{line}")))?;
    let occurrence = match occ {
        None | Some("last") => OccurrenceSpec::Last,
        Some(q) => OccurrenceSpec::Nth(
            q.parse()
                .map_err(|_| fail(EXIT_USAGE, format!("bad occurrence in criterion `{spec}`")))?,
        ),
    };
    Ok(Criterion { node, occurrence })
}

fn slice_error_code(e: &SliceError) -> u8 {
    match e {
        SliceError::CriterionNeverExecuted(_) => EXIT_NO_CRITERION,
        SliceError::Exec(_) => EXIT_RUNTIME,
        SliceError::CallsNotSupported => EXIT_USAGE,
        SliceError::InlineBudgetExceeded { .. } | SliceError::InlineUnsupported(_) => EXIT_USAGE,
    }
}

fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os("RESLICE_OUT_DIR") {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_output(output: Option<&Path>, content: &str) -> Result<(), u8> {
    match output {
        Some(path) => {
            let path = resolve_output(path);
            fs::write(&path, content)
                .map_err(|e| fail(EXIT_USAGE, format!("cannot write {}: {e}", path.display())))
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_run(path: &Path, input: &InputArgs, trace: bool) -> u8 {
    let program = match load_program(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let input = match load_input(input) {
        Ok(i) => i,
        Err(code) => return code,
    };
    match exec::run(&program, &input) {
        Ok(outcome) => {
            for v in &outcome.printed {
                println!("{v}");
            }
            if trace {
                match exec::record_trace(&program, &input, None) {
                    Ok(t) => eprint!("{}", t.dump(&program)),
                    Err(e) => return fail(EXIT_RUNTIME, e),
                }
            }
            EXIT_OK
        }
        Err(e) => fail(EXIT_RUNTIME, runtime_message(&program, &e)),
    }
}

fn runtime_message(program: &Program, e: &exec::ExecError) -> String {
    match e {
        exec::ExecError::Runtime { kind, occurrence } => format!(
            "runtime error: {kind} at {}#{}",
            program.node_label(occurrence.node),
            occurrence.count
        ),
        other => other.to_string(),
    }
}

fn cmd_slice(
    path: &Path,
    input_args: &InputArgs,
    criteria_specs: &[String],
    mode: &str,
    output: Option<&Path>,
) -> u8 {
    let program = match load_program(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let input = match load_input(input_args) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let mode = match SliceMode::parse(mode) {
        Some(m) => m,
        None => return fail(EXIT_USAGE, format!("unknown mode `{mode}`")),
    };
    let mut criteria = Vec::new();
    for spec in criteria_specs {
        match parse_criterion(&program, spec) {
            Ok(c) => criteria.push(c),
            Err(code) => return code,
        }
    }

    let session = SliceSession::new(&program);
    let single = criteria.len() == 1;
    let mut worst: u8 = EXIT_OK;
    let mut entries: Vec<serde_json::Value> = Vec::new();
    let mut single_report: Option<SliceReport> = None;

    let results: Vec<(String, Result<SliceReport, SliceError>)> =
        if mode == SliceMode::OndemandInter && criteria.len() > 1 {
            // shared occurrence-counting pre-run
            session
                .batch_slice(&input, &criteria)
                .into_iter()
                .zip(criteria.iter())
                .map(|(res, c)| {
                    (
                        bench::criterion_spec_label(&program, c),
                        res.map(|r| report::slice_report(&program, &r)),
                    )
                })
                .collect()
        } else {
            criteria
                .iter()
                .map(|c| {
                    (
                        bench::criterion_spec_label(&program, c),
                        run_mode(&session, &input, c, mode),
                    )
                })
                .collect()
        };

    for (label, result) in results {
        match result {
            Ok(rep) => {
                if single {
                    single_report = Some(rep);
                } else {
                    let entry = BatchEntry {
                        criterion: label,
                        report: rep,
                    };
                    entries.push(serde_json::to_value(entry).expect("report serializes"));
                }
            }
            Err(e) => {
                let code = slice_error_code(&e);
                if worst == EXIT_OK {
                    worst = code;
                }
                eprintln!("reslice: {label}: {e}");
                if !single {
                    entries.push(serde_json::json!({
                        "criterion": label,
                        "error": e.to_string(),
                    }));
                }
            }
        }
    }

    let rendered = if single {
        match single_report {
            Some(rep) => serde_json::to_string_pretty(&rep).expect("report serializes"),
            None => return worst,
        }
    } else {
        serde_json::to_string_pretty(&entries).expect("reports serialize")
    };
    if let Err(code) = write_output(output, &rendered) {
        return code;
    }
    worst
}

fn run_mode(
    session: &SliceSession,
    input: &[i64],
    criterion: &Criterion,
    mode: SliceMode,
) -> Result<SliceReport, SliceError> {
    match mode {
        SliceMode::OndemandInter => {
            let r = session.slice_inter(input, criterion)?;
            Ok(report::slice_report(session.program, &r))
        }
        SliceMode::OndemandIntra => {
            let r = session.slice_intra(input, criterion)?;
            Ok(report::slice_report(session.program, &r))
        }
        SliceMode::ExecuteOnce => {
            let eo = ExecuteOnceSession::new(session, input);
            let r = eo.slice(criterion)?;
            Ok(report::slice_report(session.program, &r))
        }
        SliceMode::UpfrontAll => {
            let rep = baselines::upfront_all_session(session, input, criterion)?;
            Ok(report::corroboration_report(
                session.program,
                &session.deps,
                &rep,
                session.deps.data.iter().copied(),
            ))
        }
        SliceMode::UpfrontSlice => {
            let rep = baselines::upfront_static_slice_session(session, input, criterion)?;
            let in_slice = sda::static_slice(session.program, &session.deps, rep.criterion.node);
            let targeted: Vec<_> = session
                .deps
                .data
                .iter()
                .filter(|(w, r)| in_slice.contains(w) && in_slice.contains(r))
                .copied()
                .collect();
            Ok(report::corroboration_report(
                session.program,
                &session.deps,
                &rep,
                targeted,
            ))
        }
    }
}

fn cmd_oracle_check(path: &Path, input_args: &InputArgs, criterion_spec: &str) -> u8 {
    let program = match load_program(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let input = match load_input(input_args) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let criterion = match parse_criterion(&program, criterion_spec) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let session = SliceSession::new(&program);
    let inter = match session.slice_inter(&input, &criterion) {
        Ok(r) => r,
        Err(e) => return fail(slice_error_code(&e), e),
    };
    let eo = match ExecuteOnceSession::new(&session, &input).slice(&criterion) {
        Ok(r) => r,
        Err(e) => return fail(slice_error_code(&e), e),
    };
    let (only_inter, only_eo) = baselines::slice_diff(&inter.slice, &eo.slice);
    println!(
        "ondemand-inter: {}",
        baselines::labels(&program, &inter.slice).join(" ")
    );
    println!(
        "execute-once:   {}",
        baselines::labels(&program, &eo.slice).join(" ")
    );
    if only_inter.is_empty() && only_eo.is_empty() {
        println!("slices agree");
        EXIT_OK
    } else {
        println!(
            "only ondemand-inter: {}",
            baselines::labels(&program, &only_inter).join(" ")
        );
        println!(
            "only execute-once:   {}",
            baselines::labels(&program, &only_eo).join(" ")
        );
        EXIT_MISMATCH
    }
}

fn cmd_bench(config_path: &Path, format: &str, output: Option<&Path>) -> u8 {
    let format = match format {
        "csv" => ReportFormat::Csv,
        "json" => ReportFormat::Json,
        other => return fail(EXIT_USAGE, format!("unknown format `{other}`")),
    };
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            return fail(
                EXIT_USAGE,
                format!("cannot read {}: {e}", config_path.display()),
            )
        }
    };
    let config: BenchConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, format!("bad bench config: {e}")),
    };
    let records = match bench::run_suite(&config) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let mut buf = Vec::new();
    if let Err(e) = bench::emit_report(&records, format, &mut buf) {
        return fail(EXIT_USAGE, e);
    }
    let content = String::from_utf8(buf).expect("reports are utf-8");
    match write_output(output, content.trim_end()) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn cmd_dump(path: &Path, cfg: bool, control: bool, data: bool) -> u8 {
    let program = match load_program(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let all = !(cfg || control || data);
    let mut sections: Vec<String> = Vec::new();
    if cfg || all {
        let mut lines = Vec::new();
        for (i, proc) in program.procedures.iter().enumerate() {
            lines.push(cfgdep::dump_cfg(&program, i, &cfgdep::build_cfg(proc)));
        }
        sections.push(format!("# cfg\n{}", lines.join("\n")));
    }
    let deps = sda::static_data_deps(&program);
    if control || all {
        sections.push(format!(
            "# control\n{}",
            cfgdep::dump_control(&program, &deps.control)
        ));
    }
    if data || all {
        sections.push(format!("# data\n{}", sda::dump_data(&program, &deps)));
    }
    println!("{}", sections.join("\n"));
    EXIT_OK
}
