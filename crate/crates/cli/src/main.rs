use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pisie::compile::{run_compiled_intermediate_with, run_compiled_object, CompileError};
use pisie::engine::{result_of, run_direct, target_projection, EngineConfig, TargetProjection, DEFAULT_FUEL};
use pisie::inseq::{parse_program, render_program, validate, InstructionSequence};
use pisie::inseqex::{expand, parse_inseqex, run_fragmented, ExpansionOutcome, FragmentedRuns, Inseqex, JitError, DEFAULT_BOUND};
use pisie::interp::{generate_interpreter, EncodingLayout, InterpError, Interpreter, LayoutFile};
use pisie::mechanism::{certify, report, CertifyError, ClassifyError, PagingMode, Sample};
use pisie::run::Run;
use pisie::service::{FamilyFile, ServiceFamily};
use pisie::trace::{load_store, read_trace, write_trace};

#[derive(Parser)]
#[command(name = "pisie", version, about = "Run, compare and classify instruction sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Direct,
    Interpret,
    CompileObject,
    CompileIntermediate,
    Fragment,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Paging {
    Hardware,
    CodeControlled,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Encoding layout (.layout.json) for interpret and compile-intermediate.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Use this interpreter program instead of generating one.
    #[arg(long)]
    interpreter: Option<PathBuf>,
    /// Instructions materialized at a time in fragment mode.
    #[arg(long)]
    window: Option<usize>,
    /// Refuse fragment runs of expressions longer than this.
    #[arg(long)]
    bound: Option<u128>,
    /// Step budget; defaults to $PISIE_FUEL or 100000.
    #[arg(long)]
    fuel: Option<u64>,
    #[arg(long)]
    cycle_detection: bool,
    /// Keep only this many instructions loaded, paging the rest.
    #[arg(long)]
    loaded_window: Option<u64>,
    #[arg(long, value_enum, default_value = "hardware")]
    paging: Paging,
    /// Record target actions without applying them.
    #[arg(long)]
    simulate: bool,
    /// Canonicalize co-target actions before running.
    #[arg(long)]
    reorder: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Put a program into effect and write its trace.
    Run {
        program: PathBuf,
        family: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Where to write the subject trace; auxiliary runs go alongside.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a program under several modes and check target equivalence.
    Compare {
        program: PathBuf,
        family: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        modes: Vec<Mode>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Classify a traced run against a directory of traces.
    Classify { trace: PathBuf, store: PathBuf },
    /// Generate an interpreter for an interface and layout.
    GenInterp {
        /// Family file whose services the interpreter serves.
        #[arg(long)]
        interface: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Expand an instruction sequence expression.
    Expand {
        expression: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: u128,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a program against a family's interface.
    Validate { program: PathBuf, family: PathBuf },
}

/// A failed command: `Semantic` exits 1, `Usage` exits 2.
enum Failure {
    Semantic(String),
    Usage(String),
}

type CmdResult = Result<ExitCode, Failure>;

fn usage(e: impl fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<InstructionSequence, Failure> {
    parse_program(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_family(path: &Path) -> Result<ServiceFamily, Failure> {
    FamilyFile::parse(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_layout(path: &Path, fam: &ServiceFamily) -> Result<EncodingLayout, Failure> {
    let file: LayoutFile = serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    file.into_layout(fam.iface()).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn default_fuel() -> Result<u64, Failure> {
    match std::env::var("PISIE_FUEL") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("PISIE_FUEL is not a number: {v}"))),
        Err(_) => Ok(DEFAULT_FUEL),
    }
}

fn engine_config(o: &RunOpts) -> Result<EngineConfig, Failure> {
    Ok(EngineConfig {
        fuel: match o.fuel {
            Some(f) => f,
            None => default_fuel()?,
        },
        cycle_detection: o.cycle_detection,
        loaded_window: o.loaded_window,
        paging_mode: match o.paging {
            Paging::Hardware => PagingMode::Hardware,
            Paging::CodeControlled => PagingMode::CodeControlled,
        },
        simulation_mode: o.simulate,
        cotarget_reorder: o.reorder,
    })
}

fn interp_failure(e: InterpError) -> Failure {
    match e {
        InterpError::ProgramTooLong { .. } | InterpError::UnencodableInstruction { .. } => Failure::Semantic(e.to_string()),
        _ => usage(e),
    }
}

fn compile_failure(e: CompileError) -> Failure {
    match e {
        CompileError::Interp(i) => interp_failure(i),
        other => Failure::Semantic(other.to_string()),
    }
}

fn interpreter(fam: &ServiceFamily, o: &RunOpts) -> Result<Interpreter, Failure> {
    let path = o
        .layout
        .as_ref()
        .ok_or_else(|| usage("this mode needs --layout"))?;
    let layout = load_layout(path, fam)?;
    let mut interp = match &o.interpreter {
        Some(p) => Interpreter::from_program(load_program(p)?, fam.iface(), &layout),
        None => Interpreter::generate(fam.iface(), &layout),
    }
    .map_err(interp_failure)?;
    let sample = Sample::Random {
        n: pisie::interp::DEFAULT_CERTIFICATION_SAMPLE,
        seed: 0,
    };
    certify(&mut interp, &sample).map_err(|e| match e {
        CertifyError::Interp(i) => interp_failure(i),
        other => usage(other),
    })?;
    Ok(interp)
}

fn fragmented(e: &Inseqex, fam: &ServiceFamily, o: &RunOpts, cfg: &EngineConfig) -> Result<FragmentedRuns, Failure> {
    let w = o.window.ok_or_else(|| usage("fragment mode needs --window"))?;
    if let Some(b) = o.bound {
        if e.size() > b {
            return Err(Failure::Semantic(format!(
                "explosion: expansion has {} instructions, bound is {b}",
                e.size()
            )));
        }
    }
    run_fragmented(e, fam, w, cfg).map_err(|e| match e {
        JitError::TooLarge(_) => Failure::Semantic(e.to_string()),
        other => usage(other),
    })
}

/// The subject run of `mode` followed by its auxiliary runs, each with the
/// suffix its trace file gets.
fn run_mode(
    mode: Mode,
    src: &Path,
    fam: &ServiceFamily,
    o: &RunOpts,
    cfg: &EngineConfig,
) -> Result<(Run, Vec<(&'static str, Run)>), Failure> {
    if mode == Mode::Fragment {
        let text = read(src)?;
        let e = parse_inseqex(&text).map_err(|e| usage(format!("{}: {e}", src.display())))?;
        let r = fragmented(&e, fam, o, cfg)?;
        return Ok((r.subject, vec![("host", r.host)]));
    }
    let seq = load_program(src)?;
    Ok(match mode {
        Mode::Direct => (run_direct(&seq, fam, cfg), vec![]),
        Mode::Interpret => {
            let interp = interpreter(fam, o)?;
            let r = interp.run(&seq, fam, cfg).map_err(interp_failure)?;
            (r.subject, vec![("interpreter", r.interpreter)])
        }
        Mode::CompileObject => {
            let r = run_compiled_object(&seq, fam, cfg).map_err(compile_failure)?;
            (r.subject, vec![("object", r.object)])
        }
        Mode::CompileIntermediate => {
            let interp = interpreter(fam, o)?;
            let r = run_compiled_intermediate_with(&interp, &seq, fam, cfg).map_err(compile_failure)?;
            (
                r.subject,
                vec![("intermediate", r.intermediate), ("interpreter", r.interpreter)],
            )
        }
        Mode::Fragment => unreachable!("handled above"),
    })
}

/// `out.trace.json` or `out.json` with `role` spliced in before the extension.
fn aux_path(trace: &Path, role: &str) -> PathBuf {
    let name = trace.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".trace.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name);
    trace.with_file_name(format!("{stem}.{role}.trace.json"))
}

fn default_trace(program: &Path) -> PathBuf {
    let stem = program.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    PathBuf::from(format!("{stem}.trace.json"))
}

fn fmt_result(r: Option<bool>) -> &'static str {
    match r {
        Some(true) => "true",
        Some(false) => "false",
        None => "none",
    }
}

fn cmd_run(program: &Path, family: &Path, mode: Mode, trace: Option<PathBuf>, o: &RunOpts) -> CmdResult {
    let fam = load_family(family)?;
    let cfg = engine_config(o)?;
    let (subject, aux) = run_mode(mode, program, &fam, o, &cfg)?;
    let out = trace.unwrap_or_else(|| default_trace(program));
    write_trace(&subject, &out).map_err(usage)?;
    println!("status: {}", subject.status());
    println!("result: {}", fmt_result(result_of(&subject)));
    println!("trace: {}", out.display());
    for (role, r) in &aux {
        let p = aux_path(&out, role);
        write_trace(r, &p).map_err(usage)?;
        println!("trace: {}", p.display());
    }
    if subject.status().is_fault() {
        return Err(Failure::Semantic(format!("run ended with {}", subject.status())));
    }
    Ok(ExitCode::SUCCESS)
}

fn describe_difference(a: &TargetProjection, b: &TargetProjection) -> String {
    for (k, (x, y)) in a.actions.iter().zip(&b.actions).enumerate() {
        if x != y {
            return format!(
                "target action {}: {}.{} -> {} vs {}.{} -> {}",
                k + 1,
                x.0,
                x.1,
                x.2,
                y.0,
                y.1,
                y.2
            );
        }
    }
    if a.actions.len() != b.actions.len() {
        let (longer, n) = if a.actions.len() > b.actions.len() { ("first", b.actions.len()) } else { ("second", a.actions.len()) };
        return format!("{longer} run has more target actions after action {n}");
    }
    format!("status {} vs {}", a.status, b.status)
}

fn as_expression_file(program: &Path) -> Result<Inseqex, Failure> {
    let seq = load_program(program)?;
    Inseqex::seq(seq.instructions().iter().cloned().map(Inseqex::Prim))
        .ok_or_else(|| usage("fragment mode needs a non-empty program"))
}

fn cmd_compare(program: &Path, family: &Path, modes: &[Mode], o: &RunOpts) -> CmdResult {
    if modes.len() < 2 {
        return Err(usage("compare needs at least two modes"));
    }
    let fam = load_family(family)?;
    let cfg = engine_config(o)?;
    let mut runs = Vec::new();
    for &m in modes {
        let run = if m == Mode::Fragment {
            let e = as_expression_file(program)?;
            fragmented(&e, &fam, o, &cfg)?.subject
        } else {
            run_mode(m, program, &fam, o, &cfg)?.0
        };
        println!("{m}: {}", run.status());
        runs.push((m, target_projection(&run)));
    }
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            if runs[i].1 != runs[j].1 {
                println!("{} and {} differ: {}", runs[i].0, runs[j].0, describe_difference(&runs[i].1, &runs[j].1));
                return Ok(ExitCode::from(1));
            }
        }
    }
    println!("all modes target-equivalent");
    Ok(ExitCode::SUCCESS)
}

fn report_path(trace: &Path) -> PathBuf {
    let name = trace.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".trace.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name);
    trace.with_file_name(format!("{stem}.report.json"))
}

fn cmd_classify(trace: &Path, store_dir: &Path) -> CmdResult {
    let run = read_trace(trace).map_err(usage)?;
    let mut store = load_store(store_dir).map_err(usage)?;
    store.insert(run.clone());
    let rep = report(&run, &store).map_err(|e| match e {
        ClassifyError::DanglingProvenance(_) => usage(e),
    })?;
    let c = &rep.classification;
    println!(
        "pisie={} dpisie={} interp={} exec={} score={:+.2}",
        c.is_pisie, c.is_dpisie, c.is_interpretation, c.is_execution, rep.executionality.score
    );
    println!("wellfounded={}", rep.wellfounded.ok);
    for why in &c.rationale {
        println!("  {why}");
    }
    let out = report_path(trace);
    let json = serde_json::to_string_pretty(&rep).expect("reports serialize");
    fs::write(&out, json + "\n").map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!("report: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_interp(interface: &Path, layout: &Path, output: &Path) -> CmdResult {
    let fam = load_family(interface)?;
    let layout = load_layout(layout, &fam)?;
    let y = generate_interpreter(fam.iface(), &layout).map_err(interp_failure)?;
    fs::write(output, render_program(&y) + "\n").map_err(|e| usage(format!("{}: {e}", output.display())))?;
    println!("interpreter: {} instructions", y.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_expand(expression: &Path, bound: u128, output: Option<&Path>) -> CmdResult {
    let e = parse_inseqex(&read(expression)?).map_err(|e| usage(format!("{}: {e}", expression.display())))?;
    match expand(&e, bound).map_err(usage)? {
        ExpansionOutcome::Expanded { seq, size } => {
            let text = render_program(&seq);
            match output {
                Some(p) => {
                    fs::write(p, text + "\n").map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    println!("expanded: {size} instructions");
                }
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        ExpansionOutcome::Explosion { lower_bound, bound } => Err(Failure::Semantic(format!(
            "explosion: expansion has {lower_bound} instructions, bound is {bound}"
        ))),
    }
}

fn cmd_validate(program: &Path, family: &Path) -> CmdResult {
    let seq = load_program(program)?;
    let fam = load_family(family)?;
    let rep = validate(&seq, fam.iface());
    for i in &rep.issues {
        println!("{}: {}", i.position, i.kind.as_str());
    }
    if rep.ok {
        println!("ok");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            program,
            family,
            mode,
            trace,
            opts,
        } => cmd_run(program, family, *mode, trace.clone(), opts),
        Command::Compare {
            program,
            family,
            modes,
            opts,
        } => cmd_compare(program, family, modes, opts),
        Command::Classify { trace, store } => cmd_classify(trace, store),
        Command::GenInterp {
            interface,
            layout,
            output,
        } => cmd_gen_interp(interface, layout, output),
        Command::Expand {
            expression,
            bound,
            output,
        } => cmd_expand(expression, *bound, output.as_deref()),
        Command::Validate { program, family } => cmd_validate(program, family),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Semantic(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auxiliary_names() {
        assert_eq!(aux_path(Path::new("d/out.json"), "interpreter"), Path::new("d/out.interpreter.trace.json"));
        assert_eq!(aux_path(Path::new("out.trace.json"), "object"), Path::new("out.object.trace.json"));
        assert_eq!(report_path(Path::new("d/x.trace.json")), Path::new("d/x.report.json"));
    }
}
