//! Command-line front end for the contract ledger: rebuild ledgers from
//! event logs, query snapshots, render value lineage, run replication
//! scenarios, and lint operation files.
//!
//! Exit status is 0 on success, 1 when input is well-formed but rejected
//! (validation failure, unknown id, no quiescence), 2 when input cannot be
//! read or parsed at all. Parse diagnostics carry the file path plus the
//! line and column reported by the JSON parser.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ledgerkit::events::{lint, Operation};
use ledgerkit::ledger::{
    classify, operations_from_log, read_event_log, CaptureMode, ContractRecord, ContractStatus,
    Ledger,
};
use ledgerkit::replication::{Scenario, SimError, Simulation};
use ledgerkit::EconId;

#[derive(Parser)]
#[command(name = "ledgerkit", version, about = "Contract ledger tools: replay, query, lineage, replication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rebuild a ledger by validating and applying every operation in an
    /// event log.
    Replay(ReplayArgs),
    /// Print contract records from a ledger snapshot.
    State(StateArgs),
    /// Render the provenance of a contract from a ledger snapshot.
    Lineage(LineageArgs),
    /// Run a replication scenario to quiescence and report convergence.
    Simulate(SimulateArgs),
    /// Flag structural ambiguities in one operation file.
    Lint(LintArgs),
}

#[derive(Args)]
struct ReplayArgs {
    /// Newline-delimited JSON event log.
    log: PathBuf,
    /// Write the rebuilt snapshot here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep going past operations that fail validation.
    #[arg(long)]
    skip_invalid: bool,
    /// Provenance label style for state updates.
    #[arg(long, value_enum, default_value_t = CaptureArg::PerTransition)]
    capture: CaptureArg,
    /// Record value snapshots inside provenance nodes.
    #[arg(long)]
    history: bool,
    /// Stamp provenance nodes with logical timestamps.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Args)]
struct StateArgs {
    /// Ledger snapshot (JSON).
    snapshot: PathBuf,
    /// Show one contract instead of listing all of them.
    #[arg(long)]
    econ: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct LineageArgs {
    /// Ledger snapshot (JSON).
    snapshot: PathBuf,
    /// Economics id of the contract to inspect.
    #[arg(long)]
    econ: String,
    #[arg(long, value_enum, default_value_t = LineageFormat::Text)]
    format: LineageFormat,
    /// Render how the contract's economics came to be instead of the
    /// provenance of its quantity state.
    #[arg(long)]
    economics: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Write the convergence report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Give up if quiescence is not reached within this many steps.
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
}

#[derive(Args)]
struct LintArgs {
    /// Operation file (JSON).
    operation: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CaptureArg {
    /// One provenance label per state transition.
    PerTransition,
    /// Labels carry the operation name.
    PerSequence,
}

impl From<CaptureArg> for CaptureMode {
    fn from(v: CaptureArg) -> Self {
        match v {
            CaptureArg::PerTransition => CaptureMode::PerTransition,
            CaptureArg::PerSequence => CaptureMode::PerSequence,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LineageFormat {
    Text,
    Json,
    Dot,
}

/// A command failure carrying its exit code: 1 for rejected input, 2 for
/// input that could not be read at all.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Replay(args) => replay(args),
        Command::State(args) => state(args),
        Command::Lineage(args) => lineage(args),
        Command::Simulate(args) => simulate(args),
        Command::Lint(args) => lint_operation(args),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    let file =
        File::open(path).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

fn load_ledger(path: &Path) -> Result<Ledger, Failure> {
    Ledger::read_snapshot(open(path)?)
        .map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))
}

fn unknown_econ(econ: &EconId) -> Failure {
    Failure::validation(format!(
        "UnknownEconomics: no contract under economics id \"{econ}\""
    ))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize without error")
}

fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let entries = read_event_log(open(&args.log)?)
        .map_err(|e| Failure::malformed(format!("{}: {e}", args.log.display())))?;
    let ops = operations_from_log(&entries)
        .map_err(|e| Failure::malformed(format!("{}: {e}", args.log.display())))?;

    let mut ledger = Ledger::new()
        .with_capture_mode(args.capture.into())
        .with_history(args.history)
        .with_timestamps(args.timestamps);
    let mut rejected = 0usize;
    for (i, op) in ops.iter().enumerate() {
        let kind = classify(op).map(|k| k.name()).unwrap_or("unrecognized");
        match ledger.apply(op) {
            Ok(next) => {
                eprintln!("operation {i} [opId {}] {kind}: ok", op.op_id());
                ledger = next;
            }
            Err(report) => {
                eprintln!("operation {i} [opId {}] {kind}: rejected", op.op_id());
                for line in report.to_string().lines() {
                    eprintln!("  {line}");
                }
                if !args.skip_invalid {
                    return Err(Failure::validation(format!(
                        "operation {i} failed validation (--skip-invalid continues past rejections)"
                    )));
                }
                rejected += 1;
            }
        }
    }

    let total = ledger.contracts().count();
    let active = ledger
        .contracts()
        .filter(|r| r.status == ContractStatus::Active)
        .count();
    eprintln!(
        "{} applied, {} rejected; {} contracts ({} active, {} terminated)",
        ops.len() - rejected,
        rejected,
        total,
        active,
        total - active
    );
    write_snapshot(&ledger, args.out.as_deref())
}

fn write_snapshot(ledger: &Ledger, out: Option<&Path>) -> Result<(), Failure> {
    let emit = |w: &mut dyn Write| -> io::Result<()> {
        ledger.write_snapshot(&mut *w)?;
        w.write_all(b"\n")
    };
    match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            emit(&mut w)
                .and_then(|()| w.flush())
                .map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))
        }
        None => emit(&mut io::stdout().lock())
            .map_err(|e| Failure::malformed(format!("stdout: {e}"))),
    }
}

fn state(args: StateArgs) -> Result<(), Failure> {
    let ledger = load_ledger(&args.snapshot)?;
    match &args.econ {
        Some(id) => {
            let econ = EconId::new(id.clone());
            let record = ledger.contract(&econ).ok_or_else(|| unknown_econ(&econ))?;
            match args.format {
                OutputFormat::Text => print_record(record),
                OutputFormat::Json => println!("{}", to_json(record)),
            }
        }
        None => {
            let records: Vec<&ContractRecord> = ledger.contracts().collect();
            match args.format {
                OutputFormat::Text => {
                    for record in &records {
                        println!("{}", record_line(record));
                    }
                }
                OutputFormat::Json => println!("{}", to_json(&records)),
            }
        }
    }
    Ok(())
}

fn status_name(status: ContractStatus) -> &'static str {
    match status {
        ContractStatus::Active => "active",
        ContractStatus::Terminated => "terminated",
    }
}

fn amount_text(record: &ContractRecord) -> String {
    match record.quantity.quantity() {
        Some((q, unit)) => format!("{} {unit}", q.normalize()),
        None => "-".to_string(),
    }
}

fn parties_text(record: &ContractRecord) -> String {
    let ids: Vec<String> = record.parties.iter().map(u32::to_string).collect();
    format!("[{}]", ids.join(", "))
}

fn record_line(record: &ContractRecord) -> String {
    format!(
        "{}  {}  {}  parties {}",
        record.econ_id,
        status_name(record.status),
        amount_text(record),
        parties_text(record)
    )
}

fn print_record(record: &ContractRecord) {
    println!("econ:     {}", record.econ_id);
    println!("status:   {}", status_name(record.status));
    println!("quantity: {}", amount_text(record));
    println!("parties:  {}", parties_text(record));
    if !record.state.is_empty() {
        println!("state:");
        for entry in record.state.iter() {
            println!("  {} = {}", entry.key, entry.value.canonical_text());
        }
    }
}

fn lineage(args: LineageArgs) -> Result<(), Failure> {
    let ledger = load_ledger(&args.snapshot)?;
    let econ = EconId::new(args.econ.clone());
    let record = ledger.contract(&econ).ok_or_else(|| unknown_econ(&econ))?;
    if args.economics {
        match args.format {
            LineageFormat::Text => println!("{}", record.lineage.canonical_text()),
            LineageFormat::Json => println!("{}", to_json(&record.lineage)),
            LineageFormat::Dot => print!("{}", record.lineage.to_dot()),
        }
        return Ok(());
    }
    let value = record.state.lookup("quantity").ok_or_else(|| {
        Failure::validation(format!(
            "contract {econ} carries no quantity state; --economics renders the record lineage"
        ))
    })?;
    match args.format {
        LineageFormat::Text => println!("{}", value.canonical_text()),
        LineageFormat::Json => println!("{}", to_json(value)),
        LineageFormat::Dot => print!("{}", value.prov.to_dot()),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut scenario: Scenario = serde_json::from_reader(open(&args.scenario)?)
        .map_err(|e| Failure::malformed(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.config.seed = seed;
    }
    let mut sim = Simulation::from_scenario(scenario).map_err(sim_failure)?;
    let steps = sim.run_to_quiescence(args.max_steps).map_err(sim_failure)?;
    let report = sim.check_convergence();
    eprintln!(
        "quiescent after {steps} steps; {} shared object(s)",
        report.objects.len()
    );
    for object in &report.objects {
        let verdict = match object.converged {
            Some(true) => "converged",
            Some(false) => "diverged",
            None => "undecided",
        };
        let lag = object
            .lag
            .map_or_else(|| "-".to_string(), |l| l.to_string());
        eprintln!(
            "  {}: {verdict}; {} conflict(s), lag {lag}",
            object.object, object.conflicts
        );
    }
    let json = to_json(&report);
    match args.out.as_deref() {
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| Failure::malformed(format!("{}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidConfig(_) => Failure::malformed(e.to_string()),
        _ => Failure::validation(e.to_string()),
    }
}

fn lint_operation(args: LintArgs) -> Result<(), Failure> {
    let op: Operation = serde_json::from_reader(open(&args.operation)?)
        .map_err(|e| Failure::malformed(format!("{}: {e}", args.operation.display())))?;
    let warnings = lint(&op);
    if warnings.is_empty() {
        println!("opId {}: clean", op.op_id());
    } else {
        println!("opId {}: {} warning(s)", op.op_id(), warnings.len());
        for warning in &warnings {
            println!("  {warning}");
        }
    }
    Ok(())
}
