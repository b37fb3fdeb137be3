use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use worms::conversion::PackingMode;
use worms::gen::{find_three_partition, generate_random, GeneratorSpec, LeafLaw, ThreePartitionGadget};
use worms::oracle::SearchBudget;
use worms::pipeline::{metrics_row, run_algorithm, Algorithm, PipelineOptions, RunOutput, METRICS_HEADER};
use worms::reduction::{reduce_with, ReductionOptions};
use worms::{schedule_cost, validate_schedule, Schedule, WormsError, WormsInstance};

mod cache;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Worms(#[from] WormsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Worms(WormsError::Internal(_)) => 1,
            CliError::Worms(WormsError::NotOverfilling(_) | WormsError::IncompleteSchedule(_)) => 1,
            CliError::Worms(WormsError::BudgetExceeded(_)) => 3,
            CliError::Worms(_) | CliError::Io { .. } => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "worms", version, about = "Schedule root-to-leaf message flushes in write-optimized trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance on a complete tree.
    Generate(GenerateArgs),
    /// Build the 3-partition hardness gadget.
    Gadget(GadgetArgs),
    /// Solve an instance and print metrics.
    Solve(SolveArgs),
    /// Check a schedule against an instance.
    Validate(ValidateArgs),
    /// Print the total completion cost of an overfilling schedule.
    Cost(CostArgs),
    /// Emit the out-forest scheduling instance for inspection.
    Reduce(ReduceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    fanout: usize,
    /// uniform:LO..HI, zipf:S:MAX, constant:C or scatter:TOTAL
    #[arg(long, value_parser = parse_law)]
    law: LeafLaw,
    #[arg(short = 'B', long = "block", default_value_t = 12)]
    b: usize,
    #[arg(short = 'P', long = "parallelism", default_value_t = 1)]
    p: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GadgetArgs {
    /// Comma-separated item sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    items: Vec<u64>,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the derived constants here as JSON.
    #[arg(long)]
    constants: Option<PathBuf>,
    /// Write the canonical schedule here when a partition exists.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = SearchBudget::default().max_messages)]
    max_messages: usize,
    #[arg(long, default_value_t = SearchBudget::default().max_tasks)]
    max_tasks: usize,
    #[arg(long, default_value_t = SearchBudget::default().max_steps)]
    max_steps: usize,
    #[arg(long, default_value_t = SearchBudget::default().max_states)]
    max_states: usize,
}

impl BudgetArgs {
    fn budget(&self) -> SearchBudget {
        SearchBudget {
            max_messages: self.max_messages,
            max_tasks: self.max_tasks,
            max_steps: self.max_steps,
            max_states: self.max_states,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "pipeline", conflicts_with = "all")]
    algorithm: Algorithm,
    /// Run every algorithm; brute is skipped when over budget.
    #[arg(long)]
    all: bool,
    /// Schedule file, or a directory of `<algorithm>.json` with --all.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics CSV path; defaults to stdout.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Per-message completion CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump the pipeline's intermediate schedules and mapping here.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long, default_value = "schedule-dependent")]
    packing_mode: PackingMode,
    /// Leave out subtree tasks that carry none of a set's messages.
    #[arg(long)]
    prune: bool,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Cache brute-force optima here, keyed by instance hash.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Report wall time as zero so output is byte-stable.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct ValidateArgs {
    instance: PathBuf,
    schedule: PathBuf,
    /// Full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-message completion CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    instance: PathBuf,
    schedule: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Task-to-flush mapping, one line per task.
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    prune: bool,
}

fn parse_law(s: &str) -> Result<LeafLaw, String> {
    let (kind, rest) = s.split_once(':').ok_or("expected KIND:PARAMS")?;
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("`{x}`: {e}"));
    match kind {
        "uniform" => {
            let (lo, hi) = rest.split_once("..").ok_or("uniform takes LO..HI")?;
            Ok(LeafLaw::Uniform { lo: num(lo)?, hi: num(hi)? })
        }
        "zipf" => {
            let (s, max) = rest.split_once(':').ok_or("zipf takes S:MAX")?;
            let s = s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?;
            Ok(LeafLaw::Zipf { s, max: num(max)? })
        }
        "constant" => Ok(LeafLaw::Constant { c: num(rest)? }),
        "scatter" => Ok(LeafLaw::Scatter { total: num(rest)? }),
        _ => Err(format!("unknown law `{kind}`")),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

/// Writes to `path`, or stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn load_instance(path: &Path) -> CliResult<WormsInstance> {
    Ok(WormsInstance::from_json(&read(path)?)?)
}

fn load_schedule(path: &Path) -> CliResult<Schedule> {
    Ok(Schedule::from_json(&read(path)?)?)
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let spec = GeneratorSpec { seed: a.seed, height: a.height, fanout: a.fanout, law: a.law, b: a.b, p: a.p };
    let inst = generate_random(&spec)?;
    emit(a.out.as_deref(), &with_newline(inst.to_json()))
}

fn gadget(a: GadgetArgs) -> CliResult<()> {
    let g = ThreePartitionGadget::new(&a.items, a.k)?;
    let inst = g.instance()?;
    emit(a.out.as_deref(), &with_newline(inst.to_json()))?;
    let constants = with_newline(serde_json::to_string_pretty(&g).expect("gadget serializes"));
    match &a.constants {
        Some(p) => write(p, &constants)?,
        None => eprint!("{constants}"),
    }
    if let Some(p) = &a.schedule {
        let triples = find_three_partition(&a.items, a.k)
            .ok_or_else(|| CliError::Invalid("the items admit no 3-partition".into()))?;
        write(p, &with_newline(g.canonical_schedule(&triples).to_json()))?;
    }
    Ok(())
}

fn dump_trace(dir: &Path, inst: &WormsInstance, run: &RunOutput) -> CliResult<()> {
    let Some(t) = &run.trace else { return Ok(()) };
    let c = &t.conversion;
    write(&dir.join("outtree.json"), &with_newline(t.outtree.to_json()))?;
    write(&dir.join("task_schedule.json"), &with_newline(t.sigma.to_json()))?;
    write(&dir.join("mapping.txt"), &t.mapping.to_text())?;
    write(&dir.join("lifted.json"), &with_newline(t.lifted.to_json()))?;
    write(&dir.join("packing.txt"), &c.packing.debug_dump())?;
    write(&dir.join("u.json"), &with_newline(c.upper.to_schedule().to_json()))?;
    write(&dir.join("l.json"), &with_newline(c.lower.to_schedule().to_json()))?;
    write(&dir.join("u_r.json"), &with_newline(c.upper_reserved.to_schedule().to_json()))?;
    write(&dir.join("s_hat.json"), &with_newline(c.schedule.to_json()))?;
    write(&dir.join("trace.csv"), &c.trace_csv(inst, &t.lifted))
}

fn solve(a: SolveArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let budget = a.budget.budget();
    let opts = PipelineOptions { packing_mode: a.packing_mode, prune: a.prune, budget };
    let hash = inst.content_hash();
    let algorithms: Vec<Algorithm> = if a.all { Algorithm::ALL.to_vec() } else { vec![a.algorithm] };

    // the optimum is only attempted within budget; its absence just blanks
    // the ratio columns unless brute itself was requested
    let opt = match cache::optimum(&inst, &budget, a.cache_dir.as_deref()) {
        Ok(e) => Some(e),
        Err(WormsError::BudgetExceeded(_)) if a.all || a.algorithm != Algorithm::Brute => None,
        Err(e) => return Err(e.into()),
    };
    let runs = worms::batch::map(&algorithms, |&alg| -> CliResult<Option<RunOutput>> {
        if alg == Algorithm::Brute {
            let Some(e) = &opt else { return Ok(None) };
            let report = validate_schedule(&inst, &e.schedule);
            if !report.is_valid {
                return Err(CliError::Invalid("cached optimum does not validate".into()));
            }
            return Ok(Some(RunOutput { algorithm: alg, schedule: e.schedule.clone(), report, wall_ms: 0.0, trace: None }));
        }
        Ok(Some(run_algorithm(&inst, alg, &opts)?))
    });
    let runs: Vec<RunOutput> = runs.into_iter().collect::<CliResult<Vec<_>>>()?.into_iter().flatten().collect();

    let mut metrics = format!("{METRICS_HEADER}\n");
    for run in &runs {
        metrics.push_str(&metrics_row(&hash, run, opt.as_ref().map(|e| e.opt_cost), a.deterministic));
        metrics.push('\n');
    }
    if a.all {
        if let Some(dir) = &a.out {
            for run in &runs {
                write(&dir.join(format!("{}.json", run.algorithm)), &with_newline(run.schedule.to_json()))?;
            }
        }
    } else if let Some(p) = &a.out {
        write(p, &with_newline(runs[0].schedule.to_json()))?;
    }
    if let Some(p) = &a.report {
        let main = runs.iter().find(|r| r.algorithm == Algorithm::Pipeline).unwrap_or(&runs[0]);
        write(p, &main.report.to_csv())?;
    }
    if let Some(dir) = &a.trace_dir {
        for run in &runs {
            dump_trace(dir, &inst, run)?;
        }
    }
    if a.out.is_none() && !a.all {
        // the schedule owns stdout; metrics go to a file or stderr
        emit(None, &with_newline(runs[0].schedule.to_json()))?;
        match &a.metrics {
            Some(p) => write(p, &metrics),
            None => {
                eprint!("{metrics}");
                Ok(())
            }
        }
    } else {
        emit(a.metrics.as_deref(), &metrics)
    }
}

fn validate(a: ValidateArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let sched = load_schedule(&a.schedule)?;
    let r = validate_schedule(&inst, &sched);
    if let Some(p) = &a.report {
        write(p, &with_newline(r.to_json()))?;
    }
    if let Some(p) = &a.csv {
        write(p, &r.to_csv())?;
    }
    println!(
        "valid={} overfilling={} cost={} max_completion={} violations={}",
        r.is_valid,
        r.is_overfilling,
        r.total_cost,
        r.max_completion(),
        r.violations.len()
    );
    for v in r.violations.iter().take(20) {
        println!("  step {}: {}", v.step, v.reason);
    }
    if r.is_valid {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("schedule is not valid ({} violations)", r.violations.len())))
    }
}

fn cost(a: CostArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let sched = load_schedule(&a.schedule)?;
    println!("{}", schedule_cost(&inst, &sched)?);
    Ok(())
}

fn reduce(a: ReduceArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let (outtree, mapping) = reduce_with(&inst, ReductionOptions { prune: a.prune });
    emit(a.out.as_deref(), &with_newline(outtree.to_json()))?;
    if let Some(p) = &a.mapping {
        write(p, &mapping.to_text())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Gadget(a) => gadget(a),
        Command::Solve(a) => solve(a),
        Command::Validate(a) => validate(a),
        Command::Cost(a) => cost(a),
        Command::Reduce(a) => reduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
