use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use chase_escape::limits::{self, FinalQuantity, LimitLaw};
use chase_escape::montecarlo::{self, Count, EnsembleConfig, EnsembleSummary, Sampler};
use chase_escape::process::{exact_absorption_law, ProcessParams};
use chase_escape::verify::{self, Bound, Level};
use chase_escape::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "chase-escape", version, about = "Chase-escape process on complete graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample absorbed states, one row per replica.
    Simulate(SimulateArgs),
    /// Exact law of the absorbed state.
    Exact(ExactArgs),
    /// Evaluate a limiting distribution.
    Limits(LimitsArgs),
    /// Ensemble summaries over a grid of (lambda, n).
    Sweep(SweepArgs),
    /// Run the named verification checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = SamplerArg::Jump)]
    sampler: SamplerArg,
    /// Master seed; drawn from entropy and reported on stderr if absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "CHASE_ESCAPE_THREADS", default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    replicas: u64,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ExactArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct LimitsArgs {
    #[arg(long, value_enum)]
    law: LawArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    op: OpArg,
    /// Evaluation point (or probability level for `quantile`).
    #[arg(long)]
    at: Option<f64>,
    /// Moment order.
    #[arg(long)]
    s: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    lambda_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<u64>,
    #[arg(long)]
    replicas: u64,
    /// Also estimate the race frequency with this many draws per point.
    #[arg(long)]
    race_draws: Option<u64>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
    level: LevelArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "CHASE_ESCAPE_THREADS", default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Jump,
    Clocks,
    Poisson,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Jump => Sampler::JumpChain,
            SamplerArg::Clocks => Sampler::DirectClocks,
            SamplerArg::Poisson => Sampler::PoissonEmbedding,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LawArg {
    PoweredExp,
    Geometric,
    GeometricPositive,
    CriticalR,
    CriticalI,
    Compound,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OpArg {
    Cdf,
    Pdf,
    Quantile,
    Moment,
    TailAsymptote,
}

/// Exit status plus message.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) | Error::CapExceeded { .. } | Error::Domain(_) | Error::UndefinedRegime(_) => {
                Self::usage(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

/// A cell of an output row.
#[derive(Clone)]
enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // `Display` for f64 prints the shortest string that round-trips.
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    summary: Value,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
            summary: Value::Null,
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write(&self, output: &Output) -> Result<(), Failure> {
        let sink: Box<dyn Write> = if output.out.as_os_str() == "-" {
            Box::new(io::stdout().lock())
        } else {
            Box::new(File::create(&output.out).map_err(|e| {
                Failure::runtime(format!("cannot create {}: {e}", output.out.display()))
            })?)
        };
        let mut sink = BufWriter::new(sink);
        match output.format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(&mut sink);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                serde_json::to_writer(&mut sink, &json!({ "rows": rows, "summary": self.summary }))?;
                writeln!(sink)?;
            }
        }
        sink.flush()?;
        Ok(())
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn moment_json(summary: &EnsembleSummary, count: Count) -> Value {
    let m = summary.moment(count, 3.0);
    json!({ "mean": m.mean, "std_error": m.std_error, "ci_low": m.ci_low, "ci_high": m.ci_high })
}

fn summary_json(summary: &EnsembleSummary) -> Value {
    let lambda = summary.params.lambda();
    let scaled: Map<String, Value> = montecarlo::ScaledQuantity::ALL
        .iter()
        .filter(|q| q.applies_to(lambda))
        .filter_map(|q| {
            let (lo, hi) = summary.scaled_mean_ci(*q, 3.0).ok()?;
            Some((q.name().to_string(), json!({ "mean": 0.5 * (lo + hi), "ci_low": lo, "ci_high": hi })))
        })
        .collect();
    json!({
        "lambda": lambda,
        "n": summary.params.n(),
        "sampler": summary.sampler.as_str(),
        "replicas": summary.replicas,
        "susceptible_extinct": summary.susceptible_extinct,
        "infected_extinct": summary.infected_extinct,
        "extinction_frequency": summary.extinction_frequency(),
        "final_s": moment_json(summary, Count::S),
        "final_i": moment_json(summary, Count::I),
        "final_r": moment_json(summary, Count::R),
        "scaled": scaled,
        "ties": summary.ties,
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let params = ProcessParams::new(args.n, args.lambda)?;
    let sampler = Sampler::from(args.run.sampler);
    let config = EnsembleConfig {
        params,
        replicas: args.replicas,
        sampler,
        master_seed: resolve_seed(args.run.seed),
        workers: args.run.workers,
    };
    let records = montecarlo::simulate_records(&config)?;
    let mut table = Table::new(&[
        "lambda", "n", "replica", "final_s", "final_i", "final_r", "cause", "jumps", "time",
    ]);
    for (k, rec) in records.iter().enumerate() {
        table.push(vec![
            args.lambda.into(),
            args.n.into(),
            (k as u64).into(),
            rec.final_state.s.into(),
            rec.final_state.i.into(),
            rec.final_state.r.into(),
            rec.cause.as_str().into(),
            rec.jumps.into(),
            rec.time.into(),
        ]);
    }
    table.summary = summary_json(&EnsembleSummary::from_records(params, sampler, &records));
    table.write(&args.output)
}

fn cmd_exact(args: &ExactArgs) -> Result<(), Failure> {
    let params = ProcessParams::new(args.n, args.lambda)?;
    let law = exact_absorption_law(&params)?;
    let mut table = Table::new(&["kind", "s", "i", "r", "probability"]);
    for (st, p) in &law.support {
        table.push(vec!["state".into(), st.s.into(), st.i.into(), st.r.into(), (*p).into()]);
    }
    table.push(vec![
        "extinction_probability".into(),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        law.extinction_probability.into(),
    ]);
    table.summary = json!({
        "lambda": args.lambda,
        "n": args.n,
        "extinction_probability": law.extinction_probability,
        "total_mass": law.total_mass(),
    });
    table.write(&args.output)
}

fn cmd_limits(args: &LimitsArgs) -> Result<(), Failure> {
    let needs_lambda = matches!(args.law, LawArg::PoweredExp | LawArg::Compound);
    let lambda = match (needs_lambda, args.lambda) {
        (true, None) => return Err(Failure::usage("--lambda is required for this law")),
        (_, l) => l,
    };
    let law = match args.law {
        LawArg::PoweredExp => LimitLaw::powered_exponential(lambda.unwrap_or_default())?,
        LawArg::Compound => LimitLaw::compound_exponential(lambda.unwrap_or_default())?,
        LawArg::Geometric => LimitLaw::ShiftedGeometric,
        LawArg::GeometricPositive => LimitLaw::PositiveGeometric,
        LawArg::CriticalR => LimitLaw::CriticalRMixture,
        LawArg::CriticalI => LimitLaw::CriticalILaw,
    };
    let point = |name: &str, v: Option<f64>| v.ok_or_else(|| Failure::usage(format!("--{name} is required for this op")));
    let (op, at, value) = match args.op {
        OpArg::Cdf => {
            let x = point("at", args.at)?;
            ("cdf", x, law.cdf(x)?)
        }
        OpArg::Pdf => {
            let x = point("at", args.at)?;
            ("pdf", x, law.density(x)?)
        }
        OpArg::Quantile => {
            let q = point("at", args.at)?;
            ("quantile", q, law.quantile(q)?)
        }
        OpArg::Moment if args.law == LawArg::Compound => {
            let s = point("s", args.s)?;
            ("moment", s, limits::compound_exponential_moment(s, lambda.unwrap_or_default())?)
        }
        OpArg::TailAsymptote if args.law == LawArg::Compound => {
            let u = point("at", args.at)?;
            ("tail-asymptote", u, limits::compound_exponential_tail_asymptote(u, lambda.unwrap_or_default())?)
        }
        OpArg::Moment | OpArg::TailAsymptote => {
            return Err(Failure::usage(format!(
                "operation {:?} is not supported for law {}",
                args.op.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
                law.name()
            )))
        }
    };
    let mut table = Table::new(&["law", "lambda", "op", "at", "value"]);
    table.push(vec![law.name().into(), lambda.into(), op.into(), at.into(), value.into()]);
    table.write(&args.output)
}

fn asymptote(quantity: FinalQuantity, lambda: f64, n: u64) -> Option<f64> {
    limits::expected_final_count_asymptote(quantity, lambda, n).ok().map(|a| a.value)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.replicas == 0 {
        return Err(Failure::usage("--replicas must be at least 1"));
    }
    let grid: Vec<(f64, u64)> = args
        .lambda_list
        .iter()
        .flat_map(|&l| args.n_list.iter().map(move |&n| (l, n)))
        .collect();
    // Template parameters only carry defaults; each grid point sets its own.
    let template = EnsembleConfig {
        params: ProcessParams::new(1, 1.0)?,
        replicas: args.replicas,
        sampler: args.run.sampler.into(),
        master_seed: resolve_seed(args.run.seed),
        workers: args.run.workers,
    };
    let rows = montecarlo::sweep(&grid, &template, args.race_draws)?;
    let mut columns = vec![
        "lambda",
        "n",
        "seed",
        "status",
        "replicas",
        "extinction_frequency",
        "mean_final_s",
        "mean_final_i",
        "mean_final_r",
        "se_final_s",
        "se_final_i",
        "se_final_r",
        "race_frequency",
    ];
    let asym_columns = [
        (FinalQuantity::S, "asymptote_E_S"),
        (FinalQuantity::RDeficit, "asymptote_N_minus_E_R"),
        (FinalQuantity::I, "asymptote_E_I"),
        (FinalQuantity::IDeficit, "asymptote_N_minus_E_I"),
        (FinalQuantity::R, "asymptote_E_R"),
    ];
    columns.extend(asym_columns.iter().map(|(_, c)| *c));
    let mut table = Table::new(&columns);
    let mut failures = 0;
    let mut summaries = Vec::new();
    for row in &rows {
        let mut cells: Vec<Cell> = vec![row.lambda.into(), row.n.into(), row.seed.into()];
        match &row.summary {
            Ok(s) => {
                let (ms, mi, mr) = (s.moment(Count::S, 0.0), s.moment(Count::I, 0.0), s.moment(Count::R, 0.0));
                cells.extend([
                    "ok".into(),
                    s.replicas.into(),
                    s.extinction_frequency().into(),
                    ms.mean.into(),
                    mi.mean.into(),
                    mr.mean.into(),
                    ms.std_error.into(),
                    mi.std_error.into(),
                    mr.std_error.into(),
                ]);
                summaries.push(summary_json(s));
            }
            Err(e) => {
                failures += 1;
                eprintln!("lambda={} n={}: {e}", row.lambda, row.n);
                cells.push("error".into());
                cells.extend(std::iter::repeat_n(Cell::Empty, 8));
                summaries.push(json!({ "lambda": row.lambda, "n": row.n, "error": e }));
            }
        }
        let race = row.race_frequency.as_ref().and_then(|r| r.as_ref().ok().copied());
        cells.push(race.into());
        for (q, _) in asym_columns {
            cells.push(asymptote(q, row.lambda, row.n).into());
        }
        table.push(cells);
    }
    table.summary = Value::Array(summaries);
    table.write(&args.output)?;
    if failures > 0 {
        return Err(Failure::runtime(format!("{failures} grid point(s) failed")));
    }
    Ok(())
}

fn bound_columns(bound: &Option<Bound>) -> (Cell, Cell, Cell) {
    match bound {
        None => ("none".into(), Cell::Empty, Cell::Empty),
        Some(Bound::Below { limit }) => ("below".into(), Cell::Empty, (*limit).into()),
        Some(Bound::Above { limit }) => ("above".into(), (*limit).into(), Cell::Empty),
        Some(Bound::Within { center, tolerance }) => {
            ("within".into(), (center - tolerance).into(), (center + tolerance).into())
        }
        Some(Bound::Range { low, high }) => ("range".into(), (*low).into(), (*high).into()),
    }
}

/// Returns the number of failed checks.
fn cmd_verify(args: &VerifyArgs) -> Result<usize, Failure> {
    if args.workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    let level = match args.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let report = verify::verify_suite(level, resolve_seed(args.seed), args.workers);
    let mut table = Table::new(&["check", "status", "measured", "bound", "low", "high"]);
    for c in &report.checks {
        eprintln!("{c}");
        let (kind, lo, hi) = bound_columns(&c.bound);
        table.push(vec![
            c.name.as_str().into(),
            if c.passed { "pass" } else { "fail" }.into(),
            c.measured.into(),
            kind,
            lo,
            hi,
        ]);
    }
    table.summary = serde_json::to_value(&report)?;
    table.write(&args.output)?;
    Ok(report.failures())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Simulate(SimulateArgs { run, .. }) | Command::Sweep(SweepArgs { run, .. }) = &cli.command {
        if run.workers == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Exact(a) => cmd_exact(a).map(|_| 0),
        Command::Limits(a) => cmd_limits(a).map(|_| 0),
        Command::Sweep(a) => cmd_sweep(a).map(|_| 0),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(failed) => ExitCode::from(failed.min(125) as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
