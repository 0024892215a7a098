//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a run
//! errors, 2 on usage errors (bad flags, weights, or flux).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dynamics::{JumpKind, RateTable};
use crate::enumeration::{
    build_generator, check_connectivity, enumerate_states, log_partition_function, GeneratorMode,
};
use crate::error::Error;
use crate::lattice::{decode_state, encode_state, FluxPair, State, TorusGeometry, VertexType};
use crate::simulation::{run_replicas, Horizon, SimConfig, Summary, DEFAULT_BURN_IN};
use crate::verification::{run_checks, CheckName};
use crate::weights::{free_fermion_defect, weights_from_uq, WeightVector};

const DICTIONARY: &str = "\
Vertex types, in --weights order (e,x,se,wn,v,h):
  e   Empty     ∅    no arrows
  x   Cross     +    in from left and below, out right and top
  se  CornerSE  ⌐ₗ   in from below, out to the right
  wn  CornerWN  ⌐ᵣ   in from the left, out the top
  v   Vert      |    in from below, out the top
  h   Horiz     —    in from the left, out to the right

Jump kinds (pair at (x,y), (x+1,y)):
  R1 (CornerWN, Empty)   R2 (Vert, Empty)   R3 (CornerWN, CornerSE)  R4 (Vert, CornerSE)
  L1 (Horiz, CornerWN)   L2 (CornerSE, CornerWN)  L3 (Horiz, Cross)  L4 (CornerSE, Cross)

Dynamics subcommands need 1 <= k1 <= N-1 and 1 <= k2 <= M-1.";

#[derive(Debug, Parser)]
#[command(name = "sixvertex", version, about = "Six vertex model on a torus with column-jump dynamics", after_help = DICTIONARY)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate a flux class: size, partition function, optional generator dump.
    Enumerate(EnumerateArgs),
    /// Run exact verification checks; exit 0 iff all pass.
    Verify(VerifyArgs),
    /// Continuous-time simulation from the canonical state.
    Simulate(SimulateArgs),
    /// Print the eight jump rates for a weight vector.
    Rates(RatesArgs),
    /// Validate, flip or dualize a state file.
    StateTool(StateToolArgs),
}

#[derive(Debug, Args)]
struct TorusArgs {
    /// Torus width (columns).
    #[arg(long = "M")]
    m: usize,
    /// Torus height (rows).
    #[arg(long = "N")]
    n: usize,
    /// Horizontal arrows per vertical cut.
    #[arg(long)]
    k1: usize,
    /// Vertical arrows per horizontal cut.
    #[arg(long)]
    k2: usize,
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Six weights e,x,se,wn,v,h (default all ones).
    #[arg(long, conflicts_with = "uq", allow_hyphen_values = true)]
    weights: Option<String>,
    /// Weights from the (u, q) parametrization, given as u,q.
    #[arg(long, allow_hyphen_values = true)]
    uq: Option<String>,
    /// Accept non-positive weights from --uq.
    #[arg(long, requires = "uq")]
    unchecked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    RightOnly,
    LeftOnly,
}

impl From<ModeArg> for GeneratorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => GeneratorMode::Full,
            ModeArg::RightOnly => GeneratorMode::RightOnly,
            ModeArg::LeftOnly => GeneratorMode::LeftOnly,
        }
    }
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[command(flatten)]
    torus: TorusArgs,
    #[command(flatten)]
    weights: WeightArgs,
    /// Write the generator in Matrix Market format.
    #[arg(long)]
    dump_generator: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    torus: TorusArgs,
    #[command(flatten)]
    weights: WeightArgs,
    /// Comma-separated subset of checks (default: all applicable).
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    torus: TorusArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of events (default 100000 unless --time is given).
    #[arg(long, conflicts_with = "time")]
    events: Option<u64>,
    /// Total simulated time.
    #[arg(long)]
    time: Option<f64>,
    /// Fraction of the horizon discarded as burn-in.
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: f64,
    /// Events between density samples in CSV output.
    #[arg(long)]
    cadence: Option<u64>,
    /// Write a JSON-lines move log (first replica only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Independent replicas with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    /// Worker threads for replicas.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Action {
    Validate,
    Flip,
    Dual,
    Types,
}

#[derive(Debug, Args)]
struct StateToolArgs {
    /// State file (JSON with M, N, H, V); `-` reads stdin.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "validate")]
    action: Action,
    #[command(flatten)]
    output: OutputArgs,
}

/// Failure categories mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
    ChecksFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::FluxOutOfRange { .. }
            | Error::Parse { .. }
            | Error::NonPositiveWeight { .. }
            | Error::DegenerateDenominator
            | Error::OutOfRange(_)
            | Error::TooLarge(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs it against the process
/// stdout/stderr.
pub fn run_cli<I: IntoIterator<Item = OsString>>(argv: I) -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`run_cli`] with explicit output streams.
pub fn run_cli_with<I: IntoIterator<Item = OsString>>(
    argv: I,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    let result = match cli.command {
        Command::Enumerate(a) => enumerate(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Rates(a) => rates(a, out),
        Command::StateTool(a) => state_tool(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::ChecksFailed) => 1,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn parse_weights(a: &WeightArgs) -> Result<WeightVector, Failure> {
    if let Some(text) = &a.weights {
        return Ok(text.parse::<WeightVector>()?);
    }
    if let Some(text) = &a.uq {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Failure::Usage(format!("--uq: cannot parse {s:?}: {e}")))
        };
        if parts.len() != 2 {
            return Err(Failure::Usage(format!("--uq expects u,q, got {text:?}")));
        }
        return Ok(weights_from_uq(
            parse(parts[0])?,
            parse(parts[1])?,
            a.unchecked,
        )?);
    }
    Ok(WeightVector::ones())
}

fn torus(a: &TorusArgs) -> Result<(TorusGeometry, FluxPair), Failure> {
    let g = TorusGeometry::new(a.m, a.n)?;
    let f = FluxPair::new(a.k1, a.k2);
    g.check_flux(f)?;
    Ok((g, f))
}

fn sink(path: &Option<PathBuf>, out: &mut dyn Write, body: &[u8]) -> CliResult {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).map_err(|e| io_at(p, e))?);
            f.write_all(body)?;
            f.flush()?;
        }
        None => out.write_all(body)?,
    }
    Ok(())
}

fn io_at(p: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", p.display()))
}

fn json_body<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut body = serde_json::to_vec_pretty(value).expect("report serializes");
    body.push(b'\n');
    body
}

fn csv_body<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))
}

fn emit<T: Serialize>(
    o: &OutputArgs,
    out: &mut dyn Write,
    json: &T,
    rows: &[impl Serialize],
) -> CliResult {
    let body = match o.format {
        Format::Json => json_body(json),
        Format::Csv => csv_body(rows)?,
    };
    sink(&o.out, out, &body)
}

#[derive(Serialize)]
struct EnumerateReport {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    k1: usize,
    k2: usize,
    weights: [f64; 6],
    size: usize,
    log_z: f64,
    z: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator_nnz: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strongly_connected: Option<bool>,
}

fn enumerate(a: EnumerateArgs, out: &mut dyn Write) -> CliResult {
    let (g, f) = torus(&a.torus)?;
    let w = parse_weights(&a.weights)?;
    if a.dump_generator.is_some() {
        g.check_dynamics_flux(f)?;
    }
    let space = enumerate_states(g, f)?;
    let log_z = log_partition_function(&space, &w)?;
    let mut report = EnumerateReport {
        m: g.m,
        n: g.n,
        k1: f.k1,
        k2: f.k2,
        weights: w.to_array(),
        size: space.len(),
        log_z,
        z: log_z.exp(),
        generator_nnz: None,
        strongly_connected: None,
    };
    if let Some(path) = &a.dump_generator {
        let q = build_generator(&space, &RateTable::from_weights(&w), a.mode.into())?;
        let file = File::create(path).map_err(|e| io_at(path, e))?;
        q.write_matrix_market(BufWriter::new(file))
            .map_err(|e| io_at(path, e))?;
        report.generator_nnz = Some(q.nnz_offdiag());
        report.strongly_connected = Some(check_connectivity(&q).strongly_connected);
    }
    #[derive(Serialize)]
    struct Row {
        m: usize,
        n: usize,
        k1: usize,
        k2: usize,
        size: usize,
        log_z: f64,
        z: f64,
    }
    let row = Row {
        m: g.m,
        n: g.n,
        k1: f.k1,
        k2: f.k2,
        size: report.size,
        log_z,
        z: report.z,
    };
    emit(&a.output, out, &report, &[row])
}

fn verify(a: VerifyArgs, out: &mut dyn Write) -> CliResult {
    let (g, f) = torus(&a.torus)?;
    let w = parse_weights(&a.weights)?;
    let checks = match &a.checks {
        Some(names) => Some(
            names
                .iter()
                .map(|n| CheckName::parse(n.trim()))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let reports = run_checks(g, f, &w, checks.as_deref())?;
    emit(&a.output, out, &reports, &reports)?;
    if reports.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

#[derive(Serialize)]
struct SampleRow {
    seed: u64,
    t: f64,
    events: u64,
    empty: f64,
    cross: f64,
    corner_se: f64,
    corner_wn: f64,
    vert: f64,
    horiz: f64,
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> CliResult {
    let (g, f) = torus(&a.torus)?;
    g.check_dynamics_flux(f)?;
    let w = parse_weights(&a.weights)?;
    if a.replicas == 0 {
        return Err(Failure::Usage("--replicas must be at least 1".into()));
    }
    let horizon = match (a.events, a.time) {
        (_, Some(t)) => Horizon::Time(t),
        (Some(n), None) => Horizon::Events(n),
        (None, None) => Horizon::Events(100_000),
    };
    let mut config = SimConfig::new(g, f, w, a.seed, horizon);
    config.burn_in = a.burn_in;
    config.cadence = a.cadence;
    config.trace = a.trace.is_some();
    config.validate()?;
    let runs = run_replicas(&config, a.replicas, a.jobs)?;
    if let Some(path) = &a.trace {
        let mut body = Vec::new();
        for rec in runs[0].trace.iter().flatten() {
            serde_json::to_writer(&mut body, rec).expect("record serializes");
            body.push(b'\n');
        }
        std::fs::write(path, body).map_err(|e| io_at(path, e))?;
    }
    for r in &runs {
        if r.observables.absorbed {
            eprintln!(
                "warning: seed {} reached a state with no triggers",
                r.config.seed
            );
        }
    }
    let summaries: Vec<Summary> = runs.iter().map(|r| r.summary()).collect();
    let rows: Vec<SampleRow> = runs
        .iter()
        .flat_map(|r| {
            r.samples.iter().map(move |s| SampleRow {
                seed: r.config.seed,
                t: s.t,
                events: s.events,
                empty: s.densities[0],
                cross: s.densities[1],
                corner_se: s.densities[2],
                corner_wn: s.densities[3],
                vert: s.densities[4],
                horiz: s.densities[5],
            })
        })
        .collect();
    if summaries.len() == 1 {
        emit(&a.output, out, &summaries[0], &rows)
    } else {
        emit(&a.output, out, &summaries, &rows)
    }
}

#[derive(Serialize)]
struct RateRow {
    kind: String,
    a: &'static str,
    b: &'static str,
    rate: f64,
}

#[derive(Serialize)]
struct RatesReport {
    weights: [f64; 6],
    free_fermion_defect: f64,
    rates: Vec<RateRow>,
}

fn rates(a: RatesArgs, out: &mut dyn Write) -> CliResult {
    let w = parse_weights(&a.weights)?;
    let table = RateTable::from_weights(&w);
    let rows: Vec<RateRow> = JumpKind::ALL
        .into_iter()
        .map(|k| {
            let (pa, pb) = k.pair();
            RateRow {
                kind: k.to_string(),
                a: pa.name(),
                b: pb.name(),
                rate: table.get(k),
            }
        })
        .collect();
    let report = RatesReport {
        weights: w.to_array(),
        free_fermion_defect: free_fermion_defect(&w),
        rates: rows,
    };
    emit(&a.output, out, &report, &report.rates)
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    k1: usize,
    k2: usize,
}

#[derive(Serialize)]
struct TypeRow {
    x: usize,
    y: usize,
    #[serde(rename = "type")]
    vertex: &'static str,
}

fn state_tool(a: StateToolArgs, out: &mut dyn Write) -> CliResult {
    let text = if a.input.as_os_str() == "-" {
        io::read_to_string(io::stdin())?
    } else {
        std::fs::read_to_string(&a.input).map_err(|e| io_at(&a.input, e))?
    };
    let s: State = decode_state(&text)?;
    let g = s.geometry();
    match a.action {
        Action::Validate => {
            let f = s.validate()?;
            let r = ValidateReport {
                valid: true,
                m: g.m,
                n: g.n,
                k1: f.k1,
                k2: f.k2,
            };
            emit(&a.output, out, &r, &[&r])
        }
        Action::Flip | Action::Dual => {
            if a.output.format == Format::Csv {
                return Err(Failure::Usage("state files are JSON only".into()));
            }
            let t = if a.action == Action::Flip {
                s.flip()
            } else {
                s.dual()
            };
            let mut body = encode_state(&t).into_bytes();
            body.push(b'\n');
            sink(&a.output.out, out, &body)
        }
        Action::Types => {
            let rows: Vec<TypeRow> = (0..g.m)
                .flat_map(|x| (0..g.n).map(move |y| (x, y)))
                .map(|(x, y)| TypeRow {
                    x,
                    y,
                    vertex: s.vertex_type(x, y).name(),
                })
                .collect();
            let counts = s.count_types();
            let json: std::collections::BTreeMap<&str, usize> = VertexType::ALL
                .into_iter()
                .map(|t| (t.name(), counts[t]))
                .collect();
            emit(&a.output, out, &json, &rows)
        }
    }
}
