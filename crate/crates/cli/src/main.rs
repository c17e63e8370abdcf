//! Command-line front end for the dyadic weight laboratory.
//!
//! Four subcommands: `check` reports class functionals of a weight,
//! `counterexample` builds and verifies a contraction counterexample,
//! `lambda-sweep` tracks functionals of the contracted weight across a
//! grid of contraction factors, and `paraproduct` puts resolvent norm
//! bounds next to reverse Holder functionals.
//!
//! Outputs are JSON or CSV, written atomically, and byte-identical for
//! identical configuration and seed. Exit codes: 0 success, 2 bad
//! input, 3 invariant violation, 4 internal verification failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dyadlab::classes::{class_report, rhp_functional};
use dyadlab::lambda::{lambda_op, Lambda};
use dyadlab::paraproduct::resolvent_sweep;
use dyadlab::periodic::{
    build_counterexample_detailed, periodic_weight, witness_depths, CounterexampleCert,
    PeriodicSpec,
};
use dyadlab::{DyadicIndex, Error as CoreError, HaarSeries, WeightTree};

const MAX_TREE_DEPTH: u32 = 24;
const MAX_OPERATOR_DEPTH: u32 = 14;

// ---------------------------------------------------------------------------
// Failure classification
// ---------------------------------------------------------------------------

/// CLI failure with its exit code class.
#[derive(Debug)]
enum Failure {
    /// Malformed input: unreadable files, bad JSON, bad flag values. Exit 2.
    BadInput(String),
    /// Structurally valid input violating a domain invariant. Exit 3.
    Invariant(String),
    /// A certificate failed its own verification. Exit 4.
    Verification(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::BadInput(_) => 2,
            Failure::Invariant(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::BadInput(m) | Failure::Invariant(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        let text = err.to_string();
        match err {
            // Precondition-style argument errors.
            CoreError::BadExponent { .. }
            | CoreError::LambdaOutOfRange(_)
            | CoreError::EmptyPattern
            | CoreError::EmptyInput(_) => Failure::BadInput(text),
            // Failed self-verification of a built certificate.
            CoreError::CertificateInvalid(_) => Failure::Verification(text),
            // Everything else is a violated domain invariant; the message
            // names the offending node where one exists.
            _ => Failure::Invariant(text),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn bad_input(msg: impl Into<String>) -> Failure {
    Failure::BadInput(msg.into())
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

/// The three accepted JSON input shapes, distinguished by their keys.
enum WeightInput {
    Tree(WeightTree<f64>),
    Periodic(PeriodicSpec<f64>),
    Series(HaarSeries<f64>),
}

#[derive(Deserialize)]
struct TreeWire {
    depth: u32,
    splits: Vec<f64>,
}

#[derive(Deserialize)]
struct PeriodicWire {
    period: u32,
    s: Vec<f64>,
}

#[derive(Deserialize)]
struct CoeffWire {
    level: u32,
    pos: u64,
    b: f64,
}

#[derive(Deserialize)]
struct SeriesWire {
    depth: u32,
    coeffs: Vec<CoeffWire>,
}

impl WeightInput {
    fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad_input(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| bad_input(format!("{}: invalid JSON: {e}", path.display())))?;
        let obj = value
            .as_object()
            .ok_or_else(|| bad_input(format!("{}: expected a JSON object", path.display())))?;

        let parse = |e: serde_json::Error| {
            bad_input(format!("{}: unexpected shape: {e}", path.display()))
        };
        if obj.contains_key("splits") {
            let wire: TreeWire = serde_json::from_str(&text).map_err(parse)?;
            Ok(WeightInput::Tree(WeightTree::new(wire.depth, wire.splits)?))
        } else if obj.contains_key("s") || obj.contains_key("period") {
            let wire: PeriodicWire = serde_json::from_str(&text).map_err(parse)?;
            if wire.period as usize != wire.s.len() {
                return Err(bad_input(format!(
                    "{}: period {} does not match {} splits",
                    path.display(),
                    wire.period,
                    wire.s.len()
                )));
            }
            Ok(WeightInput::Periodic(PeriodicSpec::new(wire.s)?))
        } else if obj.contains_key("coeffs") {
            let wire: SeriesWire = serde_json::from_str(&text).map_err(parse)?;
            let entries = wire
                .coeffs
                .into_iter()
                .map(|c| Ok((DyadicIndex::new(c.level, c.pos)?, c.b)))
                .collect::<Result<Vec<_>, CoreError>>()?;
            Ok(WeightInput::Series(HaarSeries::new(wire.depth, entries)?))
        } else {
            Err(bad_input(format!(
                "{}: unrecognized shape (expected keys: splits | period,s | coeffs)",
                path.display()
            )))
        }
    }

    fn load(args: &InputArgs) -> CliResult<Self> {
        if let Some(path) = &args.input {
            return Self::from_file(path);
        }
        if let Some(list) = &args.periodic {
            let splits = parse_f64_list(list, "--periodic")?;
            return Ok(WeightInput::Periodic(PeriodicSpec::new(splits)?));
        }
        Err(bad_input("one of --input or --periodic is required"))
    }

    /// The weight tree at the requested depth, or at the input's own
    /// depth when none is given.
    fn tree_at(&self, depth: Option<u32>) -> CliResult<WeightTree<f64>> {
        match self {
            WeightInput::Tree(tree) => match depth {
                None => Ok(tree.clone()),
                Some(d) if d == tree.depth() => Ok(tree.clone()),
                Some(d) if d < tree.depth() => Ok(tree.truncated(d)?),
                Some(d) => Err(bad_input(format!(
                    "depth {d} exceeds the input tree depth {}",
                    tree.depth()
                ))),
            },
            WeightInput::Periodic(spec) => {
                let d = depth.ok_or_else(|| bad_input("--depth is required for periodic input"))?;
                Ok(periodic_weight(spec, d)?)
            }
            WeightInput::Series(series) => {
                let base = match depth {
                    None => series.clone(),
                    Some(d) if d == series.depth() => series.clone(),
                    Some(d) if d < series.depth() => series.truncated(d)?,
                    Some(d) => {
                        return Err(bad_input(format!(
                            "depth {d} exceeds the input series depth {}",
                            series.depth()
                        )))
                    }
                };
                Ok(base.weight_tree()?)
            }
        }
    }

    /// The Haar coefficient series of the input, built at `depth`.
    fn series_at(&self, depth: u32) -> CliResult<HaarSeries<f64>> {
        match self {
            WeightInput::Series(series) => {
                if depth < series.depth() {
                    Ok(series.truncated(depth)?)
                } else {
                    Ok(series.clone())
                }
            }
            _ => Ok(self.tree_at(Some(depth))?.haar_series()),
        }
    }
}

// ---------------------------------------------------------------------------
// Flag parsing helpers
// ---------------------------------------------------------------------------

fn parse_f64_list(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| bad_input(format!("{flag}: cannot parse '{part}' as a number")))
        })
        .collect()
}

fn parse_depth_list(s: &str, max: u32) -> CliResult<Vec<u32>> {
    s.split(',')
        .map(|part| {
            let d = part
                .trim()
                .parse::<u32>()
                .map_err(|_| bad_input(format!("--depth: cannot parse '{part}'")))?;
            if d == 0 || d > max {
                return Err(bad_input(format!("--depth: {d} outside [1, {max}]")));
            }
            Ok(d)
        })
        .collect()
}

/// A lambda grid: either a single value or `start:stop:step` inclusive.
fn parse_lambda_grid(s: &str) -> CliResult<Vec<Lambda>> {
    let parts: Vec<&str> = s.split(':').collect();
    let raw: Vec<f64> = match parts.as_slice() {
        [single] => {
            vec![single
                .trim()
                .parse::<f64>()
                .map_err(|_| bad_input(format!("--lambda: cannot parse '{single}'")))?]
        }
        [start, stop, step] => {
            let parse = |p: &str| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| bad_input(format!("--lambda: cannot parse '{p}'")))
            };
            let (a, b, h) = (parse(start)?, parse(stop)?, parse(step)?);
            if !(h > 0.0) || b < a {
                return Err(bad_input("--lambda: need start <= stop and step > 0"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            (0..count).map(|k| (a + k as f64 * h).min(b)).collect()
        }
        _ => return Err(bad_input("--lambda: expected VALUE or START:STOP:STEP")),
    };
    raw.into_iter()
        .map(|v| Lambda::new(v).map_err(Failure::from))
        .collect()
}

// ---------------------------------------------------------------------------
// Output formatting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// 17 significant digits: round-trip safe for f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes `content` to `out`, atomically when it is a file.
fn emit(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(".tmp");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, content)
                .map_err(|e| bad_input(format!("cannot write {}: {e}", tmp.display())))?;
            fs::rename(&tmp, path)
                .map_err(|e| bad_input(format!("cannot rename to {}: {e}", path.display())))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Invariant(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

// ---------------------------------------------------------------------------
// Command definitions
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "dyadlab", version, about = "Dyadic weight laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// JSON input: a weight tree {"depth","splits"}, a periodic pattern
    /// {"period","s"}, or a Haar series {"depth","coeffs"}
    #[arg(long, value_name = "PATH", conflicts_with = "periodic")]
    input: Option<PathBuf>,

    /// Inline periodic pattern: comma-separated left-mass splits
    #[arg(long, value_name = "s1,s2,...")]
    periodic: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file (stdout when omitted); written atomically
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate all class functionals of a weight
    Check {
        #[command(flatten)]
        input: InputArgs,
        /// Tree depths, comma separated
        #[arg(long, value_name = "N[,N...]")]
        depth: Option<String>,
        /// Exponents p > 1, comma separated
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[command(flatten)]
        output: OutputArgs,
    },

    /// Build and verify a contraction counterexample at exponent p
    Counterexample {
        /// Exponent p > 1
        #[arg(long)]
        p: f64,
        /// Interpolation fraction in (0,1) placing the in-class pattern
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Pattern period override (default: smallest admissible)
        #[arg(long)]
        period: Option<u32>,
        #[command(flatten)]
        output: OutputArgs,
    },

    /// Functionals of the contracted weight across a lambda grid
    LambdaSweep {
        #[command(flatten)]
        input: InputArgs,
        /// Tree depth
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
        /// Exponents p > 1, comma separated
        #[arg(long, default_value = "2")]
        p: String,
        /// Contraction grid: VALUE or START:STOP:STEP in [-1,1]
        #[arg(long, default_value = "0:1:0.1")]
        lambda: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[command(flatten)]
        output: OutputArgs,
    },

    /// Resolvent norm bounds next to reverse Holder functionals
    Paraproduct {
        #[command(flatten)]
        input: InputArgs,
        /// Operator depths, comma separated (max 14)
        #[arg(long, value_name = "N[,N...]", default_value = "8")]
        depth: String,
        /// Exponents p > 1, comma separated
        #[arg(long, default_value = "2")]
        p: String,
        /// Contraction grid: VALUE or START:STOP:STEP in [-1,1]
        #[arg(long, default_value = "0:1:0.25")]
        lambda: String,
        /// Random trial functions per cell
        #[arg(long, default_value_t = 8)]
        trials: usize,
        /// Seed for the trial family
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[command(flatten)]
        output: OutputArgs,
    },
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn run_check(
    input: &InputArgs,
    depth: &Option<String>,
    p: &str,
    format: Format,
    output: &OutputArgs,
) -> CliResult<()> {
    let source = WeightInput::load(input)?;
    let ps = parse_f64_list(p, "--p")?;
    let depths: Vec<Option<u32>> = match depth {
        None => vec![None],
        Some(list) => parse_depth_list(list, MAX_TREE_DEPTH)?
            .into_iter()
            .map(Some)
            .collect(),
    };

    let mut reports = Vec::new();
    for d in depths {
        let tree = source.tree_at(d)?;
        reports.push(class_report(&tree, &ps)?);
    }

    let content = match format {
        Format::Json => to_json(&reports)?,
        Format::Csv => {
            let mut csv = String::from("depth,p,doubling,ainf,carleson,a1,rhp,ap,buckley\n");
            for r in &reports {
                for e in &r.exponents {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{},{}",
                        r.depth,
                        num(e.p),
                        num(r.doubling),
                        num(r.ainf),
                        num(r.carleson),
                        num(r.a1),
                        num(e.rhp),
                        num(e.ap),
                        num(e.buckley)
                    );
                }
            }
            csv
        }
    };
    emit(&output.out, &content)
}

/// Counterexample report: the certificate plus the depth sweep showing
/// the original weight's functional staying bounded while the contracted
/// weight's grows.
#[derive(Serialize)]
struct CounterexampleReport {
    certificate: CounterexampleCert<f64>,
    witness: Vec<WitnessRow>,
}

#[derive(Serialize)]
struct WitnessRow {
    depth: u32,
    rhp_original: f64,
    rhp_contracted: f64,
}

fn run_counterexample(
    p: f64,
    delta: f64,
    period: Option<u32>,
    output: &OutputArgs,
) -> CliResult<()> {
    let cert = build_counterexample_detailed(p, period, delta)?;

    let mut witness = Vec::new();
    for depth in witness_depths(cert.period) {
        let original = periodic_weight(&cert.spec_in, depth)?;
        let contracted = periodic_weight(&cert.spec_out, depth)?;
        witness.push(WitnessRow {
            depth,
            rhp_original: rhp_functional(&original, p)?.value,
            rhp_contracted: rhp_functional(&contracted, p)?.value,
        });
    }

    let report = CounterexampleReport { certificate: cert, witness };
    emit(&output.out, &to_json(&report)?)
}

#[derive(Serialize)]
struct LambdaSweepRow {
    depth: u32,
    lambda: f64,
    p: f64,
    rhp: f64,
    ap: f64,
    buckley: f64,
}

fn run_lambda_sweep(
    input: &InputArgs,
    depth: Option<u32>,
    p: &str,
    lambda: &str,
    format: Format,
    output: &OutputArgs,
) -> CliResult<()> {
    if let Some(d) = depth {
        if d == 0 || d > MAX_TREE_DEPTH {
            return Err(bad_input(format!("--depth: {d} outside [1, {MAX_TREE_DEPTH}]")));
        }
    }
    let source = WeightInput::load(input)?;
    let ps = parse_f64_list(p, "--p")?;
    let lambdas = parse_lambda_grid(lambda)?;
    let tree = source.tree_at(depth)?;

    let mut rows = Vec::new();
    for &lam in &lambdas {
        let deformed = lambda_op(&tree, lam);
        for &p in &ps {
            let report = class_report(&deformed, &[p])?;
            let e = &report.exponents[0];
            rows.push(LambdaSweepRow {
                depth: tree.depth(),
                lambda: lam.value(),
                p,
                rhp: e.rhp,
                ap: e.ap,
                buckley: e.buckley,
            });
        }
    }

    let content = match format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut csv = String::from("depth,lambda,p,rhp,ap,buckley\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.depth,
                    num(r.lambda),
                    num(r.p),
                    num(r.rhp),
                    num(r.ap),
                    num(r.buckley)
                );
            }
            csv
        }
    };
    emit(&output.out, &content)
}

#[allow(clippy::too_many_arguments)]
fn run_paraproduct(
    input: &InputArgs,
    depth: &str,
    p: &str,
    lambda: &str,
    trials: usize,
    seed: u64,
    format: Format,
    output: &OutputArgs,
) -> CliResult<()> {
    let source = WeightInput::load(input)?;
    let depths = parse_depth_list(depth, MAX_OPERATOR_DEPTH)?;
    let ps = parse_f64_list(p, "--p")?;
    let lambdas = parse_lambda_grid(lambda)?;
    let max_depth = *depths.iter().max().expect("non-empty by parsing");
    let series = source.series_at(max_depth)?;

    let mut rows = Vec::new();
    for &p in &ps {
        rows.extend(resolvent_sweep(&series, p, &depths, &lambdas, trials, seed)?);
    }

    let content = match format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut csv = String::from(
                "depth,lambda,p,norm_lower_bound,power_iter_bound_p2,rhp_functional_omega_lambda\n",
            );
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.depth,
                    num(r.lambda),
                    num(r.p),
                    num(r.norm_lower_bound),
                    opt_num(r.power_iteration),
                    num(r.rhp_omega_lambda)
                );
            }
            csv
        }
    };
    emit(&output.out, &content)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Check { input, depth, p, format, output } => {
            run_check(input, depth, p, *format, output)
        }
        Command::Counterexample { p, delta, period, output } => {
            run_counterexample(*p, *delta, *period, output)
        }
        Command::LambdaSweep { input, depth, p, lambda, format, output } => {
            run_lambda_sweep(input, *depth, p, lambda, *format, output)
        }
        Command::Paraproduct { input, depth, p, lambda, trials, seed, format, output } => {
            run_paraproduct(input, depth, p, lambda, *trials, *seed, *format, output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
