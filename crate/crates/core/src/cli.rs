//! Command-line front end: argument parsing, config-file resolution,
//! orchestration of the analysis modules, and report emission.
//!
//! Every emitted document — JSON report or CSV table — starts with the
//! tool version, a SHA-256 hash of the resolved configuration, and the
//! seed, so results can be traced back to exactly what produced them.
//! Parameters resolve in fixed precedence: command-line flag, then config
//! file, then default. Output bytes never depend on the worker count.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::code::{
    decoded_distribution, parity_survives, residual_error, Basis, JointError, ProtocolVariant,
};
use crate::error::{Error, Result};
use crate::montecarlo::{run, run_with_records, ProtocolConfig, SiftRecord};
use crate::optics::equivalence_report;
use crate::pauli::{ErrorDistribution, RngStream};
use crate::postprocess::{
    apply_schedule, css_key_rate, schedule_search, ResidualRates, Schedule, ScheduleStep,
    SearchBounds,
};
use crate::threshold::{
    baseline_threshold, find_threshold, ChannelFamily, ReferenceComparison, ThresholdResult,
};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const EXIT_OK: u8 = 0;
const EXIT_INTERNAL: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INVALID: u8 = 4;

#[derive(Parser)]
#[command(
    name = "qpfer",
    version,
    about = "Simulation and numerical analysis for QKD over two-qubit error-rejection codes"
)]
struct Cli {
    /// TOML experiment file; explicit flags take precedence over it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed (falls back to the file's `seed`, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections; never affects output bytes
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the main report here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decoded error distribution and survival rate for a channel
    Rates(RatesArgs),
    /// Evaluate a fixed post-processing schedule or search for one
    Schedule(ScheduleArgs),
    /// Certify the noise threshold of a channel family
    Threshold(ThresholdArgs),
    /// Run the full protocol simulation
    Simulate(SimulateArgs),
    /// Compare the optical receiver against the record-level model
    OpticsCheck(OpticsCheckArgs),
}

#[derive(Args)]
struct RatesArgs {
    /// Physical channel as "pI,pX,pY,pZ"
    #[arg(long)]
    channel: Option<String>,
    /// Cross-check the transform by sampling this many codes
    #[arg(long, value_name = "N")]
    mc_samples: Option<u64>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Working error distribution as "pI,pX,pY,pZ"
    #[arg(long)]
    dist: Option<String>,
    /// Fixed step sequence to evaluate, e.g. "B,P3" (needs --final-r)
    #[arg(long)]
    steps: Option<String>,
    /// Final pooling width; evaluates a fixed schedule instead of searching
    #[arg(long)]
    final_r: Option<u64>,
    #[arg(long)]
    max_b: Option<u32>,
    #[arg(long)]
    max_p_rounds: Option<u32>,
    #[arg(long)]
    r_max: Option<u64>,
    /// Bound target the final pooling step must meet
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// "symmetric", "xz-only", or "custom:WX,WY,WZ"
    #[arg(long)]
    family: Option<String>,
    /// "four-state" or "six-state"
    #[arg(long)]
    variant: Option<String>,
    /// Bisection stops once the bracket is this narrow
    #[arg(long)]
    precision: Option<f64>,
    /// Skip the no-code baseline scan
    #[arg(long)]
    skip_baseline: bool,
    #[arg(long)]
    max_b: Option<u32>,
    #[arg(long)]
    max_p_rounds: Option<u32>,
    #[arg(long)]
    r_max: Option<u64>,
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// "four-state" or "six-state"
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    n_codes: Option<u64>,
    /// Physical channel as "pI,pX,pY,pZ"
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    loss: Option<f64>,
    /// "none", "intercept-resend-z", or "intercept-resend-bb84"
    #[arg(long)]
    attack: Option<String>,
    /// Fixed schedule steps, e.g. "B,P3" (needs --final-r)
    #[arg(long)]
    steps: Option<String>,
    /// Final pooling width of a fixed schedule
    #[arg(long)]
    final_r: Option<u64>,
    #[arg(long)]
    abort_tolerance: Option<f64>,
    /// Write one CSV row per transmitted code here
    #[arg(long, value_name = "PATH")]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct OpticsCheckArgs {
    /// "four-state" or "six-state" (default six-state)
    #[arg(long)]
    variant: Option<String>,
}

// ====================== config file ======================

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    seed: Option<u64>,
    rates: Option<RatesSection>,
    schedule: Option<ScheduleSection>,
    threshold: Option<ThresholdSection>,
    simulate: Option<toml::Table>,
    #[serde(rename = "optics-check")]
    optics_check: Option<OpticsSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatesSection {
    channel: Option<ErrorDistribution>,
    mc_samples: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    dist: Option<ErrorDistribution>,
    steps: Option<Vec<ScheduleStep>>,
    final_r: Option<u64>,
    bounds: Option<SearchBounds>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdSection {
    family: Option<ChannelFamily>,
    variant: Option<ProtocolVariant>,
    precision: Option<f64>,
    baseline: Option<bool>,
    bounds: Option<SearchBounds>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpticsSection {
    variant: Option<ProtocolVariant>,
}

// ====================== emission ======================

/// Reproducibility header wrapped around every JSON report.
#[derive(Serialize)]
struct Envelope<T: Serialize> {
    tool_version: &'static str,
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    report: T,
}

/// Same header for reports that already carry a top-level `seed` field.
#[derive(Serialize)]
struct SeededEnvelope<T: Serialize> {
    tool_version: &'static str,
    config_hash: String,
    #[serde(flatten)]
    report: T,
}

/// SHA-256 over the canonical JSON form of the resolved parameters.
fn config_hash<T: Serialize>(resolved: &T) -> Result<String> {
    let canonical = serde_json::to_string(resolved)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

fn emit_json<T: Serialize>(out: Option<&Path>, envelope: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(envelope)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn csv_banner(config_hash: &str, seed: u64) -> String {
    format!("# tool_version={TOOL_VERSION} config_hash={config_hash} seed={seed}\n")
}

fn emit_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

// ====================== parsing helpers ======================

fn parse_distribution(text: &str) -> Result<ErrorDistribution> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "expected four comma-separated probabilities, got {text:?}"
        )));
    }
    let mut values = [0.0f64; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("{part:?} is not a number"))
        })?;
    }
    ErrorDistribution::new(values[0], values[1], values[2], values[3])
}

fn parse_variant(text: &str) -> Result<ProtocolVariant> {
    match text {
        "four-state" => Ok(ProtocolVariant::FourState),
        "six-state" => Ok(ProtocolVariant::SixState),
        other => Err(Error::InvalidArgument(format!(
            "unknown protocol variant {other:?}; expected \"four-state\" or \"six-state\""
        ))),
    }
}

fn variant_name(variant: ProtocolVariant) -> &'static str {
    match variant {
        ProtocolVariant::FourState => "four-state",
        ProtocolVariant::SixState => "six-state",
    }
}

fn parse_steps(text: &str) -> Result<Vec<ScheduleStep>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed.split(',').map(|step| step.trim().parse()).collect()
}

fn resolve_bounds(
    section: Option<SearchBounds>,
    max_b: Option<u32>,
    max_p_rounds: Option<u32>,
    r_max: Option<u64>,
    target: Option<f64>,
) -> SearchBounds {
    let mut bounds = section.unwrap_or_default();
    if let Some(v) = max_b {
        bounds.max_b = v;
    }
    if let Some(v) = max_p_rounds {
        bounds.max_p_rounds = v;
    }
    if let Some(v) = r_max {
        bounds.r_max = v;
    }
    if let Some(v) = target {
        bounds.target = v;
    }
    bounds
}

// ====================== entry point ======================

/// Parses arguments, runs the selected command, and maps the outcome to
/// the documented exit codes: 0 success, 1 internal error, 2 protocol
/// abort, 3 infeasible, 4 invalid input.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_exit_code(&err))
        }
    }
}

fn error_exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidDistribution(_)
        | Error::EmptyCheckSet(_)
        | Error::Config(_) => EXIT_INVALID,
        _ => EXIT_INTERNAL,
    }
}

fn execute(cli: Cli) -> Result<u8> {
    let file: ExperimentFile = match &cli.config {
        Some(path) => toml::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentFile::default(),
    };
    let seed_flag = cli.seed;
    let seed = seed_flag.or(file.seed).unwrap_or(0);
    let out = cli.out;
    let body = move || -> Result<u8> {
        match cli.command {
            Command::Rates(args) => {
                cmd_rates(args, file.rates.unwrap_or_default(), seed, out.as_deref())
            }
            Command::Schedule(args) => {
                cmd_schedule(args, file.schedule.unwrap_or_default(), seed, out.as_deref())
            }
            Command::Threshold(args) => {
                cmd_threshold(args, file.threshold.unwrap_or_default(), seed, out.as_deref())
            }
            Command::Simulate(args) => {
                cmd_simulate(args, file.simulate, seed_flag, seed, out.as_deref())
            }
            Command::OpticsCheck(args) => cmd_optics_check(
                args,
                file.optics_check.unwrap_or_default(),
                seed,
                out.as_deref(),
            ),
        }
    };
    match cli.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| {
                    Error::InvalidArgument(format!(
                        "cannot build a {workers}-thread worker pool: {e}"
                    ))
                })?;
            pool.install(body)
        }
        None => body(),
    }
}

// ====================== rates ======================

#[derive(Serialize)]
struct RatesResolved {
    command: &'static str,
    channel: ErrorDistribution,
    mc_samples: u64,
}

#[derive(Serialize)]
struct ResidualFrequencies {
    p_i: f64,
    p_x: f64,
    p_y: f64,
    p_z: f64,
}

#[derive(Serialize)]
struct McCrossCheck {
    samples: u64,
    survived: u64,
    survival_frequency: f64,
    residual_frequencies: ResidualFrequencies,
    /// Largest gap between a sampled frequency (survival included) and
    /// its analytic counterpart.
    max_abs_difference: f64,
}

#[derive(Serialize)]
struct RatesReport {
    channel: ErrorDistribution,
    decoded: ErrorDistribution,
    survival: f64,
    bit_flip_rate: f64,
    phase_flip_rate: f64,
    monte_carlo: Option<McCrossCheck>,
}

fn mc_cross_check(
    channel: &ErrorDistribution,
    decoded: &ErrorDistribution,
    survival: f64,
    samples: u64,
    seed: u64,
) -> McCrossCheck {
    let mut rng = RngStream::new(seed, 0);
    let mut survived = 0u64;
    let mut counts = [0u64; 4];
    for _ in 0..samples {
        let e = JointError::new(channel.sample(&mut rng), channel.sample(&mut rng));
        if parity_survives(e) {
            survived += 1;
            counts[residual_error(e).expect("surviving error").index()] += 1;
        }
    }
    let frequency = |count: u64| {
        if survived == 0 {
            0.0
        } else {
            count as f64 / survived as f64
        }
    };
    let freqs = [
        frequency(counts[0]),
        frequency(counts[1]),
        frequency(counts[2]),
        frequency(counts[3]),
    ];
    let expected = [decoded.p_i(), decoded.p_x(), decoded.p_y(), decoded.p_z()];
    let survival_frequency = survived as f64 / samples as f64;
    let max_abs_difference = freqs
        .iter()
        .zip(&expected)
        .map(|(f, e)| (f - e).abs())
        .fold((survival_frequency - survival).abs(), f64::max);
    McCrossCheck {
        samples,
        survived,
        survival_frequency,
        residual_frequencies: ResidualFrequencies {
            p_i: freqs[0],
            p_x: freqs[1],
            p_y: freqs[2],
            p_z: freqs[3],
        },
        max_abs_difference,
    }
}

fn cmd_rates(args: RatesArgs, section: RatesSection, seed: u64, out: Option<&Path>) -> Result<u8> {
    let channel = match &args.channel {
        Some(text) => parse_distribution(text)?,
        None => section.channel.ok_or_else(|| {
            Error::InvalidArgument(
                "no channel given; pass --channel or set [rates].channel".into(),
            )
        })?,
    };
    let mc_samples = args.mc_samples.or(section.mc_samples).unwrap_or(0);
    let (decoded, survival) = decoded_distribution(&channel);
    let (bit_flip_rate, phase_flip_rate) = decoded.flip_rates();
    let monte_carlo =
        (mc_samples > 0).then(|| mc_cross_check(&channel, &decoded, survival, mc_samples, seed));
    let resolved = RatesResolved {
        command: "rates",
        channel,
        mc_samples,
    };
    emit_json(
        out,
        &Envelope {
            tool_version: TOOL_VERSION,
            config_hash: config_hash(&resolved)?,
            seed,
            report: RatesReport {
                channel,
                decoded,
                survival,
                bit_flip_rate,
                phase_flip_rate,
                monte_carlo,
            },
        },
    )?;
    Ok(EXIT_OK)
}

// ====================== schedule ======================

#[derive(Serialize)]
struct ScheduleResolved {
    command: &'static str,
    dist: ErrorDistribution,
    mode: &'static str,
    steps: Option<Vec<ScheduleStep>>,
    final_r: Option<u64>,
    bounds: Option<SearchBounds>,
}

#[derive(Serialize)]
struct ScheduleReport {
    dist: ErrorDistribution,
    mode: &'static str,
    feasible: bool,
    schedule: Option<Schedule>,
    residual: Option<ResidualRates>,
    key_rate: Option<f64>,
    expected_bit_yield: Option<f64>,
}

fn cmd_schedule(
    args: ScheduleArgs,
    section: ScheduleSection,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8> {
    let dist = match &args.dist {
        Some(text) => parse_distribution(text)?,
        None => section.dist.ok_or_else(|| {
            Error::InvalidArgument("no distribution given; pass --dist or set [schedule].dist".into())
        })?,
    };
    let steps = match &args.steps {
        Some(text) => Some(parse_steps(text)?),
        None => section.steps,
    };
    let final_r = args.final_r.or(section.final_r);

    let (resolved, report, exit) = match final_r {
        Some(final_r) => {
            let schedule = Schedule::new(steps.unwrap_or_default(), final_r)?;
            let application = apply_schedule(&dist, &schedule);
            let key_rate = css_key_rate(application.residual);
            (
                ScheduleResolved {
                    command: "schedule",
                    dist,
                    mode: "apply",
                    steps: Some(schedule.steps().to_vec()),
                    final_r: Some(schedule.final_r()),
                    bounds: None,
                },
                ScheduleReport {
                    dist,
                    mode: "apply",
                    feasible: key_rate > 0.0,
                    schedule: Some(schedule),
                    residual: Some(application.residual),
                    key_rate: Some(key_rate),
                    expected_bit_yield: Some(application.expected_bit_yield),
                },
                EXIT_OK,
            )
        }
        None => {
            if steps.is_some() {
                return Err(Error::InvalidArgument(
                    "a fixed step sequence needs --final-r; omit --steps to search".into(),
                ));
            }
            let bounds = resolve_bounds(
                section.bounds,
                args.max_b,
                args.max_p_rounds,
                args.r_max,
                args.target,
            );
            let found = schedule_search(&dist, &bounds)?;
            let resolved = ScheduleResolved {
                command: "schedule",
                dist,
                mode: "search",
                steps: None,
                final_r: None,
                bounds: Some(bounds),
            };
            match found {
                Some(found) => (
                    resolved,
                    ScheduleReport {
                        dist,
                        mode: "search",
                        feasible: true,
                        schedule: Some(found.schedule),
                        residual: Some(found.residual),
                        key_rate: Some(found.key_rate),
                        expected_bit_yield: None,
                    },
                    EXIT_OK,
                ),
                None => (
                    resolved,
                    ScheduleReport {
                        dist,
                        mode: "search",
                        feasible: false,
                        schedule: None,
                        residual: None,
                        key_rate: None,
                        expected_bit_yield: None,
                    },
                    EXIT_INFEASIBLE,
                ),
            }
        }
    };
    emit_json(
        out,
        &Envelope {
            tool_version: TOOL_VERSION,
            config_hash: config_hash(&resolved)?,
            seed,
            report,
        },
    )?;
    Ok(exit)
}

// ====================== threshold ======================

#[derive(Serialize)]
struct ThresholdResolved {
    command: &'static str,
    family: ChannelFamily,
    variant: ProtocolVariant,
    precision: f64,
    baseline: bool,
    bounds: SearchBounds,
}

#[derive(Serialize)]
struct ThresholdReport {
    decode: ThresholdResult,
    comparison: Option<ReferenceComparison>,
    baseline: Option<ThresholdResult>,
    /// Certified-scale gain of decoding over the bare channel.
    decode_advantage: Option<f64>,
}

fn cmd_threshold(
    args: ThresholdArgs,
    section: ThresholdSection,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8> {
    let family = match &args.family {
        Some(text) => text.parse()?,
        None => section.family.ok_or_else(|| {
            Error::InvalidArgument(
                "no channel family given; pass --family or set [threshold].family".into(),
            )
        })?,
    };
    let variant = match &args.variant {
        Some(text) => parse_variant(text)?,
        None => section.variant.unwrap_or(ProtocolVariant::FourState),
    };
    let precision = args.precision.or(section.precision).unwrap_or(0.001);
    let with_baseline = !args.skip_baseline && section.baseline.unwrap_or(true);
    let bounds = resolve_bounds(
        section.bounds,
        args.max_b,
        args.max_p_rounds,
        args.r_max,
        args.target,
    );

    let decode = find_threshold(&family, variant, precision, &bounds)?;
    let comparison = decode.reference_comparison();
    let baseline = if with_baseline {
        Some(baseline_threshold(&family, variant, precision, &bounds)?)
    } else {
        None
    };
    let decode_advantage = baseline
        .as_ref()
        .map(|b| decode.certified_scale - b.certified_scale);
    if let Some(comparison) = &comparison {
        eprintln!("{}", comparison.statement);
    }
    let resolved = ThresholdResolved {
        command: "threshold",
        family: family.clone(),
        variant,
        precision,
        baseline: with_baseline,
        bounds,
    };
    emit_json(
        out,
        &Envelope {
            tool_version: TOOL_VERSION,
            config_hash: config_hash(&resolved)?,
            seed,
            report: ThresholdReport {
                decode,
                comparison,
                baseline,
                decode_advantage,
            },
        },
    )?;
    Ok(EXIT_OK)
}

// ====================== simulate ======================

#[derive(Serialize)]
struct SimulateResolved<'a> {
    command: &'static str,
    #[serde(flatten)]
    config: &'a ProtocolConfig,
}

fn toml_distribution(d: &ErrorDistribution) -> toml::Value {
    let mut table = toml::Table::new();
    table.insert("p_i".into(), toml::Value::Float(d.p_i()));
    table.insert("p_x".into(), toml::Value::Float(d.p_x()));
    table.insert("p_y".into(), toml::Value::Float(d.p_y()));
    table.insert("p_z".into(), toml::Value::Float(d.p_z()));
    toml::Value::Table(table)
}

fn cmd_simulate(
    args: SimulateArgs,
    section: Option<toml::Table>,
    seed_flag: Option<u64>,
    fallback_seed: u64,
    out: Option<&Path>,
) -> Result<u8> {
    let mut table = section.unwrap_or_default();
    if let Some(text) = &args.variant {
        parse_variant(text)?;
        table.insert("variant".into(), toml::Value::String(text.clone()));
    }
    if let Some(n) = args.n_codes {
        let n = i64::try_from(n).map_err(|_| {
            Error::InvalidArgument(format!("n_codes {n} exceeds the supported range"))
        })?;
        table.insert("n_codes".into(), toml::Value::Integer(n));
    }
    if let Some(text) = &args.channel {
        table.insert("channel".into(), toml_distribution(&parse_distribution(text)?));
    }
    if let Some(loss) = args.loss {
        table.insert("loss".into(), toml::Value::Float(loss));
    }
    if let Some(kind) = &args.attack {
        match kind.as_str() {
            "none" | "intercept-resend-z" | "intercept-resend-bb84" => {
                let mut attack = toml::Table::new();
                attack.insert("kind".into(), toml::Value::String(kind.clone()));
                table.insert("attack".into(), toml::Value::Table(attack));
            }
            "custom-pauli" => {
                return Err(Error::InvalidArgument(
                    "a custom-pauli attack carries a distribution; configure it in the file"
                        .into(),
                ))
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown attack kind {other:?}"
                )))
            }
        }
    }
    match (&args.steps, args.final_r) {
        (steps, Some(final_r)) => {
            let parsed = match steps {
                Some(text) => parse_steps(text)?,
                None => Vec::new(),
            };
            let schedule = Schedule::new(parsed, final_r)?;
            let mut fixed = toml::Table::new();
            fixed.insert(
                "steps".into(),
                toml::Value::Array(
                    schedule
                        .steps()
                        .iter()
                        .map(|s| toml::Value::String(s.to_string()))
                        .collect(),
                ),
            );
            fixed.insert(
                "final_r".into(),
                toml::Value::Integer(i64::try_from(schedule.final_r()).expect("validated width")),
            );
            table.insert("schedule".into(), toml::Value::Table(fixed));
        }
        (Some(_), None) => {
            return Err(Error::InvalidArgument(
                "a fixed step sequence needs --final-r".into(),
            ))
        }
        (None, None) => {}
    }
    if let Some(tolerance) = args.abort_tolerance {
        table.insert("abort_tolerance".into(), toml::Value::Float(tolerance));
    }
    if let Some(seed) = seed_flag {
        let seed = i64::try_from(seed).map_err(|_| {
            Error::InvalidArgument(format!("seed {seed} exceeds the supported range"))
        })?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    } else if !table.contains_key("seed") {
        let seed = i64::try_from(fallback_seed).map_err(|_| {
            Error::InvalidArgument(format!("seed {fallback_seed} exceeds the supported range"))
        })?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }

    let config: ProtocolConfig = toml::Value::Table(table)
        .try_into()
        .map_err(Error::Config)?;
    let resolved = SimulateResolved {
        command: "simulate",
        config: &config,
    };
    let hash = config_hash(&resolved)?;

    let (report, records) = if args.records.is_some() {
        let (report, records) = run_with_records(&config)?;
        (report, Some(records))
    } else {
        (run(&config)?, None)
    };
    if let (Some(path), Some(records)) = (&args.records, records) {
        write_records_csv(path, &records, &hash, config.seed)?;
    }

    let exit = if report.abort {
        EXIT_ABORT
    } else if report.schedule.is_none() {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    };
    emit_json(
        out,
        &SeededEnvelope {
            tool_version: TOOL_VERSION,
            config_hash: hash,
            report,
        },
    )?;
    Ok(exit)
}

fn write_records_csv(
    path: &Path,
    records: &[SiftRecord],
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let mut buf = csv_banner(config_hash, seed).into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        writer.write_record([
            "index",
            "prep_basis",
            "meas_basis",
            "alice_bit",
            "bob_bit",
            "accepted",
        ])?;
        let bit = |b: bool| if b { "1" } else { "0" };
        let basis = |b: Basis| b.name();
        for record in records {
            writer.write_record([
                record.index.to_string().as_str(),
                basis(record.prep_basis),
                record.meas_basis.map_or("", basis),
                bit(record.alice_bit),
                record.bob_bit.map_or("", bit),
                if record.accepted { "true" } else { "false" },
            ])?;
        }
        writer.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

// ====================== optics check ======================

#[derive(Serialize)]
struct OpticsResolved {
    command: &'static str,
    variant: ProtocolVariant,
}

fn cmd_optics_check(
    args: OpticsCheckArgs,
    section: OpticsSection,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8> {
    let variant = match &args.variant {
        Some(text) => parse_variant(text)?,
        None => section.variant.unwrap_or(ProtocolVariant::SixState),
    };
    let report = equivalence_report(variant);
    let resolved = OpticsResolved {
        command: "optics-check",
        variant,
    };
    let hash = config_hash(&resolved)?;

    let mut buf = csv_banner(&hash, seed).into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        writer.write_record([
            "code_state",
            "e1",
            "e2",
            "outcome",
            "p_optics",
            "p_abstract",
            "deviation",
        ])?;
        for row in &report.rows {
            writer.write_record([
                row.code_state.as_str(),
                row.e1.as_str(),
                row.e2.as_str(),
                row.outcome.as_str(),
                row.p_optics.to_string().as_str(),
                row.p_abstract.to_string().as_str(),
                row.deviation.to_string().as_str(),
            ])?;
        }
        writer.flush()?;
    }

    let summary = format!(
        "optics equivalence ({}): max deviation {:.3e} over {} cells",
        variant_name(variant),
        report.max_deviation,
        report.rows.len()
    );
    emit_bytes(out, &buf)?;
    if out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    if report.max_deviation > 1e-12 {
        eprintln!("error: optical and record-level models disagree beyond tolerance");
        return Ok(EXIT_INTERNAL);
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_strings_parse_or_reject() {
        let d = parse_distribution("0.61, 0.13, 0.13, 0.13").unwrap();
        assert_eq!(d.p_i(), 0.61);
        assert!(parse_distribution("0.5,0.5").is_err());
        assert!(parse_distribution("a,b,c,d").is_err());
        assert!(parse_distribution("0.5,0.4,0.2,0.1").is_err(), "mass above one");
    }

    #[test]
    fn step_lists_parse_or_reject() {
        let steps = parse_steps("B, P3 ,P5").unwrap();
        assert_eq!(
            steps,
            vec![
                ScheduleStep::B,
                ScheduleStep::P { r: 3 },
                ScheduleStep::P { r: 5 }
            ]
        );
        assert!(parse_steps("B,P4").is_err(), "even interleaved width");
        assert!(parse_steps("Q").is_err());
        assert_eq!(parse_steps("  ").unwrap(), Vec::new());
    }

    #[test]
    fn bounds_resolution_prefers_flags() {
        let mut section = SearchBounds::default();
        section.max_b = 3;
        section.target = 0.1;
        let resolved = resolve_bounds(Some(section), Some(5), None, None, None);
        assert_eq!(resolved.max_b, 5);
        assert_eq!(resolved.target, 0.1);
        assert_eq!(resolved.r_max, SearchBounds::default().r_max);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RatesResolved {
            command: "rates",
            channel: ErrorDistribution::NOISELESS,
            mc_samples: 0,
        };
        let b = RatesResolved {
            command: "rates",
            channel: ErrorDistribution::NOISELESS,
            mc_samples: 1,
        };
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn experiment_files_deserialize() {
        let text = r#"
seed = 11

[rates]
channel = { p_i = 0.61, p_x = 0.13, p_y = 0.13, p_z = 0.13 }
mc_samples = 1000

[threshold]
family = { kind = "symmetric" }
precision = 0.01

[simulate]
variant = "four-state"
n_codes = 1000
channel = { p_i = 1.0, p_x = 0.0, p_y = 0.0, p_z = 0.0 }
schedule = "search"

["optics-check"]
variant = "six-state"
"#;
        let file: ExperimentFile = toml::from_str(text).unwrap();
        assert_eq!(file.seed, Some(11));
        assert_eq!(file.rates.unwrap().mc_samples, Some(1000));
        assert_eq!(file.threshold.unwrap().precision, Some(0.01));
        assert_eq!(
            file.optics_check.unwrap().variant,
            Some(ProtocolVariant::SixState)
        );
        let table = file.simulate.unwrap();
        assert_eq!(table["n_codes"].as_integer(), Some(1000));

        assert!(toml::from_str::<ExperimentFile>("unknown_key = 1").is_err());
    }

    #[test]
    fn exit_codes_classify_errors() {
        assert_eq!(
            error_exit_code(&Error::InvalidArgument("x".into())),
            EXIT_INVALID
        );
        assert_eq!(
            error_exit_code(&Error::InvalidDistribution("x".into())),
            EXIT_INVALID
        );
        assert_eq!(
            error_exit_code(&Error::EmptyCheckSet("x")),
            EXIT_INVALID
        );
        assert_eq!(
            error_exit_code(&Error::Io(std::io::Error::other("x"))),
            EXIT_INTERNAL
        );
    }
}
