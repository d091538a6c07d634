//! `subcash` -- command-line front end for the reserve engine.
//!
//! Subcommands: `reserve`, `dual`, `bridge`, `transfer`, `dynamic`, `check`.
//! Scenario inputs come from plain-text documents (see `doc`); reports are
//! deterministic key/value lines with all numbers printed to 12 decimals,
//! optional CSV exports go to `--out`. Exit codes: 0 ok, 1 check failed,
//! 2 parse, 3 validation, 4 numeric, 5 capacity. `SUBCASH_THREADS` caps the
//! worker pool of the engine's parallel grid sweeps.

mod doc;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use doc::{ingest, DocError, ScenarioDocument};
use subcash_core::bsde::{
    comparison_check, dual_control_recovery, solution_csv, solve_bsde, time_consistency_check,
    GeneratorSpec, Lattice,
};
use subcash_core::cash_additive::RiskMeasureSpec;
use subcash_core::format_fixed12;
use subcash_core::spot_forward::{
    check_forward_calibration, forward_from_spot, round_trip,
};
use subcash_core::subadditive::{
    ambiguous_discount_reserve, check_cash_subadditive, compose_with_convex, envelope_dual_exact,
    envelope_minimizer_discount, put_premium, ConvexDiscountFunction, Reserve,
    SubPenaltyTable,
};
use subcash_core::transfer::{solve_transfer, DescentConfig, TransferProblem};
use subcash_core::{EngineError, GridSpec, ScenarioSpace};

const EXIT_CHECK_FAILED: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_VALIDATION: i32 = 3;
const EXIT_NUMERIC: i32 = 4;
const EXIT_CAPACITY: i32 = 5;

#[derive(Parser)]
#[command(name = "subcash", version, about = "Scenario-based reserve engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reserve of a position under ambiguous discounting or a put premium.
    Reserve(ReserveArgs),
    /// Sub-probability penalty table and dual round trip.
    Dual(DualArgs),
    /// Spot/forward conversion with the calibration report.
    Bridge(BridgeArgs),
    /// Optimal risk transfer between two agents.
    Transfer(TransferArgs),
    /// Lattice BSDE solve with optional dual control recovery.
    Dynamic(DynamicArgs),
    /// Verification suites.
    #[command(subcommand)]
    Check(CheckCommand),
}

#[derive(Args)]
struct ReserveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    position: String,
    /// Base measure name (envelope and compose modes).
    #[arg(long)]
    measure: Option<String>,
    /// Envelope name; selects the worst-case discounting reserve.
    #[arg(long)]
    envelope: Option<String>,
    /// Evaluate through the convex-composition route instead of the
    /// positive/negative part closed form.
    #[arg(long)]
    compose: bool,
    /// Gross rate of the put premium reserve (selects put mode).
    #[arg(long)]
    put_rate: Option<f64>,
    /// Strike of the put premium (default 0).
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DualArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    measure: String,
    #[arg(long)]
    envelope: String,
    #[arg(long)]
    position: String,
    /// Sub-probability grid resolution per atom.
    #[arg(long, default_value_t = 11)]
    mu_res: usize,
    /// Position grid resolution for penalty suprema.
    #[arg(long, default_value_t = 9)]
    pos_res: usize,
    /// Position grid radius (default: four times the position sup-norm).
    #[arg(long)]
    pos_bound: Option<f64>,
    /// Scale grid "lo:hi:count" for the worst discounted forward sweep.
    #[arg(long)]
    c_grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BridgeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    measure: String,
    #[arg(long)]
    discount: String,
    #[arg(long)]
    bond: String,
    #[arg(long)]
    position: String,
    /// Comma-separated calibration multipliers (default "-2,-1,0,1,2").
    #[arg(long, allow_hyphen_values = true)]
    lambdas: Option<String>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    measure_a: String,
    #[arg(long)]
    envelope_a: Option<String>,
    #[arg(long)]
    measure_b: String,
    #[arg(long)]
    envelope_b: Option<String>,
    #[arg(long)]
    exposure_a: String,
    #[arg(long)]
    exposure_b: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DynamicArgs {
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    horizon: f64,
    /// Fixed discount rate (linear generator).
    #[arg(long)]
    rate: Option<f64>,
    /// Lower ambiguous rate bound.
    #[arg(long)]
    rate_low: Option<f64>,
    /// Upper ambiguous rate bound.
    #[arg(long)]
    rate_high: Option<f64>,
    /// Constant horizon payoff.
    #[arg(long, allow_hyphen_values = true)]
    terminal_const: Option<f64>,
    /// Linear horizon payoff "intercept:slope" in the driver value.
    #[arg(long, allow_hyphen_values = true)]
    terminal_linear: Option<String>,
    /// Recover the optimal rate controls and verify the recomputation.
    #[arg(long)]
    dual: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Cash sub-additivity of a reserve along an m grid.
    Subadd(CheckSubaddArgs),
    /// Comparison theorem: ambiguous rate versus a fixed rate inside the band.
    Comparison(CheckComparisonArgs),
    /// Two-stage versus direct backward induction.
    Timeconsistency(CheckTimeConsistencyArgs),
}

#[derive(Args)]
struct CheckSubaddArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    measure: String,
    /// Envelope name; without it the bare cash additive measure is checked.
    #[arg(long)]
    envelope: Option<String>,
    #[arg(long)]
    position: String,
    /// Cash grid "lo:hi:count".
    #[arg(long, allow_hyphen_values = true)]
    m_grid: String,
}

#[derive(Args)]
struct CheckComparisonArgs {
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    rate_low: f64,
    #[arg(long)]
    rate_high: f64,
    /// Fixed rate compared against the ambiguous band.
    #[arg(long)]
    beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    terminal_const: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    terminal_linear: Option<String>,
}

#[derive(Args)]
struct CheckTimeConsistencyArgs {
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    rate_low: f64,
    #[arg(long)]
    rate_high: f64,
    #[arg(long)]
    t1: usize,
    #[arg(long)]
    t2: usize,
    #[arg(long, allow_hyphen_values = true)]
    terminal_const: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    terminal_linear: Option<String>,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::DimensionMismatch { .. }
            | EngineError::Validation(_)
            | EngineError::EmptyTable
            | EngineError::Unsupported(_) => EXIT_VALIDATION,
            EngineError::Capacity(_) => EXIT_CAPACITY,
            EngineError::Numeric(_) | EngineError::NonConvergence { .. } => EXIT_NUMERIC,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DocError> for CliError {
    fn from(e: DocError) -> Self {
        let code = match &e {
            DocError::Parse { .. } => EXIT_PARSE,
            DocError::Validation { .. } => EXIT_VALIDATION,
        };
        CliError::new(code, e.to_string())
    }
}

/// FNV-1a 64-bit content digest; deterministic across runs by construction.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Report {
    lines: Vec<String>,
}

impl Report {
    fn new(echo: &str, scenario_raw: Option<&[u8]>) -> Self {
        let mut bytes = echo.as_bytes().to_vec();
        if let Some(raw) = scenario_raw {
            bytes.extend_from_slice(raw);
        }
        let digest = fnv1a(&bytes);
        Report {
            lines: vec![format!("command: {echo}"), format!("inputs: digest={digest:016x}")],
        }
    }

    fn kv(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    fn num(&mut self, key: &str, value: f64) {
        self.kv(key, format_fixed12(value));
    }

    fn finish(mut self, status: &str) -> String {
        self.lines.push(format!("status: {status}"));
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

struct Outcome {
    text: String,
    passed: bool,
    csv: Option<(PathBuf, String)>,
}

fn lookup<'a, T>(
    map: &'a std::collections::BTreeMap<String, T>,
    name: &str,
    what: &str,
) -> Result<&'a T, CliError> {
    map.get(name)
        .ok_or_else(|| CliError::new(EXIT_VALIDATION, format!("unknown {what} '{name}'")))
}

fn parse_colon_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!("range '{spec}' must be 'lo:hi:count'")));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::usage(format!("bad range bound '{}'", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::usage(format!("bad range bound '{}'", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CliError::usage(format!("bad range count '{}'", parts[2])))?;
    if count < 2 || hi <= lo || hi.is_nan() || lo.is_nan() {
        return Err(CliError::usage(format!("range '{spec}' needs lo < hi and count >= 2")));
    }
    Ok((0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect())
}

fn parse_pair(spec: &str, what: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| CliError::usage(format!("{what} '{spec}' must be 'a:b'")))?;
    let a: f64 = a.parse().map_err(|_| CliError::usage(format!("bad number '{a}' in {what}")))?;
    let b: f64 = b.parse().map_err(|_| CliError::usage(format!("bad number '{b}' in {what}")))?;
    Ok((a, b))
}

fn terminal_payoff(
    lattice: &Lattice,
    constant: Option<f64>,
    linear: Option<&str>,
) -> Result<Vec<f64>, CliError> {
    match (constant, linear) {
        (Some(c), None) => Ok(vec![c; lattice.terminal_size()]),
        (None, Some(spec)) => {
            let (intercept, slope) = parse_pair(spec, "--terminal-linear")?;
            Ok((0..lattice.terminal_size())
                .map(|k| intercept + slope * lattice.driver(lattice.steps(), k))
                .collect())
        }
        _ => Err(CliError::usage(
            "exactly one of --terminal-const or --terminal-linear is required",
        )),
    }
}

fn csv_labels(space: &ScenarioSpace) -> String {
    space
        .labels()
        .iter()
        .map(|l| format!("w_{l}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn run_reserve(args: &ReserveArgs) -> Result<Outcome, CliError> {
    let document = ingest(&args.scenario)?;
    let x = lookup(&document.positions, &args.position, "position")?;

    if args.put_rate.is_some() && args.envelope.is_some() {
        return Err(CliError::usage("choose one of --envelope or --put-rate"));
    }
    if args.strike.is_some() && args.put_rate.is_none() {
        return Err(CliError::usage("--strike needs --put-rate"));
    }
    if args.compose && args.envelope.is_none() {
        return Err(CliError::usage("--compose needs --envelope"));
    }

    if let Some(rate) = args.put_rate {
        let strike = args.strike.unwrap_or(0.0);
        let mut echo = format!(
            "reserve --scenario {} --position {} --put-rate {rate} --strike {strike}",
            args.scenario.display(),
            args.position
        );
        if let Some(out) = &args.out {
            echo.push_str(&format!(" --out {}", out.display()));
        }
        let value = put_premium(&document.baseline, rate, x, strike)?;
        let mut report = Report::new(&echo, Some(&document.raw));
        report.kv("mode", "put");
        report.num("reserve", value);
        let csv = args.out.as_ref().map(|out| {
            let mut content = String::from("atom,x,put_payoff\n");
            for (i, label) in document.space.labels().iter().enumerate() {
                let xi = x.values()[i];
                content.push_str(&format!(
                    "{label},{},{}\n",
                    format_fixed12(xi),
                    format_fixed12((strike - xi).max(0.0))
                ));
            }
            (out.clone(), content)
        });
        return Ok(Outcome { text: report.finish("OK"), passed: true, csv });
    }

    let envelope_name = args
        .envelope
        .as_ref()
        .ok_or_else(|| CliError::usage("one of --envelope or --put-rate is required"))?;
    let measure_name = args
        .measure
        .as_ref()
        .ok_or_else(|| CliError::usage("--measure is required with --envelope"))?;
    let spec = lookup(&document.measures, measure_name, "measure")?;
    let envelope = lookup(&document.envelopes, envelope_name, "envelope")?;

    let mut echo = format!(
        "reserve --scenario {} --position {} --measure {} --envelope {}",
        args.scenario.display(),
        args.position,
        measure_name,
        envelope_name
    );
    if args.compose {
        echo.push_str(" --compose");
    }
    if let Some(out) = &args.out {
        echo.push_str(&format!(" --out {}", out.display()));
    }

    let value = if args.compose {
        let v = ConvexDiscountFunction::from_envelope(envelope);
        compose_with_convex(spec, &v, x)?
    } else {
        ambiguous_discount_reserve(spec, envelope, x)?
    };
    let mut report = Report::new(&echo, Some(&document.raw));
    report.kv("mode", if args.compose { "compose" } else { "envelope" });
    report.num("reserve", value);

    let csv = if let Some(out) = &args.out {
        let d_star = envelope_minimizer_discount(envelope, x)?;
        let mut content = String::from("atom,x,d_low,d_high,d_star\n");
        for (i, label) in document.space.labels().iter().enumerate() {
            content.push_str(&format!(
                "{label},{},{},{},{}\n",
                format_fixed12(x.values()[i]),
                format_fixed12(envelope.low().values()[i]),
                format_fixed12(envelope.high().values()[i]),
                format_fixed12(d_star.values()[i])
            ));
        }
        Some((out.clone(), content))
    } else {
        None
    };
    Ok(Outcome { text: report.finish("OK"), passed: true, csv })
}

fn run_dual(args: &DualArgs) -> Result<Outcome, CliError> {
    let document = ingest(&args.scenario)?;
    let spec = lookup(&document.measures, &args.measure, "measure")?;
    let envelope = lookup(&document.envelopes, &args.envelope, "envelope")?;
    let x = lookup(&document.positions, &args.position, "position")?;

    let mut echo = format!(
        "dual --scenario {} --measure {} --envelope {} --position {} --mu-res {} --pos-res {}",
        args.scenario.display(),
        args.measure,
        args.envelope,
        args.position,
        args.mu_res,
        args.pos_res
    );
    if let Some(b) = args.pos_bound {
        echo.push_str(&format!(" --pos-bound {b}"));
    }
    if let Some(c) = &args.c_grid {
        echo.push_str(&format!(" --c-grid {c}"));
    }
    if let Some(out) = &args.out {
        echo.push_str(&format!(" --out {}", out.display()));
    }

    let reserve = Reserve::Envelope { base: spec.clone(), envelope: envelope.clone() };
    let direct = reserve.evaluate(x)?;
    let bound = args.pos_bound.unwrap_or_else(|| (4.0 * x.linf_norm()).max(1.0));
    let mu_grid = GridSpec::new(args.mu_res, 1.0)?;
    let pos_grid = GridSpec::new(args.pos_res, bound)?;
    let table = SubPenaltyTable::build(&reserve, &document.space, &mu_grid, &pos_grid)?;
    let dual = table.dual_value(x)?;
    let normalized = table.normalized_dual(x)?;

    let mut report = Report::new(&echo, Some(&document.raw));
    report.num("reserve", direct);
    report.num("dual", dual);
    report.num("gap", direct - dual);
    report.kv("entries", table.entries().len());
    report.kv("finite_entries", table.finite_entries());
    report.num("mass_quantum", table.mass_quantum());
    report.num("normalized_scale", normalized.scale);
    if let RiskMeasureSpec::Linear(base) = spec {
        let (exact, _) = envelope_dual_exact(base, envelope, x)?;
        report.num("exact_dual", exact);
        report.num("exact_gap", direct - exact);
    }
    if let Some(c_spec) = &args.c_grid {
        let c_grid = parse_colon_range(c_spec)?;
        let wdf = table.worst_discounted_forward(x, &c_grid)?;
        report.num("worst_forward", wdf.value);
    }

    let csv = args.out.as_ref().map(|out| {
        let mut content = format!("index,mass,alpha,{}\n", csv_labels(&document.space));
        for (i, (mu, alpha)) in table.entries().iter().enumerate() {
            let alpha_txt =
                if alpha.is_finite() { format_fixed12(*alpha) } else { "inf".to_string() };
            let weights = mu
                .weights()
                .iter()
                .map(|w| format_fixed12(*w))
                .collect::<Vec<_>>()
                .join(",");
            content.push_str(&format!(
                "{i},{},{alpha_txt},{weights}\n",
                format_fixed12(mu.mass())
            ));
        }
        (out.clone(), content)
    });
    Ok(Outcome { text: report.finish("OK"), passed: true, csv })
}

fn run_bridge(args: &BridgeArgs) -> Result<Outcome, CliError> {
    let document = ingest(&args.scenario)?;
    let spec = lookup(&document.measures, &args.measure, "measure")?;
    let discount = lookup(&document.discounts, &args.discount, "discount")?;
    let bond = lookup(&document.bonds, &args.bond, "bond")?;
    let x = lookup(&document.positions, &args.position, "position")?;

    let lambda_spec = args.lambdas.clone().unwrap_or_else(|| "-2,-1,0,1,2".to_string());
    let lambdas: Result<Vec<f64>, CliError> = lambda_spec
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad lambda '{tok}'")))
        })
        .collect();
    let lambdas = lambdas?;

    let echo = format!(
        "bridge --scenario {} --measure {} --discount {} --bond {} --position {} --lambdas {}",
        args.scenario.display(),
        args.measure,
        args.discount,
        args.bond,
        args.position,
        lambda_spec
    );

    let forward = forward_from_spot(spec, discount, bond, x)?;
    let direct = spec.evaluate(x)?;
    let roundtrip = round_trip(spec, discount, bond, x)?;
    let roundtrip_gap = (roundtrip - direct).abs();
    let calibration = check_forward_calibration(spec, discount, bond, &lambdas)?;

    let mut report = Report::new(&echo, Some(&document.raw));
    report.num("forward", forward);
    report.num("spot_direct", direct);
    report.num("roundtrip", roundtrip);
    report.num("roundtrip_gap", roundtrip_gap);
    if calibration.passed {
        report.kv("calibration", "PASS");
    } else {
        let (lambda, got, want) = calibration.failures[0];
        report.kv(
            "calibration",
            format!(
                "FAIL (lambda={lambda}, got={}, want={})",
                format_fixed12(got),
                format_fixed12(want)
            ),
        );
    }
    let passed = calibration.passed && roundtrip_gap <= 1e-9;
    Ok(Outcome {
        text: report.finish(if passed { "PASS" } else { "FAIL" }),
        passed,
        csv: None,
    })
}

fn build_reserve(
    document: &ScenarioDocument,
    measure: &str,
    envelope: Option<&String>,
) -> Result<Reserve, CliError> {
    let spec = lookup(&document.measures, measure, "measure")?;
    Ok(match envelope {
        Some(name) => Reserve::Envelope {
            base: spec.clone(),
            envelope: lookup(&document.envelopes, name, "envelope")?.clone(),
        },
        None => Reserve::Additive(spec.clone()),
    })
}

fn run_transfer(args: &TransferArgs) -> Result<Outcome, CliError> {
    let document = ingest(&args.scenario)?;
    let exposure_a = lookup(&document.positions, &args.exposure_a, "position")?.clone();
    let exposure_b = lookup(&document.positions, &args.exposure_b, "position")?.clone();
    let measure_a = build_reserve(&document, &args.measure_a, args.envelope_a.as_ref())?;
    let measure_b = build_reserve(&document, &args.measure_b, args.envelope_b.as_ref())?;

    let mut echo = format!(
        "transfer --scenario {} --measure-a {} --measure-b {} --exposure-a {} --exposure-b {}",
        args.scenario.display(),
        args.measure_a,
        args.measure_b,
        args.exposure_a,
        args.exposure_b
    );
    if let Some(e) = &args.envelope_a {
        echo.push_str(&format!(" --envelope-a {e}"));
    }
    if let Some(e) = &args.envelope_b {
        echo.push_str(&format!(" --envelope-b {e}"));
    }
    if let Some(out) = &args.out {
        echo.push_str(&format!(" --out {}", out.display()));
    }

    let problem = TransferProblem::new(exposure_a, exposure_b, measure_a, measure_b)?;
    let solution = solve_transfer(&problem, &DescentConfig::default())?;
    let psi = problem.exposure_a.add(&problem.exposure_b)?;

    let mut report = Report::new(&echo, Some(&document.raw));
    report.num("residual", solution.residual);
    report.num("price", solution.price);
    report.kv(
        "contract",
        solution
            .contract
            .values()
            .iter()
            .map(|v| format_fixed12(*v))
            .collect::<Vec<_>>()
            .join(", "),
    );
    report.kv(
        "minimizer",
        if solution.non_unique { "representative (flat directions)" } else { "unique within tolerance" },
    );
    report.kv("passes", solution.passes);

    let csv = args.out.as_ref().map(|out| {
        let mut content = String::from("atom,psi,f_star,h_star\n");
        for (i, label) in document.space.labels().iter().enumerate() {
            let f_star = solution.contract.values()[i] + problem.exposure_b.values()[i];
            content.push_str(&format!(
                "{label},{},{},{}\n",
                format_fixed12(psi.values()[i]),
                format_fixed12(f_star),
                format_fixed12(solution.contract.values()[i])
            ));
        }
        (out.clone(), content)
    });
    Ok(Outcome { text: report.finish("OK"), passed: true, csv })
}

fn dynamic_generator(
    rate: Option<f64>,
    rate_low: Option<f64>,
    rate_high: Option<f64>,
    steps: usize,
) -> Result<GeneratorSpec, CliError> {
    match (rate, rate_low, rate_high) {
        (Some(r), None, None) => Ok(GeneratorSpec::linear_rate_constant(r, steps)?),
        (None, Some(lo), Some(hi)) => Ok(GeneratorSpec::ambiguous_rate_constant(lo, hi, steps)?),
        _ => Err(CliError::usage(
            "specify either --rate or both --rate-low and --rate-high",
        )),
    }
}

fn run_dynamic(args: &DynamicArgs) -> Result<Outcome, CliError> {
    let lattice = Lattice::new(args.steps, args.horizon)?;
    let generator =
        dynamic_generator(args.rate, args.rate_low, args.rate_high, args.steps)?;
    let payoff = terminal_payoff(&lattice, args.terminal_const, args.terminal_linear.as_deref())?;
    let terminal: Vec<f64> = payoff.iter().map(|v| -v).collect();

    let mut echo = format!("dynamic --steps {} --horizon {}", args.steps, args.horizon);
    match (args.rate, args.rate_low, args.rate_high) {
        (Some(r), _, _) => echo.push_str(&format!(" --rate {r}")),
        (_, Some(lo), Some(hi)) => echo.push_str(&format!(" --rate-low {lo} --rate-high {hi}")),
        _ => {}
    }
    if let Some(c) = args.terminal_const {
        echo.push_str(&format!(" --terminal-const {c}"));
    }
    if let Some(l) = &args.terminal_linear {
        echo.push_str(&format!(" --terminal-linear {l}"));
    }
    if args.dual {
        echo.push_str(" --dual");
    }
    if let Some(out) = &args.out {
        echo.push_str(&format!(" --out {}", out.display()));
    }

    let solution = solve_bsde(&lattice, &generator, &terminal)?;
    let mut report = Report::new(&echo, None);
    report.num("y_root", solution.root_value());
    report.num("z_root", solution.volatility(0, 0));
    report.kv("steps", args.steps);
    report.num("dt", lattice.dt());
    report.kv("fixed_point_iterations", solution.max_fixed_point_iterations());

    let mut passed = true;
    let controls = if args.dual {
        let recovery = dual_control_recovery(&lattice, &generator, &solution)?;
        report.num("dual_recomputed_root", recovery.recomputed_root);
        report.num("dual_gap", recovery.max_abs_gap);
        report.kv("dual", if recovery.passed { "PASS" } else { "FAIL" });
        passed = recovery.passed;
        Some(recovery.rate_controls)
    } else {
        None
    };

    let csv = args
        .out
        .as_ref()
        .map(|out| (out.clone(), solution_csv(&lattice, &solution, controls.as_deref())));
    let status = if args.dual {
        if passed {
            "PASS"
        } else {
            "FAIL"
        }
    } else {
        "OK"
    };
    Ok(Outcome { text: report.finish(status), passed, csv })
}

fn run_check_subadd(args: &CheckSubaddArgs) -> Result<Outcome, CliError> {
    let document = ingest(&args.scenario)?;
    let x = lookup(&document.positions, &args.position, "position")?;
    let reserve = build_reserve(&document, &args.measure, args.envelope.as_ref())?;
    let m_grid = parse_colon_range(&args.m_grid)?;

    let mut echo = format!(
        "check subadd --scenario {} --measure {}",
        args.scenario.display(),
        args.measure
    );
    if let Some(e) = &args.envelope {
        echo.push_str(&format!(" --envelope {e}"));
    }
    echo.push_str(&format!(" --position {} --m-grid {}", args.position, args.m_grid));

    let result = check_cash_subadditive(|p| reserve.evaluate(p), x, &m_grid)?;
    let mut report = Report::new(&echo, Some(&document.raw));
    report.kv("monotone_map", if result.monotonicity_violation.is_none() { "PASS" } else { "FAIL" });
    if let Some((m1, m2, v1, v2)) = result.monotonicity_violation {
        report.kv(
            "monotone_witness",
            format!("m {m1} -> {m2}: {} -> {}", format_fixed12(v1), format_fixed12(v2)),
        );
    }
    report.kv("upper_inequality", if result.upper_violation.is_none() { "PASS" } else { "FAIL" });
    report.kv("lower_inequality", if result.lower_violation.is_none() { "PASS" } else { "FAIL" });
    Ok(Outcome {
        text: report.finish(if result.passed { "PASS" } else { "FAIL" }),
        passed: result.passed,
        csv: None,
    })
}

fn run_check_comparison(args: &CheckComparisonArgs) -> Result<Outcome, CliError> {
    let lattice = Lattice::new(args.steps, args.horizon)?;
    let payoff = terminal_payoff(&lattice, args.terminal_const, args.terminal_linear.as_deref())?;
    let terminal: Vec<f64> = payoff.iter().map(|v| -v).collect();
    let ambiguous =
        GeneratorSpec::ambiguous_rate_constant(args.rate_low, args.rate_high, args.steps)?;
    let fixed = GeneratorSpec::linear_rate_constant(args.beta, args.steps)?;

    let mut echo = format!(
        "check comparison --steps {} --horizon {} --rate-low {} --rate-high {} --beta {}",
        args.steps, args.horizon, args.rate_low, args.rate_high, args.beta
    );
    if let Some(c) = args.terminal_const {
        echo.push_str(&format!(" --terminal-const {c}"));
    }
    if let Some(l) = &args.terminal_linear {
        echo.push_str(&format!(" --terminal-linear {l}"));
    }

    let result = comparison_check(&lattice, &ambiguous, &fixed, &terminal, &terminal)?;
    let mut report = Report::new(&echo, None);
    report.kv("preconditions", if result.preconditions_hold { "HOLD" } else { "VIOLATED" });
    if let Some(detail) = &result.precondition_detail {
        report.kv("precondition_detail", detail);
    }
    let passed = result.ordered == Some(true);
    match result.ordered {
        Some(ok) => report.kv("dominance", if ok { "PASS" } else { "FAIL" }),
        None => report.kv("dominance", "NO CLAIM"),
    }
    if let Some((step, node, y1, y2)) = result.violations.first() {
        report.kv(
            "violation",
            format!("node ({step}, {node}): {} < {}", format_fixed12(*y1), format_fixed12(*y2)),
        );
    }
    Ok(Outcome {
        text: report.finish(if passed { "PASS" } else { "FAIL" }),
        passed,
        csv: None,
    })
}

fn run_check_time_consistency(args: &CheckTimeConsistencyArgs) -> Result<Outcome, CliError> {
    let lattice = Lattice::new(args.steps, args.horizon)?;
    let payoff = terminal_payoff(&lattice, args.terminal_const, args.terminal_linear.as_deref())?;
    let terminal: Vec<f64> = payoff.iter().map(|v| -v).collect();
    let generator =
        GeneratorSpec::ambiguous_rate_constant(args.rate_low, args.rate_high, args.steps)?;

    let mut echo = format!(
        "check timeconsistency --steps {} --horizon {} --rate-low {} --rate-high {} --t1 {} --t2 {}",
        args.steps, args.horizon, args.rate_low, args.rate_high, args.t1, args.t2
    );
    if let Some(c) = args.terminal_const {
        echo.push_str(&format!(" --terminal-const {c}"));
    }
    if let Some(l) = &args.terminal_linear {
        echo.push_str(&format!(" --terminal-linear {l}"));
    }

    let result = time_consistency_check(&lattice, &generator, &terminal, args.t1, args.t2)?;
    let mut report = Report::new(&echo, None);
    report.num("max_abs_gap", result.max_abs_gap);
    Ok(Outcome {
        text: report.finish(if result.passed { "PASS" } else { "FAIL" }),
        passed: result.passed,
        csv: None,
    })
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Reserve(args) => run_reserve(args),
        Command::Dual(args) => run_dual(args),
        Command::Bridge(args) => run_bridge(args),
        Command::Transfer(args) => run_transfer(args),
        Command::Dynamic(args) => run_dynamic(args),
        Command::Check(CheckCommand::Subadd(args)) => run_check_subadd(args),
        Command::Check(CheckCommand::Comparison(args)) => run_check_comparison(args),
        Command::Check(CheckCommand::Timeconsistency(args)) => run_check_time_consistency(args),
    }
}

fn write_csv(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| {
        CliError::new(EXIT_NUMERIC, format!("cannot write {}: {e}", path.display()))
    })
}

fn main() {
    if let Ok(threads) = std::env::var("SUBCASH_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                subcash_core::configure_worker_threads(n);
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if let Some((path, content)) = &outcome.csv {
                if let Err(e) = write_csv(path, content) {
                    eprintln!("error: {}", e.message);
                    std::process::exit(e.code);
                }
            }
            print!("{}", outcome.text);
            std::process::exit(if outcome.passed { 0 } else { EXIT_CHECK_FAILED });
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
