//! Command-line front end: generate spaces, run analyses and write reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qms::bumps::{
    bump_chain, bump_function, bump_gradient, chain_constants, chain_seminorms, default_alpha, fractional_spec, BumpChain, BumpFunction,
    BumpGradient, ChainConstants, ChainVariant,
};
use qms::embeddings::{best_constant, critical_balls, BatteryOptions, EmbeddingCase, Evaluator, LocalCheck, Regime, Theorem};
use qms::generate::{cantor, grid, islands, random, random_asymmetric, snowflake};
use qms::geometry::{
    doubling_analysis, half_mass_radius, index_bounds, regularity_fit, uniform_perfectness, v_condition, DoublingReport, IndexBounds,
    Perfectness, RegularityFit, VCondition, PERFECTNESS_FLOOR,
};
use qms::gradients::{
    minimal_seminorm, minimal_transition_seminorm, verify_gradient, Gradient, GradientCheck, MinimalSeminorm, SeminormSpec,
};
use qms::recovery::{
    recover_doubling, recover_lower_regularity, triviality_csv, triviality_scan, Family, RecoveryMode, RecoveryParams, RecoveryReport,
};
use qms::regularization::{regularize, verify_metrization, MetrizationReport};
use qms::report::{csv_number, emit, num, to_json};
use qms::space::SpaceSummary;
use qms::{Distance, Error, PointId, QuasiMetricSpace};

const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "qms", version, about = "Analysis of finite quasi-metric measure spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a space file.
    Gen(GenArgs),
    /// Geometric constants of a space.
    Analyze(AnalyzeArgs),
    /// Regularized quasi-metric and its verification.
    Regularize(RegularizeArgs),
    /// Minimal fractional seminorm of a function.
    Seminorm(SeminormArgs),
    /// Bump function, its explicit gradient and optionally its chain.
    Bumps(BumpsArgs),
    /// Best constant of an embedding inequality, or a single local check.
    Verify(VerifyArgs),
    /// Lower regularity or doubling constant recovered from an embedding.
    Recover(RecoverArgs),
    /// Transition seminorm across resolutions of a space family.
    Triviality(TrivialityArgs),
}

#[derive(Args)]
struct Output {
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Input {
    /// Space file; standard input when absent or "-".
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenFamily {
    Grid,
    Cantor,
    Islands,
    Random,
    Asymmetric,
    Snowflake,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    family: GenFamily,
    /// Points per axis (grid) or number of points (random, asymmetric).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long, value_parser = finite)]
    contraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, value_parser = finite)]
    gap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = finite)]
    skew: Option<f64>,
    /// Snowflake exponent applied to the distances of the base space.
    #[arg(long, value_parser = finite)]
    beta: Option<f64>,
    /// Base space of the snowflake family.
    #[arg(long)]
    base: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: Input,
    /// Dimension for the lower regularity and doubling fits.
    #[arg(long = "Q", value_parser = finite)]
    big_q: Option<f64>,
    #[arg(long)]
    center: Option<PointId>,
    #[arg(long, value_parser = finite)]
    radius: Option<f64>,
    /// Dilation of the ball in the lower mass condition.
    #[arg(long, value_parser = finite)]
    sigma: Option<f64>,
    /// Threshold of the uniform perfectness verdict.
    #[arg(long, value_parser = finite, default_value_t = PERFECTNESS_FLOOR)]
    floor: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct RegularizeArgs {
    #[command(flatten)]
    input: Input,
    /// Print the regularized space file instead of the report.
    #[arg(long)]
    emit_space: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeminormKind {
    Sobolev,
    Tl,
    Besov,
}

#[derive(Args)]
struct SmoothnessArgs {
    #[arg(long, value_parser = finite)]
    s: f64,
    #[arg(long, value_parser = finite)]
    p: f64,
    /// Inner exponent; "inf" for the supremum.
    #[arg(long, value_parser = real_or_inf, default_value = "inf")]
    q: f64,
}

#[derive(Args)]
struct SeminormArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    smooth: SmoothnessArgs,
    #[arg(long, value_enum, default_value_t = SeminormKind::Tl)]
    kind: SeminormKind,
    /// Function values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = finite, conflicts_with = "fixed")]
    u: Vec<f64>,
    /// Prescribed values `point=value`, comma separated; the others are optimized.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = fixed_value)]
    fixed: Vec<(PointId, f64)>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BumpsArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    smooth: SmoothnessArgs,
    #[arg(long)]
    center: PointId,
    /// Outer radius of the bump, or the ball radius of the chain.
    #[arg(long, value_parser = finite)]
    radius: f64,
    /// Inner radius of the bump.
    #[arg(long, value_parser = finite, default_value_t = 0.0)]
    inner: f64,
    /// Hölder exponent; defaults to the regularization exponent.
    #[arg(long, value_parser = finite)]
    alpha: Option<f64>,
    #[arg(long)]
    besov: bool,
    /// Also compute the minimal seminorm of the bump.
    #[arg(long)]
    minimal: bool,
    /// Build the bump chain of the ball instead of a single bump.
    #[arg(long)]
    chain: bool,
    /// Half-mass constant; selects the half-mass chain.
    #[arg(long, value_parser = finite)]
    c0: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long, value_parser = parse_theorem)]
    theorem: Theorem,
    #[arg(long, value_parser = parse_regime)]
    mode: Regime,
    #[command(flatten)]
    smooth: SmoothnessArgs,
    #[arg(long = "Q", value_parser = finite)]
    big_q: f64,
    /// Ball dilation; defaults to the quasi-triangle constant of the space.
    #[arg(long, value_parser = finite)]
    sigma: Option<f64>,
    #[arg(long)]
    besov: bool,
    #[arg(long, value_parser = finite)]
    c1: Option<f64>,
    #[arg(long, value_parser = finite)]
    omega: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    case: CaseArgs,
    /// Lower mass constant of the condition-based inequalities.
    #[arg(long, value_parser = finite)]
    b: Option<f64>,
    /// Reduced smoothness of the eps family.
    #[arg(long, value_parser = finite)]
    epsilon: Option<f64>,
    /// Constant to test the inequality against.
    #[arg(long, value_parser = finite)]
    constant: Option<f64>,
    #[arg(long)]
    center: Option<PointId>,
    #[arg(long, value_parser = finite)]
    radius: Option<f64>,
    /// Test function for a single-ball check, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = finite)]
    u: Vec<f64>,
    /// Number of seeded random test functions added to the battery.
    #[arg(long, default_value_t = 2)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_chains: bool,
    #[arg(long)]
    no_transitions: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    case: CaseArgs,
    /// Exponent split of the doubling Trudinger mode.
    #[arg(long, value_parser = finite, default_value_t = 2.0)]
    beta: f64,
    /// Measured embedding constant; measured with the default battery when absent.
    #[arg(long, value_parser = real_or_inf)]
    constant: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanFamily {
    Line,
    Cantor,
}

#[derive(Args)]
struct TrivialityArgs {
    #[arg(long, value_enum)]
    family: ScanFamily,
    /// Line intervals or Cantor depths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    resolutions: Vec<usize>,
    /// Smoothness values, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = finite, required = true)]
    s: Vec<f64>,
    #[arg(long, value_parser = finite, default_value_t = 1.0)]
    p: f64,
    #[arg(long, value_parser = real_or_inf, default_value = "inf")]
    q: f64,
    #[arg(long, value_parser = finite, default_value_t = 1.0 / 3.0)]
    contraction: f64,
    #[arg(long)]
    besov: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a finite number")),
    }
}

fn real_or_inf(s: &str) -> Result<f64, String> {
    let word = s.strip_prefix('+').unwrap_or(s);
    if word.eq_ignore_ascii_case("inf") || word.eq_ignore_ascii_case("infinity") {
        Ok(f64::INFINITY)
    } else {
        finite(s).map_err(|e| format!("{e} (use \"inf\" for infinity)"))
    }
}

fn fixed_value(s: &str) -> Result<(PointId, f64), String> {
    let (point, value) = s.split_once('=').ok_or_else(|| format!("'{s}' is not of the form point=value"))?;
    let point = point.trim().parse::<PointId>().map_err(|e| format!("bad point '{point}': {e}"))?;
    Ok((point, finite(value.trim())?))
}

fn parse_theorem(s: &str) -> Result<Theorem, String> {
    s.parse()
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse()
}

/// Failure of a command with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn verdict(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VERDICT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if matches!(&e, Error::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe) {
            return Failure {
                code: 0,
                message: String::new(),
            };
        }
        let code = match &e {
            Error::Validation(_) | Error::InvalidSpec(_) | Error::Io(_) | Error::Json(_) | Error::FunctionLength { .. } => EXIT_IO,
            Error::InvalidArgument(_)
            | Error::RegimeMismatch(_)
            | Error::BadExponents { .. }
            | Error::AlphaOutOfRange { .. }
            | Error::BadRadii { .. }
            | Error::CriticalSmoothness { .. }
            | Error::NonconvexRegime { .. }
            | Error::CriticalOrSupercritical { .. }
            | Error::GradientShape => EXIT_USAGE,
            _ => EXIT_VERDICT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Regularize(a) => run_regularize(a),
        Command::Seminorm(a) => run_seminorm(a),
        Command::Bumps(a) => run_bumps(a),
        Command::Verify(a) => run_verify(a),
        Command::Recover(a) => run_recover(a),
        Command::Triviality(a) => run_triviality(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_space(input: &Input) -> Result<QuasiMetricSpace, Failure> {
    match input.input.as_deref() {
        Some(p) if p != Path::new("-") => Ok(QuasiMetricSpace::read(p)?),
        _ => {
            let mut body = String::new();
            std::io::stdin().read_to_string(&mut body).map_err(Error::from)?;
            Ok(QuasiMetricSpace::from_json_str(&body)?)
        }
    }
}

fn json_only(output: &Output, command: &str) -> Outcome {
    if output.format == Format::Csv {
        return Err(Failure::usage(format!("{command} has no CSV form")));
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, output: &Output) -> Outcome {
    emit(&to_json(value)?, output.out.as_deref())?;
    Ok(())
}

fn need<T>(value: Option<T>, flag: &str, family: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("{family} needs --{flag}")))
}

fn run_gen(a: GenArgs) -> Outcome {
    json_only(&a.output, "gen")?;
    let space = match a.family {
        GenFamily::Grid => grid(need(a.n, "n", "grid")?, a.dim)?,
        GenFamily::Cantor => cantor(need(a.depth, "depth", "cantor")?, a.contraction.unwrap_or(1.0 / 3.0))?,
        GenFamily::Islands => {
            if a.sizes.is_empty() {
                return Err(Failure::usage("islands needs --sizes"));
            }
            islands(&a.sizes, need(a.gap, "gap", "islands")?)?
        }
        GenFamily::Random => random(a.seed.unwrap_or(0), need(a.n, "n", "random")?)?,
        GenFamily::Asymmetric => random_asymmetric(
            a.seed.unwrap_or(0),
            need(a.n, "n", "asymmetric")?,
            need(a.skew, "skew", "asymmetric")?,
        )?,
        GenFamily::Snowflake => {
            let beta = need(a.beta, "beta", "snowflake")?;
            let base = read_space(&Input { input: a.base })?;
            snowflake(&base, beta)?
        }
    };
    write_json(&space.to_file(), &a.output)
}

#[derive(Serialize)]
struct HalfMass {
    center: PointId,
    radius: f64,
    phi: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    name: String,
    points: usize,
    summary: SpaceSummary,
    perfectness: Perfectness,
    index_bounds: IndexBounds,
    regularity_fit: Option<RegularityFit>,
    doubling: Option<DoublingReport>,
    half_mass: Option<HalfMass>,
    v_condition: Option<VCondition>,
}

fn run_analyze(a: AnalyzeArgs) -> Outcome {
    json_only(&a.output, "analyze")?;
    if a.big_q.is_some_and(|q| q <= 0.0) {
        return Err(Failure::usage("--Q must be positive"));
    }
    if a.center.is_some() != a.radius.is_some() {
        return Err(Failure::usage("--center and --radius go together"));
    }
    let space = read_space(&a.input)?;
    if a.center.is_some_and(|c| c >= space.len()) {
        return Err(Failure::usage("--center is out of range"));
    }
    let ball = a.center.zip(a.radius);
    let report = AnalyzeReport {
        name: space.name().to_string(),
        points: space.len(),
        summary: space.summary(),
        perfectness: uniform_perfectness(&space, a.floor),
        index_bounds: index_bounds(&space, &[])?,
        regularity_fit: a.big_q.map(|q| regularity_fit(&space, q)),
        doubling: a.big_q.map(|q| doubling_analysis(&space, q)),
        half_mass: ball.map(|(center, radius)| HalfMass {
            center,
            radius,
            phi: half_mass_radius(&space, center, radius),
        }),
        v_condition: match (ball, a.big_q) {
            (Some((center, radius)), Some(q)) => {
                let sigma = a.sigma.unwrap_or_else(|| space.summary().c_rho);
                Some(v_condition(&space, center, radius, sigma, q))
            }
            _ => None,
        },
    };
    write_json(&report, &a.output)
}

#[derive(Serialize)]
struct RegularizeReport {
    #[serde(serialize_with = "num::f64")]
    alpha0: f64,
    comparability: f64,
    verification: MetrizationReport,
    rho_sharp: Vec<Vec<f64>>,
}

fn run_regularize(a: RegularizeArgs) -> Outcome {
    json_only(&a.output, "regularize")?;
    let space = read_space(&a.input)?;
    let reg = regularize(&space)?;
    if a.emit_space {
        return write_json(&reg.as_space(&space).to_file(), &a.output);
    }
    // Every positive power of an ultrametric is a metric; 1 stands in for alpha0 = inf.
    let alpha = if reg.alpha0.is_finite() { reg.alpha0 } else { 1.0 };
    let report = RegularizeReport {
        alpha0: reg.alpha0,
        comparability: reg.comparability,
        verification: verify_metrization(&reg, &space, alpha)?,
        rho_sharp: reg.rho_sharp_rows(),
    };
    write_json(&report, &a.output)
}

fn spec_of(kind: SeminormKind, smooth: &SmoothnessArgs) -> SeminormSpec {
    match kind {
        SeminormKind::Sobolev => SeminormSpec::sobolev(smooth.s, smooth.p),
        SeminormKind::Tl => SeminormSpec::triebel_lizorkin(smooth.s, smooth.p, smooth.q),
        SeminormKind::Besov => SeminormSpec::besov(smooth.s, smooth.p, smooth.q),
    }
}

#[derive(Serialize)]
struct SeminormReport {
    spec: SeminormSpec,
    fixed: Vec<(PointId, f64)>,
    #[serde(flatten)]
    result: MinimalSeminorm,
    check: GradientCheck,
}

fn run_seminorm(a: SeminormArgs) -> Outcome {
    json_only(&a.output, "seminorm")?;
    let spec = spec_of(a.kind, &a.smooth);
    if !(spec.s > 0.0 && spec.p >= 1.0 && spec.q >= 1.0) {
        return Err(Failure::usage("minimization needs s > 0, p >= 1 and q >= 1"));
    }
    if a.u.is_empty() == a.fixed.is_empty() {
        return Err(Failure::usage("give exactly one of --u and --fixed"));
    }
    let space = read_space(&a.input)?;
    let result = if a.u.is_empty() {
        minimal_transition_seminorm(&space, &a.fixed, &spec)?
    } else {
        minimal_seminorm(&space, &a.u, &spec)?
    };
    let check = verify_gradient(&space, &result.u, &spec, &result.witness)?;
    write_json(
        &SeminormReport {
            spec,
            fixed: a.fixed,
            result,
            check,
        },
        &a.output,
    )
}

#[derive(Serialize)]
struct BumpReport {
    bump: BumpFunction,
    gradient: BumpGradient,
    check: GradientCheck,
    /// Measured norm of the explicit gradient in the selected scale.
    measured_norm: f64,
    bound: f64,
    #[serde(serialize_with = "num::opt")]
    minimal_seminorm: Option<f64>,
}

#[derive(Serialize)]
struct ChainReport {
    chain: BumpChain,
    seminorms: Vec<f64>,
    constants: ChainConstants,
}

fn run_bumps(a: BumpsArgs) -> Outcome {
    json_only(&a.output, "bumps")?;
    let SmoothnessArgs { s, p, q } = a.smooth;
    if !(s > 0.0 && p > 0.0 && q > 0.0) {
        return Err(Failure::usage("s, p and q must be positive"));
    }
    if a.c0.is_some() && !a.chain {
        return Err(Failure::usage("--c0 only applies with --chain"));
    }
    let space = read_space(&a.input)?;
    if a.center >= space.len() {
        return Err(Failure::usage("--center is out of range"));
    }
    let reg = regularize(&space)?;
    let alpha = match a.alpha {
        Some(v) => v,
        None => default_alpha(reg.alpha0, s)?,
    };
    let spec = fractional_spec(s, p, q, a.besov);
    if a.chain {
        let variant = match a.c0 {
            Some(c0) => ChainVariant::HalfMass { c0 },
            None => ChainVariant::Plain,
        };
        let chain = bump_chain(&reg, &space, a.center, a.radius, alpha, variant)?;
        let seminorms = chain_seminorms(&space, &chain, &spec)?;
        let constants = chain_constants(&chain, s, p, &seminorms);
        return write_json(
            &ChainReport {
                chain,
                seminorms,
                constants,
            },
            &a.output,
        );
    }
    let bump = bump_function(&reg, &space, a.center, a.inner, a.radius, alpha)?;
    let gradient = bump_gradient(&reg, &space, &bump, s, p, q)?;
    let check = verify_gradient(&space, &bump.values, &spec, &Gradient::Fractional(gradient.grad.clone()))?;
    let measured_norm = if a.besov { gradient.measured_besov } else { gradient.measured_tl };
    let minimal = if a.minimal {
        Some(minimal_seminorm(&space, &bump.values, &spec)?.value)
    } else {
        None
    };
    let bound = gradient.bound;
    write_json(
        &BumpReport {
            bump,
            gradient,
            check,
            measured_norm,
            bound,
            minimal_seminorm: minimal,
        },
        &a.output,
    )
}

/// Embedding case from the flags, validated with a placeholder dilation
/// when it defaults to the space's constant.
fn build_case(args: &CaseArgs) -> Result<EmbeddingCase, Failure> {
    let SmoothnessArgs { s, p, q } = args.smooth;
    let mut case = EmbeddingCase::new(args.theorem, args.mode, s, p, q, args.big_q, args.sigma.unwrap_or(1.0));
    case.besov = args.besov;
    if let Some(c1) = args.c1 {
        case.c1 = c1;
    }
    if let Some(omega) = args.omega {
        case.omega = omega;
    }
    Ok(case)
}

fn balls_csv(report: &qms::embeddings::EmbeddingReport) -> String {
    let mut out = String::from("center,radius,lhs,rhs,ratio,witness\n");
    for b in &report.balls {
        let rhs = b.rhs.iter().fold(0.0, |acc, v| acc + v);
        out.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            b.center,
            csv_number(b.radius),
            csv_number(b.lhs),
            csv_number(rhs),
            csv_number(b.ratio),
            b.witness
        ));
    }
    out
}

#[derive(Serialize)]
struct SingleCheck {
    case: EmbeddingCase,
    center: PointId,
    radius: f64,
    #[serde(flatten)]
    check: LocalCheck,
    #[serde(serialize_with = "num::opt")]
    constant: Option<f64>,
    verdict: bool,
}

fn run_verify(a: VerifyArgs) -> Outcome {
    let mut case = build_case(&a.case)?;
    case.b = a.b;
    case.epsilon = a.epsilon;
    case.validate()?;
    let single = a.center.is_some() || a.radius.is_some() || !a.u.is_empty();
    if single && (a.center.is_none() || a.radius.is_none() || a.u.is_empty()) {
        return Err(Failure::usage("a single check needs --center, --radius and --u"));
    }
    if single && a.output.format == Format::Csv {
        return Err(Failure::usage("a single check has no CSV form"));
    }
    let space = read_space(&a.input)?;
    if a.case.sigma.is_none() {
        case.sigma = space.summary().c_rho;
    }
    if single {
        let (center, radius) = (a.center.unwrap_or(0), a.radius.unwrap_or(0.0));
        if center >= space.len() {
            return Err(Failure::usage("--center is out of range"));
        }
        let check = Evaluator::new(&space, case.clone())?.evaluate(center, radius, &a.u, None)?;
        let verdict = match a.constant {
            Some(c) => check.ratio <= c,
            None => check.ratio.is_finite(),
        };
        write_json(
            &SingleCheck {
                case,
                center,
                radius,
                check,
                constant: a.constant,
                verdict,
            },
            &a.output,
        )?;
        return if verdict {
            Ok(())
        } else {
            Err(Failure::verdict("inequality violated"))
        };
    }
    let reg = regularize(&space)?;
    let battery = BatteryOptions {
        chains: !a.no_chains,
        transitions: !a.no_transitions,
        random: a.random,
        seed: a.seed,
        extra: Vec::new(),
    };
    let balls = critical_balls(&space, &case);
    let report = best_constant(&space, &reg, &case, &balls, &battery, a.constant)?;
    match a.output.format {
        Format::Json => write_json(&report, &a.output)?,
        Format::Csv => emit(&balls_csv(&report), a.output.out.as_deref())?,
    }
    if report.verdict {
        Ok(())
    } else if report.best_constant.is_infinite() {
        Err(Failure::verdict(
            "UNBOUNDED: a test function has zero seminorm and a nonzero left side",
        ))
    } else {
        Err(Failure::verdict(format!(
            "inequality violated: best constant {}",
            report.best_constant
        )))
    }
}

fn recovery_csv(report: &RecoveryReport) -> String {
    let mut out = String::from("center,radius,measure,good,kappa_ball\n");
    for b in &report.per_ball {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.center,
            csv_number(b.radius),
            csv_number(b.measure),
            b.good,
            csv_number(b.kappa_ball)
        ));
    }
    out
}

fn run_recover(a: RecoverArgs) -> Outcome {
    let case = build_case(&a.case)?;
    let mode = match a.case.mode {
        Regime::Sobolev => RecoveryMode::A,
        Regime::Poincare => RecoveryMode::B,
        Regime::Trudinger => RecoveryMode::C,
        Regime::Holder => RecoveryMode::D,
    };
    if !matches!(a.case.theorem, Theorem::Lb | Theorem::Doub) {
        return Err(Failure::usage("recovery needs --theorem lb or doub"));
    }
    if !(a.beta > 1.0) {
        return Err(Failure::usage("--beta must exceed 1"));
    }
    if a.constant.is_some_and(|c| c < 0.0) {
        return Err(Failure::usage("--constant must be nonnegative"));
    }
    let space = read_space(&a.input)?;
    let reg = regularize(&space)?;
    let sigma = a.case.sigma.unwrap_or_else(|| space.summary().c_rho);
    let SmoothnessArgs { s, p, q } = a.case.smooth;
    let mut params = RecoveryParams::new(s, p, q, a.case.big_q, sigma);
    params.besov = case.besov;
    params.beta = a.beta;
    params.c1 = case.c1;
    params.omega = case.omega;
    let measured = match a.constant {
        Some(c) => Some(c),
        None => {
            let mut case = case;
            case.sigma = sigma;
            let battery = BatteryOptions {
                seed: a.seed,
                ..BatteryOptions::default()
            };
            let balls = critical_balls(&space, &case);
            Some(best_constant(&space, &reg, &case, &balls, &battery, None)?.best_constant)
        }
    };
    let report = match a.case.theorem {
        Theorem::Lb => recover_lower_regularity(&space, &reg, &params, measured, mode)?,
        _ => recover_doubling(&space, &reg, &params, measured, mode)?,
    };
    match a.output.format {
        Format::Json => write_json(&report, &a.output)?,
        Format::Csv => emit(&recovery_csv(&report), a.output.out.as_deref())?,
    }
    if report.sound {
        Ok(())
    } else {
        Err(Failure::verdict("recovered constant is not a valid lower bound"))
    }
}

fn run_triviality(a: TrivialityArgs) -> Outcome {
    if a.resolutions.is_empty() || a.s.is_empty() {
        return Err(Failure::usage("--resolutions and --s need at least one value"));
    }
    if !(a.p >= 1.0 && a.q >= 1.0 && a.s.iter().all(|&s| s > 0.0)) {
        return Err(Failure::usage("the scan needs s > 0, p >= 1 and q >= 1"));
    }
    let family = match a.family {
        ScanFamily::Line => Family::Line,
        ScanFamily::Cantor => Family::Cantor {
            contraction: a.contraction,
        },
    };
    let rows = triviality_scan(&family, &a.resolutions, &a.s, a.p, a.q, a.besov)?;
    let body = match a.format {
        Format::Csv => triviality_csv(&rows),
        Format::Json => to_json(&rows)?,
    };
    emit(&body, a.out.as_deref())?;
    Ok(())
}
