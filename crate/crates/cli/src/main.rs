//! `optrec`: command-line front end for the constructions, verifiers and
//! scans in `optrec-core`.
//!
//! Every parameter may come from a flag or from a `key=value` config file
//! (`--config`); flags win. The resolved parameters, defaults included, are
//! embedded in each report so a run can be replayed from its output.

mod params;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use optrec_core::circle::{Angle, IntervalUnion};
use optrec_core::density::{set_density, solution_density, weighted_solution_sum, GridFunction, GridSet};
use optrec_core::exactlin::{moment_subspace, MomentFamily, Rational};
use optrec_core::report::{parse_rational, Exact};
use optrec_core::sequences::{
    bohr_square_equidistribution, HardyExpr, Real, SequenceSpec, TorusBox,
};
use optrec_core::setsynth::{
    ap3_free, behrend_set, format_set, parse_set, ruzsa_set, ruzsa_set_explicit, solution_system,
    verify_solution_free, CoefficientNorm, RuzsaOptions, SetSidecar, Verdict,
};
use optrec_core::torusdyn::{
    bohr_limit_compare, prop113_build, prop113_verify, recurrence_scan, thm15_build, thm15_verify,
    thm19_build, thm19_snap_audit, BohrLimitOptions, BoxLayout, CommutingPair, Family,
    LambdaSource, ProductSet, Rotation, ScanReport, System, Thm15Options, VerifyReport, WeylSystem,
};

use params::{CliError, Params};

const VERSION: &str = concat!("optrec ", env!("CARGO_PKG_VERSION"));

/// Exit codes.
const OK: u8 = 0;
const VIOLATION: u8 = 1;
const INDETERMINATE: u8 = 4;

#[derive(Parser)]
#[command(name = "optrec", version, about = "Constructions, verifiers and recurrence scans on tori")]
struct Cli {
    /// Flat key=value file; repeated keys build lists.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every sampling step.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<String>,
    /// Largest enclosure width, in bits, for certified floors.
    #[arg(long, global = true, value_name = "BITS")]
    precision: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a solution-free (ruzsa) or AP3-free (behrend) set.
    Construct(ConstructArgs),
    /// Run a counterexample pipeline and certify its inequalities.
    Verify(VerifyArgs),
    /// Exact solution densities of a grid set.
    Density(DensityArgs),
    /// Scan n for large multiple correlations.
    Scan(ScanArgs),
    /// Box frequencies of n^2 alpha along a Bohr set.
    Equidist(EquidistArgs),
    /// Compare Bohr-set averages with their limit integral.
    Limit(LimitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstructKind {
    Ruzsa,
    Behrend,
}

#[derive(Args)]
struct ConstructArgs {
    kind: ConstructKind,
    /// Five distinct integers a_1..a_5.
    #[arg(long)]
    a: Option<String>,
    /// Exponent epsilon in (0, 1), as p/q or decimal.
    #[arg(long)]
    epsilon: Option<String>,
    /// Digit count; with --m overrides the minimal admissible choice.
    #[arg(long)]
    d: Option<String>,
    /// Digit base, a multiple of C.
    #[arg(long)]
    m: Option<String>,
    /// raw | primitive.
    #[arg(long)]
    norm: Option<String>,
    /// Largest L the construction may enumerate.
    #[arg(long)]
    l_cap: Option<String>,
    /// Triple budget for the exhaustive verification.
    #[arg(long)]
    budget: Option<String>,
    /// Range bound for behrend.
    #[arg(long)]
    n: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyKind {
    Thm15,
    Prop113,
    Thm19,
}

#[derive(Args)]
struct VerifyArgs {
    kind: VerifyKind,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    ell: Option<String>,
    /// N for prop113.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_min: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    /// Rotation number: golden, sqrtK, p/q or decimal.
    #[arg(long)]
    alpha: Option<String>,
    /// greedy | ruzsa | file (thm15).
    #[arg(long)]
    lambda: Option<String>,
    /// Greedy range, or L for --lambda file.
    #[arg(long)]
    limit: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// Set file: Lambda for thm15, E for thm19.
    #[arg(long)]
    set: Option<String>,
    /// Constant C for thm15.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    /// Grid dimension of E (thm19).
    #[arg(long)]
    m: Option<String>,
    /// Grid side of E (thm19).
    #[arg(long)]
    n0: Option<String>,
    /// paper | wrap-free (thm19).
    #[arg(long)]
    layout: Option<String>,
    /// Random trials for the snapping audit (thm19).
    #[arg(long)]
    trials: Option<String>,
}

#[derive(Args)]
struct DensityArgs {
    /// Coefficients a_1..a_d.
    #[arg(long)]
    a: Option<String>,
    /// Moment degree (2 = quadratic family).
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    set: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// Optional GridFunction JSON for the weighted sum.
    #[arg(long)]
    function: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    /// rotation | weyl | pair.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// kn | poly | prop113.
    #[arg(long)]
    family: Option<String>,
    /// Terms 0, n, ..., kn for the kn family.
    #[arg(long)]
    k: Option<String>,
    /// Polynomials for the poly family, ascending coefficients, `;`-separated.
    #[arg(long)]
    poly: Option<String>,
    /// n | primes | primes:SHIFT | beatty:THETA[:GAMMA] | hardy:EXPR.
    #[arg(long)]
    driver: Option<String>,
    /// Fiber interval of A as lo,hi.
    #[arg(long)]
    b: Option<String>,
    /// Threshold is mu(A)^terms - eps unless --threshold is given.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    n_min: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
}

#[derive(Args)]
struct EquidistArgs {
    /// One or more frequencies.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Sample n in [start, start + window).
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    start: Option<String>,
    /// Equal parts per coordinate.
    #[arg(long)]
    boxes: Option<String>,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    /// Decreasing list of delta.
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    min_members: Option<String>,
    #[arg(long)]
    max_window: Option<String>,
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = Params::resolve(&mut Cli::command(), &matches, cli.config.as_deref())
        .and_then(|mut p| run(&cli.cmd, &mut p));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            if let Some(u) = &e.usage {
                eprintln!("{u}");
            }
            ExitCode::from(e.code)
        }
    }
}

fn run(cmd: &Cmd, p: &mut Params) -> Result<u8, CliError> {
    let threads: usize = p.parse_or("threads", "0")?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    p.get_or("seed", "20261016");
    p.get_or("precision", "1024");
    p.get_or("out", ".");
    match cmd {
        Cmd::Construct(c) => match c.kind {
            ConstructKind::Ruzsa => construct_ruzsa(p),
            ConstructKind::Behrend => construct_behrend(p),
        },
        Cmd::Verify(v) => match v.kind {
            VerifyKind::Thm15 => verify_thm15(p),
            VerifyKind::Prop113 => verify_prop113(p),
            VerifyKind::Thm19 => verify_thm19(p),
        },
        Cmd::Density(_) => density(p),
        Cmd::Scan(_) => scan(p),
        Cmd::Equidist(_) => equidist(p),
        Cmd::Limit(_) => limit(p),
    }
}

fn out_dir(p: &mut Params) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(p.get_or("out", "."));
    fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Writes `<stem>.json` holding the version, resolved config and report.
fn emit(p: &mut Params, stem: &str, report: Value) -> Result<PathBuf, CliError> {
    let dir = out_dir(p)?;
    let doc = json!({
        "version": VERSION,
        "run_config": p.run_config(),
        "report": report,
    });
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&doc).expect("reports serialize");
    text.push('\n');
    write(&path, &text)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn read(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("{path}: {e}")))
}

fn rational(p: &mut Params, key: &str, default: Option<&str>) -> Result<Rational, CliError> {
    let s = match default {
        Some(d) => p.get_or(key, d),
        None => p.req(key)?,
    };
    Ok(parse_rational(&s)?)
}

fn a5(p: &mut Params) -> Result<[i64; 5], CliError> {
    let a: Vec<i64> = p.req_list("a")?;
    a.try_into()
        .map_err(|a: Vec<i64>| CliError::usage(format!("--a needs 5 entries, got {}", a.len())))
}

fn fiber(p: &mut Params) -> Result<IntervalUnion, CliError> {
    let b: Vec<String> = p.list_or("b", "0,1/2")?;
    if b.len() != 2 {
        return Err(CliError::usage("--b takes lo,hi".into()));
    }
    let lo = parse_rational(&b[0])?;
    let hi = parse_rational(&b[1])?;
    if lo >= hi || hi > Rational::from_integer(1.into()) || lo < Rational::from_integer(0.into()) {
        return Err(CliError::usage("--b must satisfy 0 <= lo < hi <= 1".into()));
    }
    Ok(IntervalUnion::from_rational_arcs(&[(lo, hi)]))
}

fn verdict_json<W: std::fmt::Debug>(v: &Verdict<W>) -> Value {
    match v {
        Verdict::Pass => json!({"status": "pass"}),
        Verdict::Fail(w) => json!({"status": "fail", "witness": format!("{w:?}")}),
        Verdict::Indeterminate { required, budget } => json!({
            "status": "indeterminate",
            "required": required.to_string(),
            "budget": budget.to_string(),
        }),
    }
}

fn verdict_code<W>(v: &Verdict<W>) -> u8 {
    match v {
        Verdict::Pass => OK,
        Verdict::Fail(_) => VIOLATION,
        Verdict::Indeterminate { .. } => 3,
    }
}

fn construct_ruzsa(p: &mut Params) -> Result<u8, CliError> {
    let a = a5(p)?;
    let eps = rational(p, "epsilon", Some("1/2"))?;
    let epsilon = (
        eps.numer().to_u64().ok_or_else(|| CliError::usage("epsilon must lie in (0, 1)".into()))?,
        eps.denom().to_u64().ok_or_else(|| CliError::usage("epsilon denominator too large".into()))?,
    );
    let norm = match p.get_or("norm", "primitive").as_str() {
        "primitive" => CoefficientNorm::Primitive,
        "raw" => CoefficientNorm::Raw,
        other => return Err(CliError::usage(format!("unknown norm {other:?}"))),
    };
    let l_cap: u64 = p.parse_or("l-cap", "4294967296")?;
    let budget: u128 = p.parse_or("budget", "1099511627776")?;
    let set = match (p.opt("d"), p.opt("m")) {
        (Some(d), Some(m)) => ruzsa_set_explicit(&a, epsilon, norm, p.parse("d", &d)?, p.parse("m", &m)?)?,
        (None, None) => ruzsa_set(&a, epsilon, RuzsaOptions { norm, l_cap })?,
        _ => return Err(CliError::usage("--d and --m go together".into())),
    };
    let sys = solution_system(&a)?;
    let verdict = verify_solution_free(&set.members, &sys, budget);
    let dir = out_dir(p)?;
    let set_path = dir.join("ruzsa_set.txt");
    write(&set_path, &format_set(&set.members))?;
    println!("wrote {}", set_path.display());
    let report = json!({
        "set_file": "ruzsa_set.txt",
        "sidecar": SetSidecar::from_digit_set(&a, &set),
        "admissible": set.params.admissible,
        "beats_power_bound": set.beats_power_bound(),
        "meets_pigeonhole_bound": set.meets_pigeonhole_bound(),
        "verification": verdict_json(&verdict),
    });
    emit(p, "ruzsa_set", report)?;
    Ok(verdict_code(&verdict))
}

fn construct_behrend(p: &mut Params) -> Result<u8, CliError> {
    let n: u64 = p.parse_req("n")?;
    let set = behrend_set(n)?;
    let verdict = ap3_free(&set.members);
    let dir = out_dir(p)?;
    let set_path = dir.join("behrend_set.txt");
    write(&set_path, &format_set(&set.members))?;
    println!("wrote {}", set_path.display());
    let report = json!({
        "set_file": "behrend_set.txt",
        "n": set.n,
        "cardinality": set.members.len(),
        "digit_bound": set.digit_bound,
        "digits": set.digits,
        "radius": set.radius,
        "verification": verdict_json(&verdict),
    });
    emit(p, "behrend_set", report)?;
    Ok(verdict_code(&verdict))
}

fn verify_code(r: &VerifyReport) -> u8 {
    if r.witness.is_some() || !r.symbolic_holds {
        VIOLATION
    } else if !r.indeterminate.is_empty() {
        INDETERMINATE
    } else if r.pass() {
        OK
    } else {
        VIOLATION
    }
}

fn verify_thm15(p: &mut Params) -> Result<u8, CliError> {
    let a = a5(p)?;
    let ell: u32 = p.parse_or("ell", "3")?;
    let lo: u64 = p.parse_or("n-min", "1")?;
    let hi: u64 = p.parse_or("n-max", "1000")?;
    let mut opts = Thm15Options {
        alpha: Angle::parse(&p.get_or("alpha", "golden"))?,
        budget: p.parse_or("budget", "1099511627776")?,
        ..Default::default()
    };
    if let Some(c) = p.opt("c") {
        opts.c = Some(p.parse("c", &c)?);
    }
    opts.lambda = match p.get_or("lambda", "greedy").as_str() {
        "greedy" => LambdaSource::Greedy {
            limit: p.parse_or("limit", "4096")?,
        },
        "ruzsa" => {
            let eps = rational(p, "epsilon", Some("19/20"))?;
            LambdaSource::Ruzsa {
                epsilon: (
                    eps.numer().to_u64().unwrap_or(0),
                    eps.denom().to_u64().unwrap_or(1),
                ),
                opts: RuzsaOptions::default(),
            }
        }
        "file" => {
            let members = parse_set(&read(&p.req("set")?)?)?;
            LambdaSource::Explicit {
                members,
                l: p.parse_req("limit")?,
            }
        }
        other => return Err(CliError::usage(format!("unknown lambda source {other:?}"))),
    };
    let b = thm15_build(&a, ell, &opts)?;
    let r = thm15_verify(&b, lo, hi)?;
    let code = verify_code(&r);
    let report = json!({
        "C": b.c,
        "L": b.l,
        "lambda_size": b.lambda.len(),
        "lambda": b.lambda,
        "ell": ell,
        "pass": r.pass(),
        "verification": r,
    });
    emit(p, "verify_thm15", report)?;
    Ok(code)
}

fn verify_prop113(p: &mut Params) -> Result<u8, CliError> {
    let ell: u32 = p.parse_or("ell", "2")?;
    let n: u64 = p.parse_or("n", "1000")?;
    let lo: u64 = p.parse_or("n-min", "1")?;
    let hi: u64 = p.parse_or("n-max", "1000")?;
    let alpha = Angle::parse(&p.get_or("alpha", "golden"))?;
    let b = prop113_build(ell, n, alpha)?;
    let r = prop113_verify(&b, lo, hi)?;
    let code = verify_code(&r);
    let report = json!({
        "N": n,
        "ell": ell,
        "ell_max": b.ell_max,
        "lambda_size": b.lambda.len(),
        "lambda": b.lambda,
        "pass": r.pass(),
        "verification": r,
    });
    emit(p, "verify_prop113", report)?;
    Ok(code)
}

fn verify_thm19(p: &mut Params) -> Result<u8, CliError> {
    let a: Vec<i64> = p.req_list("a")?;
    let a: [i64; 4] = a
        .try_into()
        .map_err(|_| CliError::usage("--a needs 4 entries".into()))?;
    let m: usize = p.parse_or("m", "1")?;
    let n0: u64 = p.parse_req("n0")?;
    let e = GridSet::parse(m, n0, &read(&p.req("set")?)?)?;
    let layout = match p.get_or("layout", "paper").as_str() {
        "paper" => BoxLayout::Paper,
        "wrap-free" => BoxLayout::WrapFree,
        other => return Err(CliError::usage(format!("unknown layout {other:?}"))),
    };
    let lo: u64 = p.parse_or("n-min", "1")?;
    let hi: u64 = p.parse_or("n-max", "1000")?;
    let trials: u64 = p.parse_or("trials", "100000")?;
    let seed: u64 = p.parse_req("seed")?;
    let b = thm19_build(&e, &a, layout)?;
    let audit = thm19_snap_audit(&b, lo, hi, trials, seed)?;
    let report = json!({
        "form": b.form,
        "epsilon": Exact::from(&b.epsilon),
        "layout": b.layout,
        "box_side": Exact::from(&b.side()),
        "mu_a": Exact::from(&b.mu_a),
        "density_e": Exact::from(&set_density(&e)?),
        "trials": audit.trials,
        "hits": audit.hits,
        "violations": audit.violations,
        "witness": audit.witness,
    });
    emit(p, "verify_thm19", report)?;
    Ok(if audit.violations > 0 { VIOLATION } else { OK })
}

fn density(p: &mut Params) -> Result<u8, CliError> {
    let a: Vec<i64> = p.req_list("a")?;
    let degree: usize = p.parse_or("degree", "2")?;
    let n: u64 = p.parse_req("n")?;
    let m: usize = p.parse_or("m", "1")?;
    let e = GridSet::parse(m, n, &read(&p.req("set")?)?)?;
    let v = moment_subspace(&MomentFamily::new(a, degree)?)?;
    let r = solution_density(&v, &e)?;
    let forms: Vec<Vec<String>> = v
        .forms()
        .iter()
        .map(|f| f.iter().map(|x| x.to_string()).collect())
        .collect();
    let mut report = json!({
        "forms": forms,
        "set_size": e.len(),
        "density": r.to_json(),
    });
    if let Some(path) = p.opt("function") {
        let f = GridFunction::from_json(&read(&path)?)?;
        report["weighted_sum"] = json!(Exact::from(weighted_solution_sum(&f, &v)?));
    }
    emit(p, "density", report)?;
    Ok(OK)
}

fn parse_driver(s: &str) -> Result<Option<SequenceSpec>, CliError> {
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    Ok(match head {
        "n" => None,
        "primes" => Some(SequenceSpec::PrimesShifted {
            poly: vec![0, 1],
            shift: if rest.is_empty() {
                0
            } else {
                rest.parse().map_err(|_| CliError::usage(format!("bad shift {rest:?}")))?
            },
        }),
        "beatty" => {
            let (theta, gamma) = rest.split_once(':').unwrap_or((rest, "0"));
            Some(SequenceSpec::Beatty {
                theta: Real::parse(theta)?,
                gamma: Real::parse(gamma)?,
            })
        }
        "hardy" => Some(SequenceSpec::Hardy(HardyExpr::parse(rest)?)),
        other => return Err(CliError::usage(format!("unknown driver {other:?}"))),
    })
}

fn scan(p: &mut Params) -> Result<u8, CliError> {
    let alpha = Angle::parse(&p.get_or("alpha", "golden"))?;
    let sys = match p.get_or("system", "weyl").as_str() {
        "rotation" => System::Rotation(Rotation { alpha }),
        "weyl" => System::Weyl(WeylSystem::new(vec![alpha])?),
        "pair" => System::Pair(CommutingPair { alpha }),
        other => return Err(CliError::usage(format!("unknown system {other:?}"))),
    };
    let mut family = match p.get_or("family", "kn").as_str() {
        "kn" => Family::arithmetic(p.parse_or("k", "1")?),
        "poly" => {
            let polys = p
                .req("poly")?
                .split(';')
                .map(|q| {
                    q.split(',')
                        .map(|c| c.trim().parse::<i64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| CliError::usage(format!("bad polynomial {q:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Family::polynomials("{0, P_1(n), ..}", polys)
        }
        "prop113" => {
            let mut f = Family::arithmetic(2);
            f.description = "{0, n, 2n} with T_2^{n^2}".into();
            f.terms.push((vec![], vec![0, 0, 1]));
            f
        }
        other => return Err(CliError::usage(format!("unknown family {other:?}"))),
    };
    if let Some(d) = parse_driver(&p.get_or("driver", "n"))? {
        family = family.with_driver(d);
    }
    let precision: u32 = p.parse_req("precision")?;
    family = family.with_precision(precision);
    if matches!(sys, System::Rotation(_) | System::Weyl(_)) && family.terms.iter().any(|t| !t.1.is_empty()) {
        return Err(CliError::usage("T_2 terms need --system pair".into()));
    }
    let set = ProductSet::single(fiber(p)?);
    let lo: u64 = p.parse_or("n-min", "1")?;
    let hi: u64 = p.parse_or("n-max", "1000")?;
    let terms = family.terms.len() as i32;
    let threshold = match p.opt("threshold") {
        Some(t) => parse_rational(&t)?.to_f64().unwrap_or(f64::NAN),
        None => {
            let eps = rational(p, "eps", Some("1/20"))?;
            set.measure().powi(terms) - eps.to_f64().unwrap_or(f64::NAN)
        }
    };
    let r = recurrence_scan(&sys, &set, &family, lo, hi, threshold)?;
    let dir = out_dir(p)?;
    let csv = dir.join("scan.csv");
    write(&csv, &r.to_csv(precision))?;
    println!("wrote {}", csv.display());
    emit(p, "scan", scan_json(&r))?;
    Ok(OK)
}

/// Summary without the per-n rows (those go to the CSV), plus a table of
/// gap lengths between consecutive qualifying n.
fn scan_json(r: &ScanReport) -> Value {
    let mut gaps = std::collections::BTreeMap::<u64, u64>::new();
    let mut prev = r.n_lo as i128 - 1;
    for &q in r.qualifying.iter().chain(std::iter::once(&(r.n_hi + 1))) {
        *gaps.entry((q as i128 - prev) as u64).or_default() += 1;
        prev = q as i128;
    }
    let table: Vec<Value> = gaps.iter().map(|(g, c)| json!({"gap": g, "count": c})).collect();
    json!({
        "system": r.system,
        "family": r.family,
        "threshold": r.threshold,
        "n_lo": r.n_lo,
        "n_hi": r.n_hi,
        "mu_a": r.mu_a,
        "qualifying_count": r.qualifying.len(),
        "indeterminate": r.indeterminate,
        "max_gap": r.max_gap,
        "gap_table": table,
        "lower_density_estimate": r.lower_density_estimate,
        "assumptions": r.assumptions,
        "csv": "scan.csv",
    })
}

fn equidist(p: &mut Params) -> Result<u8, CliError> {
    let alpha: Vec<Real> = p
        .list_or::<String>("alpha", "sqrt2")?
        .iter()
        .map(|s| Real::parse(s))
        .collect::<Result<_, _>>()?;
    let delta = rational(p, "delta", Some("1/20"))?;
    let start: u64 = p.parse_or("start", "0")?;
    let window: u64 = p.parse_or("window", "1000000")?;
    let k: u64 = p.parse_or("boxes", "10")?;
    if k == 0 {
        return Err(CliError::usage("--boxes must be positive".into()));
    }
    let boxes = grid_boxes(alpha.len(), k)?;
    let r = bohr_square_equidistribution(&alpha, delta, &boxes, start, start + window)?;
    let precision: u32 = p.parse_req("precision")?;
    let mut csv = String::from("box,lo,hi,count,frequency,volume,gap,precision\n");
    for (i, b) in r.boxes.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{:.17e},{:.17e},{:.3e},{precision}\n",
            b.lo.join(" "),
            b.hi.join(" "),
            b.count,
            b.frequency.approx,
            b.volume.approx,
            b.gap
        ));
    }
    let dir = out_dir(p)?;
    write(&dir.join("equidist.csv"), &csv)?;
    emit(p, "equidist", serde_json::to_value(&r).expect("serializable"))?;
    Ok(OK)
}

/// The `k^dim` boxes of the product of uniform partitions.
fn grid_boxes(dim: usize, k: u64) -> Result<Vec<TorusBox>, CliError> {
    let count = k
        .checked_pow(dim as u32)
        .filter(|&c| c <= 1 << 20)
        .ok_or_else(|| CliError::usage("too many boxes".into()))?;
    let r = |i: u64| Rational::new(i.into(), k.into());
    (0..count)
        .map(|mut idx| {
            let (mut lo, mut hi) = (Vec::new(), Vec::new());
            for _ in 0..dim {
                lo.push(r(idx % k));
                hi.push(r(idx % k + 1));
                idx /= k;
            }
            Ok(TorusBox::new(lo, hi)?)
        })
        .collect()
}

fn limit(p: &mut Params) -> Result<u8, CliError> {
    let alpha = Angle::parse(&p.get_or("alpha", "golden"))?;
    let a: Vec<i64> = p.list_or("a", "1,2,3,4")?;
    let b = fiber(p)?;
    let deltas: Vec<f64> = p
        .list_or::<String>("deltas", "1/10,1/20,1/40")?
        .iter()
        .map(|d| Ok(parse_rational(d)?.to_f64().unwrap_or(f64::NAN)))
        .collect::<Result<_, CliError>>()?;
    let window: u64 = p.parse_or("window", "1000000")?;
    let opts = BohrLimitOptions {
        samples: p.parse_or("samples", "8")?,
        seed: p.parse_req("seed")?,
        min_members: p.parse_or("min-members", "2000")?,
        max_window: p.parse_or("max-window", "67108864")?,
    };
    let r = bohr_limit_compare(&WeylSystem::new(vec![alpha])?, &b, &a, &deltas, window, &opts)?;
    let precision: u32 = p.parse_req("precision")?;
    let mut csv = String::from("delta,window,bohr_count,short_window,max_gap,mean_gap,precision\n");
    for row in &r.rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.6e},{:.6e},{precision}\n",
            row.delta, row.window, row.bohr_count, row.short_window as u8, row.max_gap, row.mean_gap
        ));
    }
    let dir = out_dir(p)?;
    write(&dir.join("limit.csv"), &csv)?;
    emit(p, "limit", serde_json::to_value(&r).expect("serializable"))?;
    Ok(OK)
}
