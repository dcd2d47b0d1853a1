//! Command-line front end: PMFs, modes, family ridges and scans, property
//! suites, transport plans, and finitary bounds, as CSV or JSON.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ebsum::darroch::{darroch_random_suite, finitary_bounds, integer_mean_suite, me_extremal_simplex, suite_csv};
use ebsum::ebs_core::{pmf_dp, pmf_symmetric, Profile};
use ebsum::families::{
    cross_modality_scan, likelihood_max_n, psd_likelihood_max, psd_pmf, FamilySpec, PowerSeries,
    PowerSeriesKind, Rational,
};
use ebsum::modal_analysis::{median_interval, mode_of, peak_skewness};
use ebsum::transport::{abc_coefficients, optimal_two_point, poisson_break, two_bernoulli_plan, TransportPlan};
use ebsum::{Error, DEFAULT_TIE_TOL};

#[derive(Parser)]
#[command(name = "ebsum", about = "Extended Bernoulli sums: PMFs, modes, cross modality, mean-mode rule, mode transport", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probability function of a profile
    Pmf(PmfArgs),
    /// Mode interval, peak skewness and median interval of a profile
    Mode(ModeArgs),
    /// Modal ridge table of a one-parameter family
    Ridge(RidgeArgs),
    /// Cross-modality scan of a family
    Scan(ScanArgs),
    /// Named property suite
    Check(CheckArgs),
    /// Minimal-mean mode transport plans for a profile
    Transport(TransportArgs),
    /// Mean bounds over the bifurcation set F_{k,n} and the mu = k simplex vertices
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write output to a file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncation budget (overrides EBSUM_EPS)
    #[arg(long)]
    eps: Option<f64>,
}

impl OutputArgs {
    fn eps(&self) -> Result<f64, Error> {
        if let Some(e) = self.eps {
            return Ok(e);
        }
        match std::env::var("EBSUM_EPS") {
            Ok(s) => s
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("EBSUM_EPS = {s:?} is not a number"))),
            Err(_) => Ok(ebsum::DEFAULT_EPS),
        }
    }

    fn emit(&self, text: &str) -> Result<(), Error> {
        match &self.out {
            Some(path) => fs::write(path, text)
                .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display()))),
            None => {
                println!("{}", text.trim_end());
                Ok(())
            }
        }
    }
}

#[derive(Args)]
struct PmfArgs {
    /// Profile: inline JSON, a file path, or binomial:N:P / poisson:T
    #[arg(long)]
    profile: String,
    /// Cross-check against the symmetric-function engine
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long)]
    profile: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RidgeArgs {
    /// Family: binomial-n, poisson, or cosh
    #[arg(long)]
    family: String,
    /// Success probability as A/B (binomial-n)
    #[arg(long)]
    p: Option<String>,
    /// Largest n (binomial-n)
    #[arg(long)]
    nmax: Option<u64>,
    /// Parameter grid lo:hi:step (poisson, cosh)
    #[arg(long)]
    tgrid: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScanArgs {
    /// Family: binomial-n, binomial-p, poisson, cosh, ks, scaled
    #[arg(long)]
    family: String,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    nmax: Option<u64>,
    /// Base profile (scaled family)
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, default_value_t = 10)]
    kmax: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Suite: darroch, crossmodal, transport, or lemma1
    suite: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cases: Option<u64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    nmax: Option<u64>,
    #[arg(long, default_value_t = 10)]
    kmax: u64,
    #[arg(long)]
    profile: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TransportArgs {
    #[arg(long)]
    profile: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    k: u64,
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_rational(s: &str) -> Result<Rational, Error> {
    let bad = || Error::InvalidArgument(format!("cannot parse rational {s:?}, expected A/B"));
    if let Some((a, b)) = s.split_once('/') {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        if b == 0 {
            return Err(bad());
        }
        Ok(Rational::new(a, b))
    } else {
        let v: f64 = s.trim().parse().map_err(|_| bad())?;
        // decimals become exact rationals over a power of ten
        let scaled = (v * 1e9).round() as i64;
        Ok(Rational::new(scaled, 1_000_000_000))
    }
}

fn parse_profile(s: &str) -> Result<Profile, Error> {
    let s = s.trim();
    if s.starts_with('{') {
        let p: Profile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidArgument(format!("bad profile JSON: {e}")))?;
        p.validate()?;
        return Ok(p);
    }
    if let Some(rest) = s.strip_prefix("binomial:") {
        let (n, p) = rest
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("expected binomial:N:P, got {s:?}")))?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad n in {s:?}")))?;
        let p: f64 = p
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad p in {s:?}")))?;
        return Profile::finitary(0.0, vec![p; n]);
    }
    if let Some(t) = s.strip_prefix("poisson:") {
        let t: f64 = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad rate in {s:?}")))?;
        return Profile::finitary(t, vec![]);
    }
    let text = fs::read_to_string(s)
        .map_err(|e| Error::InvalidArgument(format!("cannot read profile {s:?}: {e}")))?;
    let p: Profile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("bad profile JSON in {s:?}: {e}")))?;
    p.validate()?;
    Ok(p)
}

fn parse_tgrid(s: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidArgument(format!("cannot parse grid {s:?}, expected lo:hi:step"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let step: f64 = parts[2].parse().map_err(|_| bad())?;
    if !(step > 0.0 && hi >= lo) {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut t = lo;
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    Ok(out)
}

/// Exit code contract: 0 pass, 1 property failure, 2 parse, 3 budget,
/// 4 unsupported.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Budget(_) => 3,
        Error::Unsupported(_) => 4,
        _ => 1,
    }
}

fn run() -> Result<bool, Error> {
    match Cli::parse().cmd {
        Cmd::Pmf(args) => cmd_pmf(args),
        Cmd::Mode(args) => cmd_mode(args),
        Cmd::Ridge(args) => cmd_ridge(args),
        Cmd::Scan(args) => cmd_scan(args),
        Cmd::Check(args) => cmd_check(args),
        Cmd::Transport(args) => cmd_transport(args),
        Cmd::Bounds(args) => cmd_bounds(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn cmd_pmf(args: PmfArgs) -> Result<bool, Error> {
    let profile = parse_profile(&args.profile)?;
    let eps = args.output.eps()?;
    let pmf = pmf_dp(&profile, eps)?;
    if args.verify {
        let other = pmf_symmetric(&profile, eps)?;
        for (j, (&a, &b)) in pmf.mass.iter().zip(&other.mass).enumerate() {
            if (a - b).abs() > 1e-10 * a.max(b).max(f64::MIN_POSITIVE) {
                return Err(Error::Internal(format!(
                    "engines disagree at k = {}: {a} vs {b}",
                    pmf.shift + j
                )));
            }
        }
    }
    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&pmf).unwrap(),
        Format::Csv => {
            let mut s = String::from("k,mass,trunc_err\n");
            for (j, &v) in pmf.mass.iter().enumerate() {
                s.push_str(&format!("{},{:.16e},{:.16e}\n", pmf.shift + j, v, pmf.trunc_err));
            }
            s
        }
    };
    args.output.emit(&text)?;
    Ok(true)
}

fn cmd_mode(args: ModeArgs) -> Result<bool, Error> {
    let profile = parse_profile(&args.profile)?;
    let pmf = pmf_dp(&profile, args.output.eps()?)?;
    let mode = mode_of(&pmf, DEFAULT_TIE_TOL)?;
    let median = median_interval(&pmf)?;
    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "mode": mode,
            "median": median,
        }))
        .unwrap(),
        Format::Csv => format!(
            "m_minus,m_plus,peak,twin,skewness,median_lo,median_hi\n{},{},{:.16e},{},{:.16e},{},{}\n",
            mode.m_minus, mode.m_plus, mode.peak, mode.twin, mode.skewness, median.lo, median.hi
        ),
    };
    args.output.emit(&text)?;
    Ok(true)
}

struct RidgeRow {
    param: f64,
    m_minus: i64,
    m_plus: i64,
    peak: f64,
    ell_lo: f64,
    ell_hi: f64,
}

fn ridge_rows(args: &RidgeArgs) -> Result<Vec<RidgeRow>, Error> {
    let eps = args.output.eps()?;
    match args.family.as_str() {
        // row v: mode data of the family member at parameter v, plus the
        // likelihood maximizer interval for observed k = v
        "binomial-n" => {
            let p = parse_rational(
                args.p
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("binomial-n needs --p".into()))?,
            )?;
            let nmax = args
                .nmax
                .ok_or_else(|| Error::InvalidArgument("binomial-n needs --nmax".into()))?;
            let pf = *p.numer() as f64 / *p.denom() as f64;
            let mut rows = Vec::new();
            for v in 0..=nmax {
                let m = ebsum::families::binomial_mode(v, p)?;
                let profile = Profile::finitary(0.0, vec![pf; v as usize])?;
                let pmf = pmf_dp(&profile, eps)?;
                let ell = likelihood_max_n(v, p)?;
                rows.push(RidgeRow {
                    param: v as f64,
                    m_minus: m.lo,
                    m_plus: m.hi,
                    peak: pmf.prob(m.hi),
                    ell_lo: ell.lo as f64,
                    ell_hi: ell.hi as f64,
                });
            }
            Ok(rows)
        }
        "poisson" | "cosh" => {
            let grid = parse_tgrid(
                args.tgrid
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument(format!("{} needs --tgrid", args.family)))?,
            )?;
            let spec = match args.family.as_str() {
                "poisson" => PowerSeries::poisson(),
                _ => PowerSeries::cosh_sqrt(),
            };
            let mut rows = Vec::new();
            for t in grid {
                let pmf = psd_pmf(&spec, t, eps)?;
                let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
                let ell = psd_likelihood_max(&spec, m.m_plus.max(0) as usize)?;
                rows.push(RidgeRow {
                    param: t,
                    m_minus: m.m_minus,
                    m_plus: m.m_plus,
                    peak: m.peak,
                    ell_lo: ell,
                    ell_hi: ell,
                });
            }
            Ok(rows)
        }
        other => Err(Error::Unsupported(format!("no ridge for family {other:?}"))),
    }
}

fn cmd_ridge(args: RidgeArgs) -> Result<bool, Error> {
    let rows = ridge_rows(&args)?;
    let text = match args.output.format {
        Format::Csv => {
            let mut s = String::from("parameter,m_minus,m_plus,peak,ell_lo,ell_hi\n");
            for r in &rows {
                s.push_str(&format!(
                    "{:.16e},{},{},{:.16e},{:.16e},{:.16e}\n",
                    r.param, r.m_minus, r.m_plus, r.peak, r.ell_lo, r.ell_hi
                ));
            }
            s
        }
        Format::Json => {
            let items: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "parameter": r.param,
                        "m_minus": r.m_minus,
                        "m_plus": r.m_plus,
                        "peak": r.peak,
                        "ell_lo": r.ell_lo,
                        "ell_hi": r.ell_hi,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&items).unwrap()
        }
    };
    args.output.emit(&text)?;
    Ok(true)
}

fn family_from_flags(
    family: &str,
    p: Option<&str>,
    n: Option<u64>,
    t: Option<f64>,
    nmax: Option<u64>,
    profile: Option<&str>,
) -> Result<FamilySpec, Error> {
    match family {
        "binomial-n" => {
            let p = parse_rational(p.ok_or_else(|| Error::InvalidArgument("binomial-n needs --p".into()))?)?;
            Ok(FamilySpec::BinomialN {
                p_num: *p.numer(),
                p_den: *p.denom(),
            })
        }
        "binomial-p" => Ok(FamilySpec::BinomialP {
            n: n.ok_or_else(|| Error::InvalidArgument("binomial-p needs --n".into()))?,
        }),
        "poisson" => Ok(FamilySpec::Poisson),
        "cosh" => Ok(FamilySpec::PowerSeries {
            kind: PowerSeriesKind::CoshSqrt,
        }),
        "ks" => Ok(FamilySpec::KaramataStirling {
            t: t.ok_or_else(|| Error::InvalidArgument("ks needs --t".into()))?,
            n_max: nmax.unwrap_or(200),
        }),
        "scaled" => Ok(FamilySpec::ScaledEbs {
            base: parse_profile(
                profile.ok_or_else(|| Error::InvalidArgument("scaled needs --profile".into()))?,
            )?,
        }),
        other => Err(Error::Unsupported(format!("unknown family {other:?}"))),
    }
}

fn cmd_scan(args: ScanArgs) -> Result<bool, Error> {
    let family = family_from_flags(
        &args.family,
        args.p.as_deref(),
        args.n,
        args.t,
        args.nmax,
        args.profile.as_deref(),
    )?;
    let report = cross_modality_scan(&family, 0, args.kmax)?;
    let text = match args.output.format {
        Format::Csv => report.to_csv(),
        Format::Json => serde_json::to_string_pretty(&report).unwrap(),
    };
    args.output.emit(&text)?;
    Ok(report.all_pass)
}

fn cmd_check(args: CheckArgs) -> Result<bool, Error> {
    match args.suite.as_str() {
        "darroch" => {
            let seed = args
                .seed
                .ok_or_else(|| Error::InvalidArgument("check darroch needs --seed".into()))?;
            let cases = args.cases.unwrap_or(10_000);
            let mut rows = darroch_random_suite(cases, seed)?;
            rows.extend(integer_mean_suite(cases / 10, seed.wrapping_add(1))?);
            let pass = rows.iter().all(|r| r.pass);
            let text = match args.output.format {
                Format::Csv => suite_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows).unwrap(),
            };
            args.output.emit(&text)?;
            if !pass {
                for r in rows.iter().filter(|r| !r.pass) {
                    eprintln!("failed case: {r:?}");
                }
            }
            Ok(pass)
        }
        "crossmodal" => {
            let family = family_from_flags(
                args.family
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("check crossmodal needs --family".into()))?,
                args.p.as_deref(),
                args.n,
                args.t,
                args.nmax,
                args.profile.as_deref(),
            )?;
            let report = cross_modality_scan(&family, 0, args.kmax)?;
            let text = match args.output.format {
                Format::Csv => report.to_csv(),
                Format::Json => serde_json::to_string_pretty(&report).unwrap(),
            };
            args.output.emit(&text)?;
            if !report.all_pass {
                for e in report.entries.iter().filter(|e| !e.pass) {
                    eprintln!("failed case: {e:?}");
                }
            }
            Ok(report.all_pass)
        }
        "transport" => {
            let profile = parse_profile(
                args.profile
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("check transport needs --profile".into()))?,
            )?;
            let report = transport_report(&profile, args.output.eps()?)?;
            let pass = report.1;
            args.output.emit(&serde_json::to_string_pretty(&report.0).unwrap())?;
            Ok(pass)
        }
        "lemma1" => {
            let seed = args
                .seed
                .ok_or_else(|| Error::InvalidArgument("check lemma1 needs --seed".into()))?;
            let cases = args.cases.unwrap_or(500);
            let (csv, pass) = lemma1_suite(cases, seed, args.output.eps()?)?;
            let text = match args.output.format {
                Format::Csv => csv,
                Format::Json => json!({"cases": cases, "pass": pass}).to_string(),
            };
            args.output.emit(&text)?;
            Ok(pass)
        }
        other => Err(Error::Unsupported(format!("unknown suite {other:?}"))),
    }
}

fn transport_report(profile: &Profile, eps: f64) -> Result<(serde_json::Value, bool), Error> {
    let pmf = pmf_dp(profile, eps)?;
    let mode = mode_of(&pmf, DEFAULT_TIE_TOL)?;
    let gamma = peak_skewness(&pmf)?;
    let mut pass = true;
    let (abc, two_point) = if mode.twin {
        (json!(null), optimal_two_point(&pmf)?)
    } else {
        let (a, b, c) = abc_coefficients(&pmf)?;
        let plan = optimal_two_point(&pmf)?;
        pass &= plan.balance_residual() <= 1e-9;
        (json!({"a": a, "b": b, "c": c}), plan)
    };
    let two_bernoulli = if mode.twin {
        json!(null)
    } else {
        match two_bernoulli_plan(&pmf) {
            Ok(plan) => {
                pass &= plan.cost() < gamma && plan.balance_residual() <= 1e-9;
                serde_json::to_value(&plan).unwrap()
            }
            Err(Error::NoTwoBernoulliImprovement) => json!("no two-Bernoulli improvement"),
            Err(e) => return Err(e),
        }
    };
    pass &= two_point.cost() <= gamma + 1e-15;
    let report = json!({
        "mode": mode,
        "peak_skewness": gamma,
        "abc": abc,
        "optimal_two_point": two_point,
        "two_bernoulli": two_bernoulli,
    });
    Ok((report, pass))
}

fn lemma1_suite(cases: u64, seed: u64, eps: f64) -> Result<(String, bool), Error> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("case_id,n,lambda,pass\n");
    let mut all = true;
    for case_id in 0..cases {
        let n = rng.gen_range(0..=20usize);
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.999)).collect();
        let lambda = rng.gen_range(0.0..8.0);
        let profile = Profile::finitary(lambda, probs)?;
        let a = pmf_dp(&profile, eps)?;
        let b = pmf_symmetric(&profile, eps)?;
        let mut pass = (a.total() - 1.0).abs() <= 1e-11;
        for (x, y) in a.mass.iter().zip(&b.mass) {
            pass &= (x - y).abs() <= 1e-10 * x.max(*y).max(f64::MIN_POSITIVE);
        }
        for k in 1..a.mass.len().saturating_sub(1) {
            let lhs = k as f64 * a.mass[k] * a.mass[k];
            let rhs = (k + 1) as f64 * a.mass[k - 1] * a.mass[k + 1];
            pass &= lhs >= rhs * (1.0 - 1e-10);
        }
        let k_mid = profile.mean().round() as usize;
        pass &= ebsum::ebs_core::identity_vi_residual(&profile, k_mid)? <= 1e-11;
        all &= pass;
        csv.push_str(&format!("{case_id},{n},{lambda:.16e},{pass}\n"));
    }
    Ok((csv, all))
}

fn cmd_transport(args: TransportArgs) -> Result<bool, Error> {
    let profile = parse_profile(&args.profile)?;
    let (report, _) = transport_report(&profile, args.output.eps()?)?;
    // poisson profiles also get the closed-form one-Bernoulli plan
    let report = if profile.probs.is_empty() && profile.lambda > 0.0 {
        let plan: TransportPlan = poisson_break(profile.lambda)?;
        let mut r = report;
        r.as_object_mut()
            .unwrap()
            .insert("poisson_break".into(), serde_json::to_value(&plan).unwrap());
        r
    } else {
        report
    };
    args.output.emit(&serde_json::to_string_pretty(&report).unwrap())?;
    Ok(true)
}

fn cmd_bounds(args: BoundsArgs) -> Result<bool, Error> {
    let bounds = finitary_bounds(args.k, args.n)?;
    let vertices = if args.k < args.n {
        Some(me_extremal_simplex(args.k, args.n)?)
    } else {
        None
    };
    let text = serde_json::to_string_pretty(&json!({
        "min_mu": bounds.min_mu,
        "max_mu": bounds.max_mu,
        "argmin": bounds.argmin,
        "argmax": bounds.argmax,
        "simplex_vertices": vertices,
    }))
    .unwrap();
    args.output.emit(&text)?;
    Ok(true)
}
