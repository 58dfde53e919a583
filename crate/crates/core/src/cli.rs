//! Command-line front end. `run` returns the process exit code:
//! 0 success/PASS, 1 property violation, 2 usage or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::elliptic::{evolve, EllipticTop, ThetaParams};
use crate::error::{Error, Result};
use crate::glpoly::{GlPoly, PolyJson};
use crate::invariants::{check_commute, compare_mod_center, trace_invariants, Index, InvariantFamily};
use crate::lax::{
    load_appendix, load_appendix_hamiltonians, rational_top_lax_sl2, s_indices, trig_top_lax, AppendixFamily,
    DiagReading, LaxMatrix, SMap,
};
use crate::linalg::{c, C64};
use crate::rational_limit::rational_top_lax;
use crate::verify::{self, CorrFamily, ResidualReport};

#[derive(Parser, Debug)]
#[command(name = "cmtop", version, about = "Calogero-Moser / sl(N) top toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LaxFamily {
    /// general-N trigonometric top constructor
    Trig,
    /// general-N rational top (x → 0 limit of the trigonometric one)
    Rational,
    /// the sl(2) rational top
    RationalSl2,
    #[value(name = "appendix-T")]
    AppendixT,
    #[value(name = "appendix-R")]
    AppendixR,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PaperFamily {
    #[value(alias = "appendix-T", alias = "T")]
    Trig,
    #[value(alias = "appendix-R", alias = "R")]
    Rational,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Sl2Elliptic,
    Sl2Trig,
    Sl2Rational,
    LimitTrig,
    LimitRational,
    Correspondence,
    ConstructorXcheck,
    EqN,
    Dynamics,
    SpecialFunctions,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Random,
    /// a single conjugate pair S_α, S_−α: a fixed point of the flow
    Pair,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build a symbolic Lax matrix and write it as JSON.
    Lax {
        #[arg(long, value_enum)]
        family: LaxFamily,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract invariants tr L^k / k.
    Ham {
        #[arg(long, value_enum)]
        family: LaxFamily,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 2)]
        kmax: usize,
        /// `auto` (top non-central component) or a Laurent power j
        #[arg(long, default_value = "auto")]
        index: String,
        /// expansion order for trigonometric entries
        #[arg(long, default_value_t = 1)]
        order: i32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commutativity and comparison checks.
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// Run a numerical verification harness.
    Verify {
        #[arg(long, value_enum)]
        case: Case,
        #[arg(long = "N", default_value_t = 2)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-4, 1e-6])]
        q: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-4, 1e-6])]
        x: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        draws: usize,
        #[arg(long, default_value = "2i")]
        tau: String,
        /// correspondence family; both when omitted
        #[arg(long, value_enum)]
        family: Option<PaperFamily>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the elliptic top with RK4 and write a CSV trajectory.
    Evolve {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value = "2i")]
        tau: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "random")]
        init: Init,
    },
}

#[derive(Subcommand, Debug)]
pub enum CheckCmd {
    /// Exact pairwise brackets of the polynomials in a JSON file.
    Commute {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Printed Hamiltonians against extracted invariants, modulo the center.
    AgainstPaper {
        #[arg(long, value_enum)]
        family: PaperFamily,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1)]
        order: i32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
struct Outcome {
    report: Value,
    text: Option<String>,
    ok: bool,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Truncation { .. } | Error::Singular(_) | Error::NotInvertible(_) | Error::DivisionByZero => 1,
        _ => 2,
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Lax { family, n, out } => {
            let l = build_lax(family, n)?;
            emit(&l.to_json()?, out.as_deref())?;
            Ok(0)
        }
        Cmd::Ham { family, n, kmax, index, order, out } => {
            let v = ham_report(family, n, kmax, &index, order)?;
            emit(&v, out.as_deref())?;
            Ok(0)
        }
        Cmd::Check { what: CheckCmd::Commute { input, out } } => finish(cmd_commute(&input)?, out.as_deref()),
        Cmd::Check { what: CheckCmd::AgainstPaper { family, n, order, out } } => {
            finish(cmd_against_paper(family, n, order)?, out.as_deref())
        }
        Cmd::Verify { case, n, seed, q, x, draws, tau, family, out } => {
            let tau = parse_complex(&tau)?;
            let rep = cmd_verify(case, n, seed, &q, &x, draws, tau, family)?;
            finish(rep, out.as_deref())
        }
        Cmd::Evolve { n, tau, dt, steps, out, seed, init } => {
            let tau = parse_complex(&tau)?;
            finish(cmd_evolve(n, tau, dt, steps, &out, seed, init)?, None)
        }
    }
}

fn finish(o: Outcome, out: Option<&Path>) -> Result<i32> {
    if let Some(t) = &o.text {
        eprint!("{t}");
    }
    emit(&o.report, out)?;
    Ok(if o.ok { 0 } else { 1 })
}

fn emit(v: &Value, out: Option<&Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    match out {
        Some(p) => std::fs::write(p, s)?,
        None => std::io::stdout().lock().write_all(s.as_bytes())?,
    }
    Ok(())
}

pub fn build_lax(family: LaxFamily, n: usize) -> Result<LaxMatrix> {
    if n < 2 {
        return Err(Error::Invalid(format!("N must be at least 2 (got {n})")));
    }
    match family {
        LaxFamily::Trig => trig_top_lax(n, DiagReading::Cyclic),
        LaxFamily::Rational => rational_top_lax(n),
        LaxFamily::RationalSl2 => {
            if n != 2 {
                return Err(Error::Invalid(format!("rational-sl2 has N = 2 (got {n})")));
            }
            Ok(rational_top_lax_sl2())
        }
        LaxFamily::AppendixT => load_appendix(AppendixFamily::T, n),
        LaxFamily::AppendixR => load_appendix(AppendixFamily::R, n),
    }
}

fn parse_index(s: &str) -> Result<Option<i32>> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<i32>().map(Some).map_err(|_| Error::Invalid(format!("--index expects `auto` or an integer, got `{s}`")))
}

fn selected(fam: &InvariantFamily, k: usize, index: Option<i32>) -> Result<(Index, GlPoly, bool)> {
    match index {
        None => fam.top_component(k),
        Some(j) => {
            let p = fam.coefficient(k, Index::Laurent(j))?;
            let central = p.is_central();
            Ok((Index::Laurent(j), p, central))
        }
    }
}

pub fn ham_report(family: LaxFamily, n: usize, kmax: usize, index: &str, order: i32) -> Result<Value> {
    let index = parse_index(index)?;
    let l = build_lax(family, n)?;
    let order = index.map_or(order, |j| order.max(j));
    let fam = trace_invariants(&l, kmax, order)?;
    let mut sel = Vec::new();
    for k in 1..=kmax {
        let (idx, p, central) = selected(&fam, k, index)?;
        sel.push(json!({"k": k, "index": idx.to_string(), "central": central, "text": p.to_string(), "poly": p.to_json()}));
    }
    Ok(json!({
        "index": index.map_or(json!("auto"), |j| json!(j)),
        "selected": sel,
        "family": fam.to_json(),
    }))
}

/// Reads labelled polynomials from any of: a `ham` report, a Hamiltonians data file,
/// `{"polys": [{"label", "poly"}]}`, or a bare array of polynomials.
pub fn read_polys(v: &Value) -> Result<Vec<(String, GlPoly)>> {
    let poly = |p: &Value| -> Result<GlPoly> {
        let pj: PolyJson = serde_json::from_value(p.clone())?;
        GlPoly::from_json(&pj)
    };
    if let Some(sel) = v.get("selected").and_then(Value::as_array) {
        return sel
            .iter()
            .filter(|e| !e["central"].as_bool().unwrap_or(false))
            .map(|e| Ok((format!("k={}[{}]", e["k"], e["index"].as_str().unwrap_or("?")), poly(&e["poly"])?)))
            .collect();
    }
    if let Some(h) = v.get("hamiltonians").and_then(Value::as_object) {
        return h.iter().map(|(k, p)| Ok((format!("H{k}"), poly(p)?))).collect();
    }
    if let Some(ps) = v.get("polys").and_then(Value::as_array) {
        return ps
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let label = e.get("label").and_then(Value::as_str).map_or(format!("P{}", i + 1), str::to_string);
                Ok((label, poly(&e["poly"])?))
            })
            .collect();
    }
    if let Some(ps) = v.as_array() {
        return ps.iter().enumerate().map(|(i, p)| Ok((format!("P{}", i + 1), poly(p)?))).collect();
    }
    Err(Error::Parse("no polynomials found (expected `selected`, `hamiltonians`, `polys` or an array)".into()))
}

fn cmd_commute(input: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(input)?;
    let items = read_polys(&serde_json::from_str(&text)?)?;
    if items.len() < 2 {
        return Err(Error::Invalid(format!("need at least two polynomials, found {}", items.len())));
    }
    let rep = check_commute(&items)?;
    let mut text = String::new();
    for p in &rep.pairs {
        text.push_str(&format!("{{{}, {}}} {}", p.pair.0, p.pair.1, p.status));
        if p.residual_terms > 0 {
            text.push_str(&format!("  residual ({} terms): {}", p.residual_terms, p.residual));
        }
        text.push('\n');
    }
    Ok(Outcome { ok: rep.pass, report: rep.to_json(), text: Some(text) })
}

fn appendix_family(f: PaperFamily) -> AppendixFamily {
    match f {
        PaperFamily::Trig => AppendixFamily::T,
        PaperFamily::Rational => AppendixFamily::R,
    }
}

/// Each printed H_k against the top non-central component of tr L^k / k.
pub fn against_paper(family: PaperFamily, n: usize, order: i32) -> Result<(Value, bool)> {
    let af = appendix_family(family);
    let l = load_appendix(af, n)?;
    let hams = load_appendix_hamiltonians(af, n)?;
    let kmax = hams.keys().copied().max().unwrap_or(2) as usize;
    let fam = trace_invariants(&l, kmax, order)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for (k, h) in &hams {
        let k = *k as usize;
        let (idx, p, _) = fam.top_component(k)?;
        let cmp = compare_mod_center(&p, h)?;
        ok &= cmp.central && cmp.lambda.is_some();
        let mut row = json!({"k": k, "index": idx.to_string(), "comparison": cmp.to_json()});
        if family == PaperFamily::Trig {
            // the plain Laurent z⁰ coefficient, for reference
            let z0 = fam.coefficient(k, Index::Laurent(0))?;
            row["laurent_z0"] = compare_mod_center(&z0, h)?.to_json();
        }
        rows.push(row);
    }
    Ok((json!({"family": af, "N": n, "relation": "extracted = lambda * printed + residual", "pass": ok, "hamiltonians": rows}), ok))
}

fn cmd_against_paper(family: PaperFamily, n: usize, order: i32) -> Result<Outcome> {
    let (report, ok) = against_paper(family, n, order)?;
    let mut text = String::new();
    for r in report["hamiltonians"].as_array().into_iter().flatten() {
        let c = &r["comparison"];
        text.push_str(&format!(
            "H{} at {}: lambda = {}, central = {}, residual = {}\n",
            r["k"],
            r["index"].as_str().unwrap_or("?"),
            c["lambda"].as_str().unwrap_or("none"),
            c["central"],
            short_residual(c),
        ));
        if let Some(z0) = r.get("laurent_z0") {
            text.push_str(&format!(
                "    z^0 coefficient: lambda = {}, central = {}, residual = {}\n",
                z0["lambda"].as_str().unwrap_or("none"),
                z0["central"],
                short_residual(z0),
            ));
        }
    }
    Ok(Outcome { report, text: Some(text), ok })
}

fn short_residual(c: &Value) -> String {
    let n = c["residual"]["terms"].as_array().map_or(0, Vec::len);
    if n <= 12 {
        c["residual_text"].as_str().unwrap_or("?").to_string()
    } else {
        format!("{n} terms (see JSON)")
    }
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::Invalid(format!("{what} is randomized: --seed is required")))
}

fn check_sequence(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() || v.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Invalid(format!("--{name} values must lie in (0, 1)")));
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid(format!("--{name} must be strictly decreasing")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_case(
    case: Case,
    n: usize,
    seed: Option<u64>,
    qs: &[f64],
    xs: &[f64],
    draws: usize,
    tau: C64,
    family: Option<PaperFamily>,
) -> Result<Vec<ResidualReport>> {
    if n < 2 {
        return Err(Error::Invalid(format!("N must be at least 2 (got {n})")));
    }
    if draws == 0 {
        return Err(Error::Invalid("--draws must be positive".into()));
    }
    let name = format!("{case:?}");
    Ok(match case {
        Case::Sl2Elliptic => vec![verify::check_sl2_elliptic(need_seed(seed, &name)?, draws, tau)?],
        Case::Sl2Trig => vec![verify::check_sl2_trig(need_seed(seed, &name)?, draws)?],
        Case::Sl2Rational => vec![verify::check_sl2_rational(need_seed(seed, &name)?, draws)?],
        Case::LimitTrig => {
            check_sequence(qs, "q")?;
            vec![verify::check_limit_trig(n, need_seed(seed, &name)?, qs)?]
        }
        Case::LimitRational => {
            check_sequence(xs, "x")?;
            vec![verify::check_limit_rational(n, need_seed(seed, &name)?, xs)?]
        }
        Case::Correspondence => {
            let s = need_seed(seed, &name)?;
            let fams = match family {
                Some(PaperFamily::Trig) => vec![CorrFamily::Trig],
                Some(PaperFamily::Rational) => vec![CorrFamily::Rational],
                None => vec![CorrFamily::Trig, CorrFamily::Rational],
            };
            fams.into_iter().map(|f| verify::check_correspondence(f, n, s, draws)).collect::<Result<_>>()?
        }
        Case::ConstructorXcheck => vec![verify::cross_check_constructor(n)?],
        Case::EqN => vec![verify::check_eq_n(n, need_seed(seed, &name)?, tau, 5)?],
        Case::Dynamics => vec![verify::check_dynamics(n, need_seed(seed, &name)?, tau, 1e-3, 1000)?],
        Case::SpecialFunctions => vec![verify::check_special_functions(need_seed(seed, &name)?, 20, tau)?],
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    case: Case,
    n: usize,
    seed: Option<u64>,
    qs: &[f64],
    xs: &[f64],
    draws: usize,
    tau: C64,
    family: Option<PaperFamily>,
) -> Result<Outcome> {
    let mut reps = run_case(case, n, seed, qs, xs, draws, tau, family)?;
    reps.sort_by(|a, b| a.test.cmp(&b.test));
    let ok = reps.iter().all(|r| r.pass);
    let mut text = String::new();
    for r in &reps {
        text.push_str(&format!(
            "{} {}: max residual {:.3e} (tolerance {:.0e})",
            r.test,
            if r.pass { "PASS" } else { "FAIL" },
            r.max_residual,
            r.tolerance
        ));
        if !r.decay.is_empty() {
            let d: Vec<String> = r.decay.iter().map(|v| format!("{v:.3e}")).collect();
            text.push_str(&format!(", decay [{}]", d.join(", ")));
        }
        text.push('\n');
    }
    let report = if reps.len() == 1 {
        reps[0].to_json()
    } else {
        json!({"pass": ok, "reports": reps.iter().map(ResidualReport::to_json).collect::<Vec<_>>()})
    };
    Ok(Outcome { report, text: Some(text), ok })
}

/// Accepts `2i`, `0.1+1.1i`, `-0.5-2i`, `3` or `re,im`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::Invalid(format!("cannot parse complex number `{s}`"));
    let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
    if let Some((a, b)) = t.split_once(',') {
        return Ok(c(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    let Some(body) = t.strip_suffix('i') else {
        return Ok(c(t.parse().map_err(|_| bad())?, 0.0));
    };
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let cut = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match cut {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().map_err(|_| bad())?,
    };
    Ok(c(re.parse().map_err(|_| bad())?, im))
}

/// Initial data for `evolve`.
pub fn initial_top(n: usize, tau: C64, seed: Option<u64>, init: Init) -> Result<EllipticTop> {
    match init {
        Init::Random => verify::random_top(n, need_seed(seed, "evolve --init random")?, tau),
        Init::Pair => {
            let mut s: SMap = s_indices(n).into_iter().map(|k| (k, c(0.0, 0.0))).collect();
            let (a, b) = s_indices(n)[0];
            let conj = ((n - a) % n, (n - b) % n);
            s.insert((a, b), c(0.4, 0.1));
            s.insert(conj, c(-0.3, 0.2));
            EllipticTop::new(n, s, ThetaParams::new(tau)?)
        }
    }
}

fn cmd_evolve(n: usize, tau: C64, dt: f64, steps: usize, out: &Path, seed: Option<u64>, init: Init) -> Result<Outcome> {
    if n < 2 {
        return Err(Error::Invalid(format!("N must be at least 2 (got {n})")));
    }
    if !(tau.im > 0.0) {
        return Err(Error::Invalid(format!("Im τ must be positive (got {tau})")));
    }
    if steps == 0 {
        return Err(Error::Invalid("--steps must be positive".into()));
    }
    let top = initial_top(n, tau, seed, init)?;
    let traj = evolve(&top, dt, steps, c(0.23, 0.11))?;
    traj.write_csv(std::fs::File::create(out)?)?;
    let dh = traj.max_drift(|r| r.h);
    let dom = traj.max_drift(|r| r.omega2);
    let lax = traj.max_lax_residual();
    let spec = traj.spectrum_drift();
    let ok = dh < 1e-8 && dom < 1e-8 && lax < 1e-6 && spec < 1e-6;
    let report = json!({
        "N": n, "tau": [tau.re, tau.im], "dt": dt, "steps": steps, "seed": seed,
        "init": format!("{init:?}").to_lowercase(),
        "csv": out.display().to_string(),
        "H_drift": dh, "Omega2_drift": dom, "lax_residual_max": lax, "spectrum_drift": spec,
        "pass": ok,
    });
    Ok(Outcome { report, text: None, ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("2i").unwrap(), c(0.0, 2.0));
        assert_eq!(parse_complex("0.1+1.1i").unwrap(), c(0.1, 1.1));
        assert_eq!(parse_complex("-0.5-2i").unwrap(), c(-0.5, -2.0));
        assert_eq!(parse_complex("1e-3+1e+1i").unwrap(), c(1e-3, 10.0));
        assert_eq!(parse_complex("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("0,2").unwrap(), c(0.0, 2.0));
        assert_eq!(parse_complex("3").unwrap(), c(3.0, 0.0));
        assert!(parse_complex("2j").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["cmtop", "lax", "--family", "trig", "--N", "1"]), 2);
        assert_eq!(run(["cmtop", "verify", "--case", "nope"]), 2);
        assert_eq!(run(["cmtop", "verify", "--case", "sl2-trig"]), 2);
        assert_eq!(run(["cmtop", "frobnicate"]), 2);
    }

    #[test]
    fn index_parsing() {
        assert_eq!(parse_index("auto").unwrap(), None);
        assert_eq!(parse_index("-2").unwrap(), Some(-2));
        assert!(parse_index("top").is_err());
    }
}
