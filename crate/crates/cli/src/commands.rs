use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::process::ExitCode;

use qrho_core::algorithms::{
    self, divisors, Backend, Diagnostics, ExactBackend, FactorConfig, FactorResult, Factorization, QuadraticOrbit,
};
use qrho_core::collisions::{classify, CharacterizationReport, Side};
use qrho_core::par::{configure_threads, Execution};
use qrho_core::quantum_sim::{
    self, outcome_distribution, run_period_finding_on, run_stages, CircuitBackend, CircuitConfig, Stage,
    DEFAULT_MAX_ELL,
};
use qrho_core::sequences::{ClosedFormContext, Polynomial, QuadraticFamily};
use qrho_core::verify::{run_suite, Suite, SuiteOptions};
use qrho_core::{Error, Residue};

use crate::{BackendChoice, Cli, Command, Global, Output, StepArgs};

/// Largest counter width for which simulate keeps whole register states.
const STATE_MAX_ELL: u32 = 20;
/// Distribution lines shown in text mode.
const TEXT_DISTRIBUTION_LINES: usize = 16;
/// Probabilities at or below this are left out of printed distributions.
const PRINT_PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Found,
    NoneFound,
}

struct Report {
    status: Status,
    text: String,
    json: Value,
    /// Extra lines for stderr.
    log: Vec<String>,
}

pub fn run(cli: Cli) -> ExitCode {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        configure_threads(jobs);
    }
    match dispatch(&cli.command, g) {
        Ok(report) => {
            for line in &report.log {
                eprintln!("{line}");
            }
            let body = match g.output {
                Output::Text => report.text,
                Output::Json => serde_json::to_string_pretty(&report.json).expect("json values serialize") + "\n",
            };
            // a closed pipe downstream is not an error worth reporting
            let _ = std::io::stdout().lock().write_all(body.as_bytes());
            match report.status {
                Status::Found => ExitCode::SUCCESS,
                Status::NoneFound => ExitCode::from(2),
            }
        }
        Err(e @ Error::BackendFailure { .. }) => {
            eprintln!("error: {e}; retry with another --seed or more --attempts");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execution(g: &Global) -> Execution {
    match g.jobs {
        Some(1) => Execution::Sequential,
        _ => Execution::available(),
    }
}

fn backend(g: &Global) -> Box<dyn Backend> {
    match g.backend {
        BackendChoice::Oracle => Box::new(ExactBackend::default()),
        BackendChoice::Circuit => Box::new(CircuitBackend {
            seed: g.seed,
            max_attempts: g.attempts,
            max_ell: DEFAULT_MAX_ELL,
            execution: execution(g),
        }),
    }
}

fn dispatch(command: &Command, g: &Global) -> Result<Report, Error> {
    let backend = backend(g);
    let backend = backend.as_ref();
    match command {
        Command::Factor {
            n,
            trial_bound,
            restarts,
        } => {
            let config = FactorConfig {
                trial_bound: *trial_bound,
                attempts: *restarts,
                seed: g.seed,
                execution: execution(g),
                ..FactorConfig::default()
            };
            Ok(factor_report(&algorithms::factor_with(n, &config, backend)?))
        }
        Command::Rho { n, c, e, x0 } => {
            let poly = Polynomial::raw(*e, c, n.clone())?;
            single("rho", n, algorithms::pollard_rho_classical(n, &poly, x0)?)
        }
        Command::Qrho { n, a, b, x0, order } => {
            let family = QuadraticFamily::new(a.clone(), b.clone(), n.clone())?;
            single("qrho", n, algorithms::quantum_rho(&family, x0, backend, order.clone())?)
        }
        Command::Shor { x, n } => single("shor", n, algorithms::shor(&residue(x, n)?, backend)?),
        Command::Xshor { x, n } => single("xshor", n, algorithms::extended_shor(&residue(x, n)?, backend)?),
        Command::QrhoLinear { a, n } => single("qrho-linear", n, algorithms::quantum_rho_linear(a, n, backend)?),
        Command::Analyze { n, step, x0 } => analyze(n, step, x0, g),
        Command::Simulate {
            n,
            a,
            b,
            x0,
            stages,
            trace,
        } => {
            let stages: Vec<Stage> = stages.iter().map(|&s| s.into()).collect();
            simulate(n, a, b, x0, &stages, trace.as_deref(), g)
        }
        Command::Verify {
            suite,
            bound,
            c_max,
            samples,
        } => verify(suite, *bound, *c_max, *samples, g),
    }
}

fn residue(x: &BigUint, n: &BigUint) -> Result<Residue, Error> {
    let r = Residue::new(x.clone(), n.clone())?;
    if r.value() == &BigUint::from(0u32) {
        return Err(Error::InvalidArgument(format!("x = {x} is 0 modulo {n}")));
    }
    Ok(r)
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialize")
}

// ---------------------------------------------------------------------------
// factor
// ---------------------------------------------------------------------------

fn factor_report(f: &Factorization) -> Report {
    let mut terms: Vec<String> = f.factors.iter().map(|p| p.to_string()).collect();
    terms.extend(f.unfactored.iter().map(|m| format!("[{m}]")));
    let mut text = format!("{} = {}", f.n, terms.join(" * "));
    if f.factors.len() == 1 && f.factors[0].exponent == 1 && f.unfactored.is_empty() {
        text.push_str(" (prime)");
    }
    if !f.is_complete() {
        text.push_str(" (partial: bracketed cofactors are composite)");
    }
    text.push('\n');
    let log = f
        .log
        .iter()
        .map(|r| {
            let mut line = format!("[{}] {}", r.stage, r.cofactor);
            if let Some(k) = r.attempt {
                let _ = write!(line, " attempt {k}");
            }
            match &r.factor {
                Some(d) => {
                    let _ = write!(line, ": factor {d}");
                }
                None if r.attempt.is_some() => line.push_str(": none"),
                None => {}
            }
            if let Some(d) = &r.diagnostics {
                let _ = write!(line, " ({})", d.anchor);
            }
            if let Some(note) = &r.note {
                let _ = write!(line, " {note}");
            }
            line
        })
        .collect();
    let mut json = to_json(f);
    json["complete"] = json!(f.is_complete());
    json["factorization"] = json!(terms);
    Report {
        status: if f.is_complete() {
            Status::Found
        } else {
            Status::NoneFound
        },
        text,
        json,
        log,
    }
}

// ---------------------------------------------------------------------------
// single algorithms
// ---------------------------------------------------------------------------

fn single(command: &str, n: &BigUint, res: FactorResult) -> Result<Report, Error> {
    let text = render_result(n, &res);
    let log = res.diagnostics.notes.iter().map(|s| format!("note: {s}")).collect();
    Ok(Report {
        status: if res.is_found() {
            Status::Found
        } else {
            Status::NoneFound
        },
        json: json!({ "command": command, "n": n.to_string(), "result": to_json(&res) }),
        text,
        log,
    })
}

fn opt(value: &Option<BigUint>) -> Option<String> {
    value.as_ref().map(|v| v.to_string())
}

fn render_result(n: &BigUint, res: &FactorResult) -> String {
    let d: &Diagnostics = &res.diagnostics;
    let mut out = String::new();
    let _ = writeln!(out, "algorithm: {}", d.algorithm);
    let _ = writeln!(out, "N: {n}");
    if let Some(r) = opt(&d.order) {
        let _ = writeln!(out, "order r: {r}");
    }
    if let Some(t) = opt(&d.in_cycle_term) {
        let _ = writeln!(out, "in-cycle term: {t}");
    }
    if let Some(p) = opt(&d.period) {
        let _ = writeln!(out, "period r_g: {p}");
    }
    if let Some(i) = d.iterations {
        let _ = writeln!(out, "iterations: {i}");
    }
    if !d.divisors_tried.is_empty() {
        let tried: Vec<String> = d.divisors_tried.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "divisors tried: {}", tried.join(", "));
    }
    if let Some(s) = d.successful_divisor {
        let _ = writeln!(out, "successful d: {s}");
    }
    if let Some(u) = d.untried_cofactor.as_ref().filter(|u| !u.is_one()) {
        let _ = writeln!(out, "untried cofactor: {u}");
    }
    if let Some(w) = &d.witness {
        let _ = writeln!(
            out,
            "witness: ({}, {}) terms ({}, {}) gcd {} {:?}",
            w.i, w.j, w.n_i, w.n_j, w.gcd, w.kind
        );
    }
    let _ = writeln!(out, "anchor: {}", d.anchor);
    match &res.factor {
        Some(f) => {
            let _ = writeln!(out, "factor: {f}");
        }
        None => out.push_str("factor: none\n"),
    }
    out
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn analyze(n: &BigUint, step: &StepArgs, x0: &BigUint, g: &Global) -> Result<Report, Error> {
    let (poly, step_text) = match &step.a {
        Some(a) => {
            let b = step.b.clone().unwrap_or_else(|| BigUint::from(2u32));
            let family = QuadraticFamily::new(a.clone(), b.clone(), n.clone())?;
            (family.polynomial(), format!("{a} x^2 + {b} x + {}", family.constant()))
        }
        None => {
            let e = step.e.unwrap_or(2);
            let c = step.c.clone().unwrap_or_else(|| 1.into());
            (Polynomial::raw(e, &c, n.clone())?, format!("x^{e} + {c}"))
        }
    };
    let config = FactorConfig {
        seed: g.seed,
        execution: execution(g),
        ..FactorConfig::default()
    };
    let f = algorithms::factor(n, &config)?;
    if !f.is_complete() {
        return Err(Error::Capacity(format!("could not factor {n} to split it")));
    }
    if f.factors.len() < 2 {
        let what = match f.factors.first() {
            Some(p) if p.exponent == 1 => "prime",
            _ => "a prime power",
        };
        return Err(Error::InvalidArgument(format!(
            "{n} is {what}; analysis needs two coprime factors"
        )));
    }
    let a = f.factors[0].value();
    let b = n / &a;
    let rep = qrho_core::collisions::verify_characterization(&poly, x0, &a, &b)?;
    let found = rep.witness.as_ref().is_some_and(|w| w.is_nontrivial());
    let text = render_analysis(n, &a, &b, x0, &step_text, &rep);
    let json = json!({
        "command": "analyze",
        "n": n.to_string(),
        "a": a.to_string(),
        "b": b.to_string(),
        "x0": x0.to_string(),
        "step": step_text,
        "report": to_json(&rep),
    });
    Ok(Report {
        status: if found { Status::Found } else { Status::NoneFound },
        text,
        json,
        log: Vec::new(),
    })
}

fn render_analysis(
    n: &BigUint,
    a: &BigUint,
    b: &BigUint,
    x0: &BigUint,
    step: &str,
    rep: &CharacterizationReport,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "N = {n} = {a} * {b}, step {step}, x0 = {x0}");
    let _ = writeln!(out, "mod N: mu = {}, lambda = {}", rep.mu, rep.lambda);
    let _ = writeln!(out, "mod {a}: mu_A = {}, lambda_A = {}", rep.mu_a, rep.lambda_a);
    let _ = writeln!(out, "mod {b}: mu_B = {}, lambda_B = {}", rep.mu_b, rep.lambda_b);
    let _ = writeln!(
        out,
        "lambda = lcm(lambda_A, lambda_B): {}",
        if rep.lcm_holds { "yes" } else { "no" }
    );
    if rep.distinguishing.is_empty() {
        out.push_str("distinguishing primes: none (equal cycle lengths)\n");
    } else {
        let list: Vec<String> = rep
            .distinguishing
            .iter()
            .map(|p| format!("{} (e_A = {}, e_B = {})", p.t, p.e_a, p.e_b))
            .collect();
        let _ = writeln!(out, "distinguishing primes: {}", list.join(", "));
    }
    match rep.offset {
        Some(off) => {
            let side = match off.multiple_of {
                Side::A => "lambda_A",
                Side::B => "lambda_B",
            };
            let _ = writeln!(out, "offset m = {} (t = {}, multiple of {side})", off.m, off.t);
        }
        None => out.push_str("offset: none\n"),
    }
    match &rep.witness {
        Some(w) => {
            let _ = writeln!(
                out,
                "witness: ({}, {}) terms ({}, {}) gcd {} {:?}",
                w.i, w.j, w.n_i, w.n_j, w.gcd, w.kind
            );
        }
        None => out.push_str("witness: none\n"),
    }
    let _ = writeln!(
        out,
        "in-cycle nontrivial pair exists: {}",
        if rep.nontrivial_pair_exists { "yes" } else { "no" }
    );
    if !rep.counterexamples.is_empty() {
        let _ = writeln!(out, "cycle members not split at offset m: {:?}", rep.counterexamples);
    }
    out
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn simulate(
    n: &BigUint,
    a: &BigUint,
    b: &BigUint,
    x0: &BigUint,
    stages: &[Stage],
    trace_path: Option<&std::path::Path>,
    g: &Global,
) -> Result<Report, Error> {
    let family = QuadraticFamily::new(a.clone(), b.clone(), n.clone())?;
    let ctx = ClosedFormContext::with_exact_order(family, x0.clone())?;
    let order = ctx.order().clone();
    let orbit = QuadraticOrbit::new(ctx);
    let config = CircuitConfig::from_sequence(&orbit, g.seed, DEFAULT_MAX_ELL)?;
    let modulus = config.modulus();
    let mut text = String::new();
    let _ = writeln!(
        text,
        "N = {modulus}, n = {}, ell = {}, shift = {}, ord(alpha) = {order}",
        config.n(),
        config.ell(),
        config.shift()
    );

    let mut stage_json = Vec::new();
    if !stages.is_empty() || trace_path.is_some() {
        if config.ell() > STATE_MAX_ELL {
            return Err(Error::Capacity(format!(
                "register states need ell <= {STATE_MAX_ELL}, got {}",
                config.ell()
            )));
        }
        let all = run_stages(&config)?;
        if let Some(path) = trace_path {
            let full = quantum_sim::trace(&config, &[])?;
            let body = serde_json::to_string(&full).expect("trace serializes");
            std::fs::write(path, body + "\n")
                .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))?;
        }
        for (stage, state) in all.iter().filter(|(s, _)| stages.contains(s)) {
            let snap = quantum_sim::trace(&config, &[*stage])?.stages.remove(0);
            let targets = state.targets();
            let _ = writeln!(
                text,
                "{}: support {}, norm {}, oracle classes {:?}",
                stage.label(),
                snap.support,
                snap.norm,
                targets
            );
            for e in snap.entries.iter().take(8) {
                let _ = writeln!(text, "  |{}>|{}>|{}>  {} {:+}i", e.0, e.1, e.2, e.3, e.4);
            }
            if snap.entries.len() > 8 {
                let _ = writeln!(text, "  ... {} more", snap.entries.len() - 8);
            }
            stage_json.push(json!({ "classes": targets, "snapshot": to_json(&snap) }));
        }
    }

    let dist = outcome_distribution(&config, execution(g));
    let support = dist.support(PRINT_PROBABILITY_FLOOR);
    let _ = writeln!(
        text,
        "distribution: {} outcomes with positive probability",
        support.len()
    );
    let mut by_mass = support.clone();
    by_mass.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    by_mass.truncate(TEXT_DISTRIBUTION_LINES);
    by_mass.sort_by_key(|e| e.0);
    for (c, p) in &by_mass {
        let _ = writeln!(text, "  c = {c}: {p:.12}");
    }

    let run = run_period_finding_on(&config, &dist, g.attempts);
    for (k, at) in run.attempts.iter().enumerate() {
        let _ = writeln!(
            text,
            "attempt {k}: measured {} -> candidate {}, combined {}{}",
            at.outcome,
            at.candidate,
            at.combined,
            if at.verified { " (verified)" } else { "" }
        );
    }
    let mut gcd_step = Value::Null;
    let mut status = Status::NoneFound;
    match run.period {
        Some(period) => {
            let _ = writeln!(text, "r_g = {period}");
            let head = config.table()[0];
            for d in divisors(&BigUint::from(period), n) {
                let j = period / d;
                let term = config.oracle(j);
                let c = classify(&BigUint::from(term), &BigUint::from(head), n);
                let _ = writeln!(
                    text,
                    "d = {d}: gcd(g(N + {j}) - g(N), N) = gcd({term} - {head}, {modulus}) = {}",
                    c.gcd
                );
                let found = c.kind == qrho_core::collisions::CollisionKind::Nontrivial;
                gcd_step = json!({
                    "d": d, "offset": j, "term": term.to_string(), "anchor_term": head.to_string(),
                    "gcd": c.gcd.to_string(), "kind": to_json(&c.kind),
                });
                if found {
                    let _ = writeln!(text, "factor: {}", c.gcd);
                    status = Status::Found;
                    break;
                }
            }
            if status == Status::NoneFound {
                text.push_str("factor: none\n");
            }
        }
        None => {
            let _ = writeln!(text, "no verified period after {} attempts", g.attempts);
        }
    }

    let classes: BTreeSet<u64> = config.table().iter().copied().collect();
    let json = json!({
        "command": "simulate",
        "n": modulus,
        "n_bits": config.n(),
        "ell": config.ell(),
        "shift": config.shift(),
        "order": order.to_string(),
        "oracle_classes": classes.len(),
        "stages": stage_json,
        "distribution": support.iter().map(|(c, p)| json!([c, round12(*p)])).collect::<Vec<_>>(),
        "run": to_json(&run),
        "gcd_step": gcd_step,
        "factor_found": status == Status::Found,
    });
    Ok(Report {
        status,
        text,
        json,
        log: Vec::new(),
    })
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify(name: &str, bound: Option<u64>, c_max: u64, samples: usize, g: &Global) -> Result<Report, Error> {
    let suite: Suite = name.parse()?;
    let options = SuiteOptions {
        bound: bound.unwrap_or(suite.default_bound()),
        seed: g.seed,
        c_max,
        samples,
        execution: execution(g),
    };
    let rep = run_suite(suite, &options)?;
    let mut text = format!("{rep}\n");
    for c in &rep.counterexamples {
        let _ = writeln!(text, "  counterexample: {c}");
    }
    Ok(Report {
        status: if rep.passed { Status::Found } else { Status::NoneFound },
        json: to_json(&rep),
        text,
        log: vec![format!("bound: {}", suite.bound_meaning())],
    })
}
