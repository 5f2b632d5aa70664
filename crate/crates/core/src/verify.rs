//! Exhaustive and randomized checks of the number-theoretic claims the
//! algorithms rely on. Each suite returns a [`SuiteReport`] listing any
//! counterexamples it found.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::algorithms::{self, ExactBackend, FactorResult};
use crate::arith::{self, gcd_u64, primes_up_to, OrderStrategy, Residue};
use crate::collisions::{classify_u64, construct_m, divides_exactly_one, CollisionKind};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::quantum_sim::CircuitBackend;
use crate::sequences::{floyd_meet, ClosedFormContext, OrbitTable, QuadraticFamily, WordPolynomial};

/// Counterexamples kept per report; the count is always exact.
pub const MAX_REPORTED: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    LcmLemma,
    TheoremMain,
    ClosedForm,
    Floyd,
    Shadow,
    Reduction,
    BackendEquivalence,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::LcmLemma,
        Suite::TheoremMain,
        Suite::ClosedForm,
        Suite::Floyd,
        Suite::Shadow,
        Suite::Reduction,
        Suite::BackendEquivalence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LcmLemma => "lcm-lemma",
            Suite::TheoremMain => "theorem-main",
            Suite::ClosedForm => "closed-form",
            Suite::Floyd => "floyd",
            Suite::Shadow => "shadow",
            Suite::Reduction => "reduction",
            Suite::BackendEquivalence => "backend-equivalence",
        }
    }

    /// What `bound` means for this suite.
    pub fn bound_meaning(self) -> &'static str {
        match self {
            Suite::LcmLemma | Suite::TheoremMain => "both prime factors are below the bound",
            Suite::ClosedForm | Suite::Shadow => "moduli are below the bound",
            Suite::Floyd => "every modulus in [2, bound)",
            Suite::Reduction => "semiprime moduli below the bound",
            Suite::BackendEquivalence => "number of seeds per modulus",
        }
    }

    pub fn default_bound(self) -> u64 {
        match self {
            Suite::LcmLemma | Suite::TheoremMain => 50,
            Suite::ClosedForm => 10_000,
            Suite::Floyd => 2000,
            Suite::Shadow => 3000,
            Suite::Reduction => 5000,
            Suite::BackendEquivalence => 100,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            Error::invalid(format!("unknown suite {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    pub bound: u64,
    pub seed: u64,
    /// Constants `c` in `x^2 + c` range over `0..=c_max`.
    pub c_max: u64,
    /// Random instances for the sampled suites.
    pub samples: usize,
    pub execution: Execution,
}

impl SuiteOptions {
    pub fn for_suite(suite: Suite) -> Self {
        SuiteOptions {
            bound: suite.default_bound(),
            seed: 0,
            c_max: 10,
            samples: 200,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub bound: u64,
    pub cases: u64,
    pub counterexample_count: u64,
    pub counterexamples: Vec<String>,
    pub passed: bool,
}

impl SuiteReport {
    fn from_parts(suite: Suite, bound: u64, parts: Vec<Tally>) -> Self {
        let mut cases = 0;
        let mut count = 0;
        let mut shown = Vec::new();
        for p in parts {
            cases += p.cases;
            count += p.failures;
            for s in p.shown {
                if shown.len() < MAX_REPORTED {
                    shown.push(s);
                }
            }
        }
        SuiteReport {
            suite,
            bound,
            cases,
            counterexample_count: count,
            counterexamples: shown,
            passed: count == 0,
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (bound {}): {} cases, {} counterexamples: {}",
            self.suite,
            self.bound,
            self.cases,
            self.counterexample_count,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

#[derive(Default)]
struct Tally {
    cases: u64,
    failures: u64,
    shown: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.shown.len() < MAX_REPORTED {
                self.shown.push(describe());
            }
        }
    }
}

pub fn run_suite(suite: Suite, options: &SuiteOptions) -> Result<SuiteReport> {
    let parts = match suite {
        Suite::LcmLemma => semiprime_sweep(options, false)?,
        Suite::TheoremMain => semiprime_sweep(options, true)?,
        Suite::ClosedForm => closed_form(options)?,
        Suite::Floyd => floyd(options),
        Suite::Shadow => shadow(options)?,
        Suite::Reduction => reduction(options)?,
        Suite::BackendEquivalence => backend_equivalence(options)?,
    };
    Ok(SuiteReport::from_parts(suite, options.bound, parts))
}

// ---------------------------------------------------------------------------
// N = A B with A != B prime, steps x^2 + c
// ---------------------------------------------------------------------------

fn semiprime_instances(options: &SuiteOptions) -> Vec<(u64, u64, u64)> {
    let primes = primes_up_to(options.bound.saturating_sub(1));
    let mut out = Vec::new();
    for (i, &a) in primes.iter().enumerate() {
        for &b in &primes[i + 1..] {
            for c in 0..=options.c_max {
                out.push((a, b, c));
            }
        }
    }
    out
}

fn semiprime_sweep(options: &SuiteOptions, theorem: bool) -> Result<Vec<Tally>> {
    let primes = primes_up_to(options.bound.saturating_sub(1));
    // shadow tables are shared by every instance with the same (p, c)
    let mut shadow_tables: HashMap<(u64, u64), OrbitTable> = HashMap::new();
    for &p in &primes {
        for c in 0..=options.c_max {
            shadow_tables.insert((p, c), OrbitTable::square_plus(c, p));
        }
    }
    let instances = semiprime_instances(options);
    let results = options.execution.map(instances, |(a, b, c)| {
        let ta = &shadow_tables[&(a, c)];
        let tb = &shadow_tables[&(b, c)];
        if theorem {
            theorem_instance(a, b, c, ta, tb)
        } else {
            Ok(lcm_instance(a, b, c, ta, tb))
        }
    });
    results.into_iter().collect()
}

fn lcm_instance(a: u64, b: u64, c: u64, ta: &OrbitTable, tb: &OrbitTable) -> Tally {
    let n = a * b;
    let table = OrbitTable::square_plus(c, n);
    let mut tally = Tally::default();
    for x0 in 0..n {
        let lambda = table.shape(x0).lambda;
        let (la, lb) = (ta.shape(x0 % a).lambda, tb.shape(x0 % b).lambda);
        tally.check(lambda == num_integer::lcm(la, lb), || {
            format!("N={n} ({a}*{b}) c={c} x0={x0}: lambda={lambda}, lambda_A={la}, lambda_B={lb}")
        });
    }
    tally
}

struct CycleVerdict {
    lambda_a: u64,
    lambda_b: u64,
    m: Option<u64>,
    pair_exists: bool,
    /// `m` divides exactly one of the two cycle lengths and every member
    /// `x` has `1 < gcd(f^m(x) - x, N) < N`.
    offset_ok: bool,
}

fn theorem_instance(a: u64, b: u64, c: u64, ta: &OrbitTable, tb: &OrbitTable) -> Result<Tally> {
    let n = a * b;
    let table = OrbitTable::square_plus(c, n);
    let mut verdicts = Vec::with_capacity(table.cycles().len());
    for cycle in table.cycles() {
        let entry = cycle[0];
        let lambda_a = ta.shape(entry % a).lambda;
        let lambda_b = tb.shape(entry % b).lambda;
        let len = cycle.len();
        let pair_exists = cycle[1..]
            .iter()
            .any(|&y| classify_u64(entry, y, n) == CollisionKind::Nontrivial);
        let offset = construct_m(lambda_a, lambda_b)?;
        let offset_ok = match offset {
            None => true,
            Some(off) => {
                let shift = (off.m % len as u64) as usize;
                divides_exactly_one(off.m, lambda_a, lambda_b)
                    && cycle
                        .iter()
                        .enumerate()
                        .all(|(k, &x)| classify_u64(cycle[(k + shift) % len], x, n) == CollisionKind::Nontrivial)
            }
        };
        verdicts.push(CycleVerdict {
            lambda_a,
            lambda_b,
            m: offset.map(|o| o.m),
            pair_exists,
            offset_ok,
        });
    }
    let mut tally = Tally::default();
    for x0 in 0..n {
        let v = &verdicts[table.cycle_id(x0)];
        let (la, lb) = (ta.shape(x0 % a).lambda, tb.shape(x0 % b).lambda);
        let differ = la != lb;
        let ok =
            la == v.lambda_a && lb == v.lambda_b && differ == v.m.is_some() && differ == v.pair_exists && v.offset_ok;
        tally.check(ok, || {
            format!(
                "N={n} ({a}*{b}) c={c} x0={x0}: lambda_A={la}, lambda_B={lb}, m={:?}, pair={}, offset_ok={}",
                v.m, v.pair_exists, v.offset_ok
            )
        });
    }
    Ok(tally)
}

// ---------------------------------------------------------------------------
// Closed form against iteration
// ---------------------------------------------------------------------------

/// Odd moduli below `bound` that are not prime powers, at least 15.
fn closed_form_moduli(bound: u64) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for n in (15..bound).step_by(2) {
        if arith::as_prime_power(&BigUint::from(n))?.is_none() && !arith::is_prime_u64(n) {
            out.push(n);
        }
    }
    Ok(out)
}

const CLOSED_FORM_MAX_INDEX: u64 = 200;

fn closed_form(options: &SuiteOptions) -> Result<Vec<Tally>> {
    let moduli = closed_form_moduli(options.bound)?;
    if moduli.is_empty() {
        return Err(Error::invalid("closed-form suite needs a bound above 15"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut instances = Vec::with_capacity(options.samples);
    while instances.len() < options.samples {
        let n = moduli[rng.gen_range(0..moduli.len())];
        let a = rng.gen_range(1..n);
        let b = rng.gen_range(0..n);
        let x0 = rng.gen_range(0..n);
        if gcd_u64(a, n) != 1 {
            continue;
        }
        let family = QuadraticFamily::new(a, b, n)?;
        if gcd_u64(family.alpha(&BigUint::from(x0)).to_u64().unwrap(), n) != 1 {
            continue;
        }
        instances.push((family, x0));
    }
    let results = options.execution.map(instances, |(family, x0)| -> Result<Tally> {
        let n = family.modulus().to_u64().unwrap();
        let ctx = ClosedFormContext::with_exact_order(family.clone(), x0)?;
        let mut tally = Tally::default();
        let mut x = BigUint::from(x0);
        for i in 0..=CLOSED_FORM_MAX_INDEX {
            let formula = ctx.term(&BigUint::from(i));
            tally.check(formula == x, || {
                format!(
                    "N={n} a={} b={} x0={x0} i={i}: iterate {x}, closed form {formula}",
                    family.a(),
                    family.b()
                )
            });
            x = family.iterate(&x);
        }
        Ok(tally)
    });
    results.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Floyd meeting index
// ---------------------------------------------------------------------------

fn floyd(options: &SuiteOptions) -> Vec<Tally> {
    let instances: Vec<(u64, u64)> = (2..options.bound.max(2))
        .flat_map(|n| (0..=options.c_max).map(move |c| (n, c)))
        .collect();
    options.execution.map(instances, |(n, c)| {
        let w = WordPolynomial::square_plus(c, n);
        let table = OrbitTable::square_plus(c, n);
        let mut tally = Tally::default();
        for x0 in 0..n {
            let i = floyd_meet(|x: &u64| w.eval(*x), x0);
            let shape = table.shape(x0);
            // x_k for k >= mu, read off the cycle starting at x_mu
            let entry = iterate_word(&w, x0, shape.mu);
            let cycle = table.cycle(table.cycle_id(x0));
            let base = table.position(entry).unwrap() as u64;
            let term = |k: u64| cycle[((base + k - shape.mu) % shape.lambda) as usize];
            let (x_i, x_2i) = if i >= shape.mu {
                (term(i), term(2 * i))
            } else {
                (iterate_word(&w, x0, i), iterate_word(&w, x0, 2 * i))
            };
            let ok = x_i == x_2i && i >= shape.mu && i % shape.lambda == 0 && i == shape.first_meeting_index();
            tally.check(ok, || format!("N={n} c={c} x0={x0}: meet at {i}, shape {shape:?}"));
        }
        tally
    })
}

fn iterate_word(w: &WordPolynomial, mut x: u64, steps: u64) -> u64 {
    for _ in 0..steps {
        x = w.eval(x);
    }
    x
}

// ---------------------------------------------------------------------------
// Shadow sequences
// ---------------------------------------------------------------------------

fn shadow(options: &SuiteOptions) -> Result<Vec<Tally>> {
    if options.bound < 7 {
        return Err(Error::invalid("shadow suite needs a bound of at least 7"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut instances = Vec::with_capacity(options.samples);
    while instances.len() < options.samples {
        let n = rng.gen_range(6..options.bound);
        let divisors: Vec<u64> = (2..n).filter(|d| n % d == 0).collect();
        if divisors.is_empty() {
            continue;
        }
        let d = divisors[rng.gen_range(0..divisors.len())];
        let c = rng.gen_range(0..=options.c_max);
        let x0 = rng.gen_range(0..n);
        instances.push((n, d, c, x0));
    }
    Ok(options.execution.map(instances, |(n, d, c, x0)| {
        let w = WordPolynomial::square_plus(c, n);
        let full = OrbitTable::square_plus(c, n).shape(x0);
        let reduced = OrbitTable::square_plus(c, d).shape(x0 % d);
        let mut tally = Tally::default();
        let mut x = x0;
        for i in 0..full.mu + full.lambda {
            let next = w.eval(x);
            tally.check(next % d == w.eval_mod(x % d, d), || {
                format!("N={n} d={d} c={c} x0={x0}: reduction does not commute at step {i}")
            });
            x = next;
        }
        tally.check(
            reduced.mu <= full.mu && full.lambda.is_multiple_of(reduced.lambda),
            || format!("N={n} d={d} c={c} x0={x0}: shadow {reduced:?} vs {full:?}"),
        );
        tally
    }))
}

// ---------------------------------------------------------------------------
// Linear rho against the extended Shor procedure
// ---------------------------------------------------------------------------

/// Largest base tried for each modulus.
pub const REDUCTION_MAX_BASE: u64 = 50;

fn reduction(options: &SuiteOptions) -> Result<Vec<Tally>> {
    let primes = primes_up_to(options.bound / 2);
    let mut moduli = Vec::new();
    for (i, &p) in primes.iter().enumerate() {
        for &q in &primes[i + 1..] {
            if p * q >= options.bound {
                break;
            }
            moduli.push(p * q);
        }
    }
    moduli.sort_unstable();
    let backend = ExactBackend {
        order_strategy: OrderStrategy::GroupExponent { bound: 1 << 20 },
    };
    let results = options.execution.map(moduli, |n| -> Result<Tally> {
        let big_n = BigUint::from(n);
        let mut tally = Tally::default();
        for a in 2..REDUCTION_MAX_BASE.min(n) {
            if gcd_u64(a, n) != 1 {
                continue;
            }
            let linear = algorithms::quantum_rho_linear(&BigUint::from(a), &big_n, &backend)?;
            let shor = algorithms::extended_shor(&Residue::new(a, n)?, &backend)?;
            tally.check(agree(&linear, &shor), || {
                format!(
                    "N={n} a={a}: linear {:?} via d={:?}, extended {:?} via d={:?}",
                    linear.factor,
                    linear.diagnostics.successful_divisor,
                    shor.factor,
                    shor.diagnostics.successful_divisor
                )
            });
        }
        Ok(tally)
    });
    results.into_iter().collect()
}

fn agree(x: &FactorResult, y: &FactorResult) -> bool {
    x.factor == y.factor && x.diagnostics.successful_divisor == y.diagnostics.successful_divisor
}

// ---------------------------------------------------------------------------
// Circuit backend against the exact backend
// ---------------------------------------------------------------------------

fn backend_equivalence(options: &SuiteOptions) -> Result<Vec<Tally>> {
    let exact = ExactBackend::default();
    let family = QuadraticFamily::new(1u32, 2u32, 143u32)?;
    let x0 = BigUint::from(2u32);
    let base = BigUint::from(3u32);
    let n209 = BigUint::from(209u32);
    let reference_143 = algorithms::quantum_rho(&family, &x0, &exact, None)?.factor;
    let reference_209 = algorithms::quantum_rho_linear(&base, &n209, &exact)?.factor;
    let seeds: Vec<u64> = (0..options.bound).map(|k| options.seed.wrapping_add(k)).collect();
    let results = options.execution.map(seeds, |seed| -> Result<Tally> {
        let circuit = CircuitBackend::with_seed(seed);
        let mut tally = Tally::default();
        let got = algorithms::quantum_rho(&family, &x0, &circuit, None).map(|r| r.factor);
        tally.check(got.as_ref() == Ok(&reference_143), || {
            format!("N=143 seed={seed}: circuit {got:?}, exact {reference_143:?}")
        });
        let got = algorithms::quantum_rho_linear(&base, &n209, &circuit).map(|r| r.factor);
        tally.check(got.as_ref() == Ok(&reference_209), || {
            format!("N=209 seed={seed}: circuit {got:?}, exact {reference_209:?}")
        });
        Ok(tally)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(suite: Suite, bound: u64) -> SuiteReport {
        let options = SuiteOptions {
            bound,
            samples: 20,
            ..SuiteOptions::for_suite(suite)
        };
        run_suite(suite, &options).unwrap()
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        for (suite, bound) in [
            (Suite::LcmLemma, 20),
            (Suite::TheoremMain, 20),
            (Suite::ClosedForm, 500),
            (Suite::Floyd, 60),
            (Suite::Shadow, 200),
            (Suite::Reduction, 300),
            (Suite::BackendEquivalence, 3),
        ] {
            let report = small(suite, bound);
            assert!(report.passed, "{report}: {:?}", report.counterexamples);
            assert!(report.cases > 0);
        }
    }

    #[test]
    fn semiprime_case_count() {
        // primes below 10 give N in {6, 10, 14, 15, 21, 35}
        let report = run_suite(
            Suite::LcmLemma,
            &SuiteOptions {
                bound: 10,
                c_max: 0,
                ..SuiteOptions::for_suite(Suite::LcmLemma)
            },
        )
        .unwrap();
        assert_eq!(report.cases, 101);
    }

    #[test]
    fn tally_caps_reported_examples() {
        let mut t = Tally::default();
        for i in 0..50 {
            t.check(false, || i.to_string());
        }
        assert_eq!((t.cases, t.failures, t.shown.len()), (50, 50, MAX_REPORTED));
    }
}
