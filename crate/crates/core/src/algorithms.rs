//! Factoring procedures built on collisions in iterated sequences:
//! classical rho with Floyd cycle detection, the period-finding rho over the
//! quadratic family, Shor's procedure and its extension to any small divisor
//! of the order, and the rho variant over the linear family `a^i`.
//!
//! Every period-finding step goes through a [`Backend`], so the exact
//! classical oracle and the circuit simulator are interchangeable.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::arith::{
    self, first_primes, is_probable_prime, mod_pow, mulmod_u64, multiplicative_order_with, powmod_u64, random_below,
    Natural, OrderStrategy, PrimePower, Residue, DEFAULT_PRIMALITY_ROUNDS,
};
use crate::collisions::{classify, CollisionWitness};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sequences::{ClosedFormContext, LinearFamily, Polynomial, QuadraticFamily};

// ---------------------------------------------------------------------------
// Sequences handed to backends
// ---------------------------------------------------------------------------

/// A sequence `j -> g(j)` produced by an iterated map, restricted to start at
/// an index (`anchor`) that lies on its cycle, so that it is purely periodic
/// from there on.
pub trait PeriodicSequence: Sync {
    fn modulus(&self) -> &Natural;

    /// `g(j)` for an absolute index `j`.
    fn term(&self, index: &Natural) -> Natural;

    /// First index of the purely periodic part.
    fn anchor(&self) -> Natural;

    /// The iterated map: `successor(g(j)) = g(j + 1)`.
    fn successor(&self, value: &Natural) -> Natural;

    /// Machine-word fast path for [`term`](Self::term).
    fn term_word(&self, _index: u64) -> Option<u64> {
        None
    }

    /// Machine-word fast path for [`successor`](Self::successor).
    fn successor_word(&self, _value: u64) -> Option<u64> {
        None
    }
}

#[derive(Clone, Copy, Debug)]
struct WordQuadratic {
    a: u64,
    b: u64,
    c: u64,
    n: u64,
    alpha: u64,
    order: u64,
    inv_two_a: u64,
}

/// `g(j) = f^j(x0)` for the quadratic family, anchored at index N.
#[derive(Clone, Debug)]
pub struct QuadraticOrbit {
    ctx: ClosedFormContext,
    word: Option<WordQuadratic>,
}

impl QuadraticOrbit {
    pub fn new(ctx: ClosedFormContext) -> Self {
        let f = ctx.family();
        let word = (|| {
            let n = f.modulus().to_u64().filter(|n| *n < (1 << 62))?;
            let inv = arith::mod_inv(&Residue::new(f.a() * 2u32, f.modulus().clone()).ok()?).ok()?;
            Some(WordQuadratic {
                a: f.a().to_u64()?,
                b: f.b().to_u64()?,
                c: f.constant().to_u64()?,
                n,
                alpha: ctx.alpha().to_u64()?,
                order: ctx.order().to_u64()?,
                inv_two_a: inv.value().to_u64()?,
            })
        })();
        QuadraticOrbit { ctx, word }
    }

    pub fn context(&self) -> &ClosedFormContext {
        &self.ctx
    }
}

impl PeriodicSequence for QuadraticOrbit {
    fn modulus(&self) -> &Natural {
        self.ctx.family().modulus()
    }

    fn term(&self, index: &Natural) -> Natural {
        self.ctx.term(index)
    }

    fn anchor(&self) -> Natural {
        self.modulus().clone()
    }

    fn successor(&self, value: &Natural) -> Natural {
        self.ctx.family().iterate(value)
    }

    fn term_word(&self, index: u64) -> Option<u64> {
        let w = self.word?;
        let gamma = powmod_u64(2, index, w.order);
        let p = powmod_u64(w.alpha, gamma, w.n);
        let numerator = (2 * p + w.n - w.b) % w.n;
        Some(mulmod_u64(numerator, w.inv_two_a, w.n))
    }

    fn successor_word(&self, x: u64) -> Option<u64> {
        let w = self.word?;
        let ax2 = mulmod_u64(w.a, mulmod_u64(x, x, w.n), w.n);
        let bx = mulmod_u64(w.b, x, w.n);
        Some(((ax2 as u128 + bx as u128 + w.c as u128) % w.n as u128) as u64)
    }
}

/// `g(j) = a^j mod N`, purely periodic from index 0.
#[derive(Clone, Debug)]
pub struct PowerOrbit {
    family: LinearFamily,
    word: Option<(u64, u64)>,
}

impl PowerOrbit {
    pub fn new(family: LinearFamily) -> Self {
        let word = match (family.a().to_u64(), family.modulus().to_u64()) {
            (Some(a), Some(n)) if n < (1 << 62) => Some((a, n)),
            _ => None,
        };
        PowerOrbit { family, word }
    }
}

impl PeriodicSequence for PowerOrbit {
    fn modulus(&self) -> &Natural {
        self.family.modulus()
    }

    fn term(&self, index: &Natural) -> Natural {
        self.family.term(index)
    }

    fn anchor(&self) -> Natural {
        BigUint::zero()
    }

    fn successor(&self, value: &Natural) -> Natural {
        self.family.iterate(value)
    }

    fn term_word(&self, index: u64) -> Option<u64> {
        self.word.map(|(a, n)| powmod_u64(a, index, n))
    }

    fn successor_word(&self, x: u64) -> Option<u64> {
        self.word.map(|(a, n)| mulmod_u64(x, a, n))
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendMode {
    ExactClassical,
    CircuitSimulation,
}

/// Answers order and period queries.
///
/// In exact-classical mode answers are always the true order and least
/// period. Circuit-simulation backends may fail with
/// [`Error::BackendFailure`], which callers must treat as retryable and keep
/// distinct from "no factor found".
pub trait Backend: Sync {
    fn mode(&self) -> BackendMode;

    /// `ord(x, N)` for `x` coprime to its modulus.
    fn order_of(&self, x: &Residue) -> Result<Natural>;

    /// Least period of the sequence from its anchor on.
    fn period_of(&self, seq: &dyn PeriodicSequence) -> Result<Natural>;
}

/// Classical stand-in for period finding: counts steps around the cycle.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactBackend {
    pub order_strategy: OrderStrategy,
}

impl Backend for ExactBackend {
    fn mode(&self) -> BackendMode {
        BackendMode::ExactClassical
    }

    fn order_of(&self, x: &Residue) -> Result<Natural> {
        multiplicative_order_with(x, self.order_strategy)
    }

    fn period_of(&self, seq: &dyn PeriodicSequence) -> Result<Natural> {
        let modulus = seq.modulus();
        let anchor = seq.anchor();
        let not_periodic = || Error::invalid("sequence does not return to its anchor term");
        if let (Some(n), Some(a)) = (modulus.to_u64(), anchor.to_u64()) {
            if let Some(start) = seq.term_word(a) {
                let mut x = seq.successor_word(start).ok_or_else(not_periodic)?;
                let mut period = 1u64;
                while x != start {
                    if period > n {
                        return Err(not_periodic());
                    }
                    x = seq.successor_word(x).unwrap();
                    period += 1;
                }
                return Ok(BigUint::from(period));
            }
        }
        let start = seq.term(&anchor);
        let mut x = seq.successor(&start);
        let mut period = BigUint::one();
        while x != start {
            if &period > modulus {
                return Err(not_periodic());
            }
            x = seq.successor(&x);
            period += 1u32;
        }
        Ok(period)
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rho,
    QuantumRho,
    Shor,
    ExtendedShor,
    QuantumRhoLinear,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rho => "rho",
            Algorithm::QuantumRho => "quantum-rho",
            Algorithm::Shor => "shor",
            Algorithm::ExtendedShor => "extended-shor",
            Algorithm::QuantumRhoLinear => "quantum-rho-linear",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a single algorithm run saw on the way to its answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub algorithm: Algorithm,
    /// Short self-describing tag for regression diffs, e.g. `quantum-rho/d=2`.
    pub anchor: String,
    /// `ord(x, N)` or `ord(alpha, N)`.
    #[serde(with = "crate::decimal::option", default)]
    pub order: Option<Natural>,
    /// Period `r_g` of the restricted sequence.
    #[serde(with = "crate::decimal::option", default)]
    pub period: Option<Natural>,
    /// `g(N)`, the in-cycle anchor term of the quadratic orbit.
    #[serde(with = "crate::decimal::option", default)]
    pub in_cycle_term: Option<Natural>,
    pub divisors_tried: Vec<u64>,
    pub successful_divisor: Option<u64>,
    /// Part of the period with every tried prime removed; anything above 1 is
    /// structure the divisor search never looked at.
    #[serde(with = "crate::decimal::option", default)]
    pub untried_cofactor: Option<Natural>,
    pub witness: Option<CollisionWitness>,
    pub iterations: Option<u64>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn new(algorithm: Algorithm) -> Self {
        Diagnostics {
            algorithm,
            anchor: algorithm.name().to_string(),
            order: None,
            period: None,
            in_cycle_term: None,
            divisors_tried: Vec::new(),
            successful_divisor: None,
            untried_cofactor: None,
            witness: None,
            iterations: None,
            notes: Vec::new(),
        }
    }
}

/// A factor (if one was found) and how the run got there. When present,
/// `1 < factor < N` and `factor | N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorResult {
    #[serde(with = "crate::decimal::option", default)]
    pub factor: Option<Natural>,
    pub diagnostics: Diagnostics,
}

impl FactorResult {
    fn found(factor: Natural, diagnostics: Diagnostics) -> Self {
        FactorResult {
            factor: Some(factor),
            diagnostics,
        }
    }

    fn none(diagnostics: Diagnostics) -> Self {
        FactorResult {
            factor: None,
            diagnostics,
        }
    }

    pub fn is_found(&self) -> bool {
        self.factor.is_some()
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn require_splittable(n: &Natural) -> Result<()> {
    if n < &BigUint::from(4u32) {
        return Err(Error::invalid(format!("{n} is not composite")));
    }
    if let Some(pp) = arith::as_prime_power(n)? {
        return Err(if pp.exponent == 1 {
            Error::invalid(format!("{n} is prime"))
        } else {
            Error::invalid(format!("{n} is a prime power ({pp})"))
        });
    }
    Ok(())
}

fn proper_divisor(g: &Natural, n: &Natural) -> bool {
    !g.is_one() && g != n && !g.is_zero()
}

/// Distinct primes among the first `bitlen(N)` primes that divide `r`,
/// ascending.
pub fn divisors(r: &Natural, n: &Natural) -> Vec<u64> {
    if r.is_zero() {
        return Vec::new();
    }
    first_primes(n.bits() as usize)
        .into_iter()
        .filter(|&p| (r % p).is_zero())
        .collect()
}

fn strip_primes(r: &Natural, primes: &[u64]) -> Natural {
    let mut rest = r.clone();
    for &p in primes {
        while !rest.is_zero() && (&rest % p).is_zero() {
            rest /= p;
        }
    }
    rest
}

/// `sum_{i=0}^{d-1} x^{i r / d} mod N`, the cofactor with
/// `(x^{r/d} - 1) * cofactor = x^r - 1`.
pub fn cyclotomic_cofactor(x: &Residue, r: &Natural, d: &Natural) -> Result<Residue> {
    if d.is_zero() || !(r % d).is_zero() {
        return Err(Error::invalid(format!("{d} does not divide {r}")));
    }
    let step = mod_pow(x, &(r / d));
    let mut term = x.with_value(1u32);
    let mut sum = x.with_value(0u32);
    let mut i = BigUint::zero();
    while &i < d {
        sum = sum.add(&term);
        term = term.mul(&step);
        i += 1u32;
    }
    Ok(sum)
}

// ---------------------------------------------------------------------------
// Algorithms
// ---------------------------------------------------------------------------

/// Classical rho: the tortoise takes one step, Achilles two; stop at the
/// first pair whose difference shares a factor with N. A trivial collision
/// ends the search with no factor.
pub fn pollard_rho_classical(n: &Natural, poly: &Polynomial, x0: &Natural) -> Result<FactorResult> {
    require_splittable(n)?;
    if poly.modulus() != n {
        return Err(Error::invalid("polynomial modulus differs from N"));
    }
    let mut diag = Diagnostics::new(Algorithm::Rho);
    let x0 = x0 % n;

    let (i, t, a) = if let Some(w) = poly.to_word() {
        let (mut t, mut a) = (x0.to_u64().unwrap(), x0.to_u64().unwrap());
        let mut i = 0u64;
        loop {
            t = w.eval(t);
            a = w.eval(w.eval(a));
            i += 1;
            if num_integer::gcd(t.abs_diff(a), w.modulus) != 1 {
                break (i, BigUint::from(t), BigUint::from(a));
            }
        }
    } else {
        let (mut t, mut a) = (x0.clone(), x0);
        let mut i = 0u64;
        loop {
            t = poly.eval(&t);
            a = poly.eval(&poly.eval(&a));
            i += 1;
            if !classify(&t, &a, n).gcd.is_one() {
                break (i, t, a);
            }
        }
    };
    let witness = CollisionWitness::new(i, 2 * i, t, a, n);
    diag.iterations = Some(i);
    diag.anchor = format!("rho/i={i}");
    let result = if witness.is_nontrivial() {
        FactorResult::found(witness.gcd.clone(), diag.clone())
    } else {
        diag.notes.push("trivial collision: gave up".into());
        FactorResult::none(diag.clone())
    };
    Ok(FactorResult {
        diagnostics: Diagnostics {
            witness: Some(witness),
            ..result.diagnostics
        },
        ..result
    })
}

/// Period-finding rho over the quadratic family.
///
/// Obtains `r = ord(alpha, N)` (or uses `known_order`, e.g. from a failed
/// Shor run), anchors the orbit at `g(N)`, asks the backend for the period
/// `r_g`, then tests the pairs `(N, N + r_g / d)` for the small prime
/// divisors `d` of `r_g`.
pub fn quantum_rho(
    family: &QuadraticFamily,
    x0: &Natural,
    backend: &dyn Backend,
    known_order: Option<Natural>,
) -> Result<FactorResult> {
    let n = family.modulus().clone();
    require_splittable(&n)?;
    let mut diag = Diagnostics::new(Algorithm::QuantumRho);
    let x0 = x0 % &n;
    let alpha = family.alpha(&x0);
    let g = alpha.gcd(&n);
    if g == n {
        diag.notes.push("alpha is 0 modulo N: the orbit is constant".into());
        return Ok(FactorResult::none(diag));
    }
    if !g.is_one() {
        diag.notes.push(format!("alpha = {alpha} shares a factor with N"));
        diag.anchor = "quantum-rho/alpha-gcd".into();
        return Ok(FactorResult::found(g, diag));
    }
    let order = match known_order {
        Some(r) => r,
        None => backend.order_of(&Residue::new(alpha.clone(), n.clone())?)?,
    };
    diag.order = Some(order.clone());
    let ctx = ClosedFormContext::new(family.clone(), x0, order)?;
    let orbit = QuadraticOrbit::new(ctx);
    let anchor_term = orbit.term(&n);
    diag.in_cycle_term = Some(anchor_term.clone());
    let period = backend.period_of(&orbit)?;
    diag.period = Some(period.clone());

    let candidates = divisors(&period, &n);
    diag.untried_cofactor = Some(strip_primes(&period, &candidates));
    for d in candidates {
        diag.divisors_tried.push(d);
        let j = &n + &period / d;
        let witness = CollisionWitness::new(n.clone(), j.clone(), anchor_term.clone(), orbit.term(&j), &n);
        if witness.is_nontrivial() {
            diag.successful_divisor = Some(d);
            diag.anchor = format!("quantum-rho/d={d}");
            let factor = witness.gcd.clone();
            diag.witness = Some(witness);
            return Ok(FactorResult::found(factor, diag));
        }
    }
    Ok(FactorResult::none(diag))
}

fn coprime_or_factor(x: &Residue, diag: &mut Diagnostics) -> Result<Option<FactorResult>> {
    let n = x.modulus();
    let g = x.value().gcd(n);
    if x.value().is_zero() {
        return Err(Error::invalid("x must be nonzero modulo N"));
    }
    if !g.is_one() {
        diag.notes.push(format!("{} shares the factor {g} with N", x.value()));
        diag.anchor = format!("{}/gcd", diag.algorithm);
        return Ok(Some(FactorResult::found(g, diag.clone())));
    }
    Ok(None)
}

/// Shor's procedure: with `r = ord(x, N)` even, `gcd(x^{r/2} - 1, N)`.
pub fn shor(x: &Residue, backend: &dyn Backend) -> Result<FactorResult> {
    let n = x.modulus().clone();
    require_splittable(&n)?;
    let mut diag = Diagnostics::new(Algorithm::Shor);
    if let Some(found) = coprime_or_factor(x, &mut diag)? {
        return Ok(found);
    }
    let r = backend.order_of(x)?;
    diag.order = Some(r.clone());
    if r.is_odd() {
        diag.notes.push("order is odd".into());
        return Ok(FactorResult::none(diag));
    }
    let half = mod_pow(x, &(&r >> 1u32));
    let witness = CollisionWitness::new(0u32, &r >> 1u32, BigUint::one(), half.value().clone(), &n);
    diag.divisors_tried.push(2);
    let found = witness.is_nontrivial();
    if !found && half.value() == &(&n - 1u32) {
        diag.notes.push("x^(r/2) = -1 mod N".into());
    }
    let factor = witness.gcd.clone();
    diag.witness = Some(witness);
    if found {
        diag.successful_divisor = Some(2);
        diag.anchor = "shor/d=2".into();
        Ok(FactorResult::found(factor, diag))
    } else {
        Ok(FactorResult::none(diag))
    }
}

/// Shor's procedure over every small prime divisor `d` of the order:
/// `gcd(x^{r/d} - 1, N)`.
pub fn extended_shor(x: &Residue, backend: &dyn Backend) -> Result<FactorResult> {
    let n = x.modulus().clone();
    require_splittable(&n)?;
    let mut diag = Diagnostics::new(Algorithm::ExtendedShor);
    if let Some(found) = coprime_or_factor(x, &mut diag)? {
        return Ok(found);
    }
    let r = backend.order_of(x)?;
    diag.order = Some(r.clone());
    let candidates = divisors(&r, &n);
    diag.untried_cofactor = Some(strip_primes(&r, &candidates));
    for d in candidates {
        diag.divisors_tried.push(d);
        let e = &r / d;
        let witness = CollisionWitness::new(0u32, e.clone(), BigUint::one(), mod_pow(x, &e).into_value(), &n);
        if witness.is_nontrivial() {
            diag.successful_divisor = Some(d);
            diag.anchor = format!("extended-shor/d={d}");
            let factor = witness.gcd.clone();
            diag.witness = Some(witness);
            return Ok(FactorResult::found(factor, diag));
        }
    }
    Ok(FactorResult::none(diag))
}

/// Period-finding rho over the linear family `g(i) = a^i`, anchored at
/// `g(0) = 1`: tests the pairs `(0, r_g / d)`.
pub fn quantum_rho_linear(a: &Natural, n: &Natural, backend: &dyn Backend) -> Result<FactorResult> {
    require_splittable(n)?;
    let mut diag = Diagnostics::new(Algorithm::QuantumRhoLinear);
    let family = match LinearFamily::new(a.clone(), n.clone()) {
        Ok(f) => f,
        Err(Error::NotCoprime { gcd, .. }) => {
            diag.notes.push(format!("{a} shares the factor {gcd} with N"));
            diag.anchor = "quantum-rho-linear/gcd".into();
            return Ok(FactorResult::found(gcd, diag));
        }
        Err(e) => return Err(e),
    };
    let orbit = PowerOrbit::new(family);
    let period = backend.period_of(&orbit)?;
    diag.period = Some(period.clone());
    diag.in_cycle_term = Some(BigUint::one());
    let candidates = divisors(&period, n);
    diag.untried_cofactor = Some(strip_primes(&period, &candidates));
    for d in candidates {
        diag.divisors_tried.push(d);
        let j = &period / d;
        let witness = CollisionWitness::new(0u32, j.clone(), BigUint::one(), orbit.term(&j), n);
        if witness.is_nontrivial() {
            diag.successful_divisor = Some(d);
            diag.anchor = format!("quantum-rho-linear/d={d}");
            let factor = witness.gcd.clone();
            diag.witness = Some(witness);
            return Ok(FactorResult::found(factor, diag));
        }
    }
    Ok(FactorResult::none(diag))
}

// ---------------------------------------------------------------------------
// Full factorization
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Rho,
    QuantumRhoLinear,
    QuantumRho,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rho => "rho",
            Strategy::QuantumRhoLinear => "quantum-rho-linear",
            Strategy::QuantumRho => "quantum-rho",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorConfig {
    /// Primes up to this bound are removed by trial division first.
    pub trial_bound: u64,
    /// Random restarts per strategy and cofactor.
    pub attempts: usize,
    /// Strategy ladder, tried in order.
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            trial_bound: 10_000,
            attempts: 16,
            strategies: vec![Strategy::Rho, Strategy::QuantumRhoLinear, Strategy::QuantumRho],
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// One line of the factoring log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    #[serde(with = "crate::decimal")]
    pub cofactor: Natural,
    pub attempt: Option<usize>,
    #[serde(with = "crate::decimal::option", default)]
    pub factor: Option<Natural>,
    pub diagnostics: Option<Diagnostics>,
    pub note: Option<String>,
}

/// Prime-power factorization, possibly partial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    #[serde(with = "crate::decimal")]
    pub n: Natural,
    /// Ascending by prime.
    pub factors: Vec<PrimePower>,
    /// Composite cofactors no strategy could split within its budget.
    #[serde(with = "crate::decimal::vec")]
    pub unfactored: Vec<Natural>,
    pub log: Vec<StageRecord>,
}

impl Factorization {
    pub fn is_complete(&self) -> bool {
        self.unfactored.is_empty()
    }

    /// Product of all prime powers and unfactored parts; always equals `n`.
    pub fn product(&self) -> Natural {
        let known: Natural = self.factors.iter().map(PrimePower::value).product();
        known * self.unfactored.iter().product::<Natural>()
    }
}

pub fn factor(n: &Natural, config: &FactorConfig) -> Result<Factorization> {
    factor_with(n, config, &ExactBackend::default())
}

struct Attempt {
    record: StageRecord,
    factor: Option<Natural>,
    fatal: bool,
}

fn attempt_rng(seed: u64, m: &Natural, strategy: usize, attempt: usize) -> ChaCha8Rng {
    let low = m.iter_u64_digits().next().unwrap_or(0);
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(low.rotate_left(21))
        ^ ((strategy as u64) << 48)
        ^ (attempt as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn run_attempt(m: &Natural, strategy: Strategy, rng: &mut ChaCha8Rng, backend: &dyn Backend) -> Result<FactorResult> {
    match strategy {
        Strategy::Rho => {
            // c in [1, m - 3]: avoids 0 and -2
            let c = random_below(rng, &(m - 3u32)) + 1u32;
            let x0 = random_below(rng, m);
            let poly = Polynomial::raw(2, &c.into(), m.clone())?;
            pollard_rho_classical(m, &poly, &x0)
        }
        Strategy::QuantumRhoLinear => {
            let a = random_below(rng, &(m - 3u32)) + 2u32;
            quantum_rho_linear(&a, m, backend)
        }
        Strategy::QuantumRho => {
            let a = random_below(rng, &(m - 1u32)) + 1u32;
            let b = random_below(rng, m);
            let x0 = random_below(rng, m);
            match QuadraticFamily::new(a.clone(), b, m.clone()) {
                Ok(family) => quantum_rho(&family, &x0, backend, None),
                Err(Error::NotCoprime { gcd, .. }) => {
                    let mut diag = Diagnostics::new(Algorithm::QuantumRho);
                    diag.notes.push(format!("a = {a} shares the factor {gcd} with N"));
                    diag.anchor = "quantum-rho/a-gcd".into();
                    Ok(FactorResult::found(gcd, diag))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn split(m: &Natural, config: &FactorConfig, backend: &dyn Backend, log: &mut Vec<StageRecord>) -> Option<Natural> {
    if m.is_even() {
        log.push(StageRecord {
            stage: "even".into(),
            cofactor: m.clone(),
            attempt: None,
            factor: Some(BigUint::from(2u32)),
            diagnostics: None,
            note: None,
        });
        return Some(BigUint::from(2u32));
    }
    for (s_idx, &strategy) in config.strategies.iter().enumerate() {
        let outcomes = config.execution.until_first(
            config.attempts,
            |k| {
                let mut rng = attempt_rng(config.seed, m, s_idx, k);
                let (factor, diagnostics, note, fatal) = match run_attempt(m, strategy, &mut rng, backend) {
                    Ok(res) => {
                        let f = res.factor.clone().filter(|f| proper_divisor(f, m));
                        (f, Some(res.diagnostics), None, false)
                    }
                    Err(e) => (None, None, Some(e.to_string()), !e.is_retryable()),
                };
                Attempt {
                    record: StageRecord {
                        stage: strategy.name().into(),
                        cofactor: m.clone(),
                        attempt: Some(k),
                        factor: factor.clone(),
                        diagnostics,
                        note,
                    },
                    factor,
                    fatal,
                }
            },
            |a| a.factor.is_some() || a.fatal,
        );
        for a in outcomes {
            log.push(a.record);
            if a.factor.is_some() {
                return a.factor;
            }
        }
    }
    None
}

/// Complete factorization: trial division, prime-power short-circuit, then
/// the strategy ladder on every remaining composite, recursing on both
/// halves of each split.
pub fn factor_with(n: &Natural, config: &FactorConfig, backend: &dyn Backend) -> Result<Factorization> {
    if n < &BigUint::from(2u32) {
        return Err(Error::invalid(format!("cannot factor {n}")));
    }
    let mut primes: BTreeMap<Natural, u32> = BTreeMap::new();
    let mut unfactored = Vec::new();
    let mut log = Vec::new();

    let td = arith::trial_division(n, config.trial_bound);
    for &(p, k) in &td.factors {
        *primes.entry(BigUint::from(p)).or_default() += k;
    }
    log.push(StageRecord {
        stage: "trial-division".into(),
        cofactor: n.clone(),
        attempt: None,
        factor: None,
        diagnostics: None,
        note: Some(format!(
            "bound {}: {} small prime(s), cofactor {}",
            config.trial_bound,
            td.factors.len(),
            td.cofactor
        )),
    });

    let mut stack = vec![td.cofactor];
    while let Some(m) = stack.pop() {
        if m.is_one() {
            continue;
        }
        if is_probable_prime(&m, DEFAULT_PRIMALITY_ROUNDS) {
            *primes.entry(m).or_default() += 1;
            continue;
        }
        if let Some(pp) = arith::as_prime_power(&m)? {
            log.push(StageRecord {
                stage: "prime-power".into(),
                cofactor: m.clone(),
                attempt: None,
                factor: Some(pp.base.clone()),
                diagnostics: None,
                note: Some(format!("{m} = {pp}")),
            });
            *primes.entry(pp.base).or_default() += pp.exponent;
            continue;
        }
        match split(&m, config, backend, &mut log) {
            Some(d) => {
                let other = &m / &d;
                stack.push(other);
                stack.push(d);
            }
            None => unfactored.push(m),
        }
    }
    unfactored.sort();
    Ok(Factorization {
        n: n.clone(),
        factors: primes
            .into_iter()
            .map(|(base, exponent)| PrimePower { base, exponent })
            .collect(),
        unfactored,
        log,
    })
}

/// True when `x^{r/d} = -1 (mod N)`, the failure mode of Shor's procedure.
pub fn is_minus_one_power(x: &Residue, r: &Natural, d: u64) -> bool {
    mod_pow(x, &(r / d)).value() == &(x.modulus() - 1u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collisions::CollisionKind;
    use num_bigint::BigInt;

    fn n(v: u64) -> Natural {
        BigUint::from(v)
    }

    fn r(v: u64, m: u64) -> Residue {
        Residue::new(v, m).unwrap()
    }

    #[test]
    fn divisors_examples() {
        // 59 and 67 are also among the first 26 primes
        assert_eq!(divisors(&n(15649927), &n(62615533)), vec![37, 59, 67]);
        assert_eq!(divisors(&n(608652), &n(62615533))[0], 2);
        assert!(divisors(&n(1), &n(62615533)).is_empty());
        // 143 has 8 bits: primes up to 19
        assert_eq!(divisors(&n(2 * 3 * 19 * 23), &n(143)), vec![2, 3, 19]);
    }

    #[test]
    fn classical_rho_examples() {
        let p = Polynomial::raw(2, &BigInt::from(8), n(3127)).unwrap();
        let res = pollard_rho_classical(&n(3127), &p, &n(2)).unwrap();
        // Floyd meets modulo 59 at i = 3, before the 53 collision
        assert_eq!(res.factor, Some(n(59)));
        assert_eq!(res.diagnostics.iterations, Some(3));

        let p = Polynomial::raw(2, &BigInt::from(8), n(3551)).unwrap();
        let res = pollard_rho_classical(&n(3551), &p, &n(38)).unwrap();
        assert_eq!(res.factor, None);
        assert_eq!(res.diagnostics.witness.unwrap().kind, CollisionKind::Trivial);

        let p = Polynomial::raw(2, &BigInt::from(-2), n(3127)).unwrap();
        let res = pollard_rho_classical(&n(3127), &p, &n(2)).unwrap();
        assert_eq!(res.factor, None);
        assert_eq!(res.diagnostics.iterations, Some(1));

        assert!(
            pollard_rho_classical(&n(3125), &Polynomial::raw(2, &BigInt::from(1), n(3125)).unwrap(), &n(2)).is_err()
        );
    }

    #[test]
    fn quantum_rho_small_example() {
        let f = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        let res = quantum_rho(&f, &n(2), &ExactBackend::default(), None).unwrap();
        assert_eq!(res.factor, Some(n(13)));
        let d = &res.diagnostics;
        assert_eq!(d.order, Some(n(15)));
        assert_eq!(d.in_cycle_term, Some(n(125)));
        assert_eq!(d.period, Some(n(4)));
        assert_eq!(d.successful_divisor, Some(2));
        let w = d.witness.as_ref().unwrap();
        assert_eq!((w.n_i.clone(), w.n_j.clone()), (n(125), n(8)));
    }

    #[test]
    fn quantum_rho_accepts_a_known_order() {
        let f = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        let with = quantum_rho(&f, &n(2), &ExactBackend::default(), Some(n(60))).unwrap();
        assert_eq!(with.factor, Some(n(13)));
        assert!(quantum_rho(&f, &n(2), &ExactBackend::default(), Some(n(7))).is_err());
    }

    #[test]
    fn shor_examples() {
        let res = shor(&r(3, 209), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, Some(n(11)));
        assert_eq!(res.diagnostics.order, Some(n(90)));
        // 12 is 1 mod 11 and -1 mod 13
        let res = shor(&r(12, 143), &ExactBackend::default()).unwrap();
        assert_eq!(res.diagnostics.order, Some(n(2)));
        assert_eq!(res.factor, Some(n(11)));
        // -1 has order 2 and fails
        let res = shor(&r(142, 143), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, None);
        // shared factor is returned as is
        let res = shor(&r(22, 143), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, Some(n(11)));
        assert!(shor(&r(2, 343), &ExactBackend::default()).is_err());
    }

    #[test]
    fn extended_shor_small() {
        let res = extended_shor(&r(3, 209), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, Some(n(11)));
        assert_eq!(res.diagnostics.successful_divisor, Some(2));
    }

    #[test]
    fn quantum_rho_linear_small() {
        let res = quantum_rho_linear(&n(3), &n(209), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, Some(n(11)));
        assert_eq!(res.diagnostics.period, Some(n(90)));
        let w = res.diagnostics.witness.unwrap();
        assert_eq!((w.i, w.j), (n(0), n(45)));
        // a = N - 1 has period 2 and a^1 = -1
        let res = quantum_rho_linear(&n(208), &n(209), &ExactBackend::default()).unwrap();
        assert_eq!(res.factor, None);
        assert_eq!(res.diagnostics.period, Some(n(2)));
    }

    #[test]
    fn cyclotomic_identity_examples() {
        let x = r(3, 209);
        assert_eq!(cyclotomic_cofactor(&x, &n(90), &n(2)).unwrap().value(), &n(57));
        let c3 = cyclotomic_cofactor(&x, &n(90), &n(3)).unwrap();
        let t = mod_pow(&x, &n(30));
        assert_eq!(c3, x.with_value(1u32).add(&t).add(&t.mul(&t)));
        assert_eq!(cyclotomic_cofactor(&x, &n(90), &n(1)).unwrap().value(), &n(1));
        assert!(cyclotomic_cofactor(&x, &n(90), &n(7)).is_err());
        assert!(cyclotomic_cofactor(&x, &n(90), &n(0)).is_err());
    }

    #[test]
    fn cyclotomic_identity_holds() {
        for m in [15u64, 21, 143, 209, 221, 3127] {
            for xv in 2..60u64 {
                if num_integer::gcd(xv, m) != 1 {
                    continue;
                }
                let x = r(xv, m);
                let ord = arith::multiplicative_order(&x).unwrap().to_u64().unwrap();
                for d in 1..=ord {
                    if !ord.is_multiple_of(d) {
                        continue;
                    }
                    let lhs = mod_pow(&x, &n(ord / d)).sub(&x.with_value(1u32));
                    let c = cyclotomic_cofactor(&x, &n(ord), &n(d)).unwrap();
                    assert_eq!(lhs.mul(&c).value(), &n(0), "x={xv} m={m} d={d}");
                }
            }
        }
    }

    #[test]
    fn factor_examples() {
        let cfg = FactorConfig::default();
        let f = factor(&n(143), &cfg).unwrap();
        assert_eq!(
            f.factors,
            vec![
                PrimePower {
                    base: n(11),
                    exponent: 1
                },
                PrimePower {
                    base: n(13),
                    exponent: 1
                }
            ]
        );
        let f = factor(&n(343), &cfg).unwrap();
        assert_eq!(
            f.factors,
            vec![PrimePower {
                base: n(7),
                exponent: 3
            }]
        );
        let f = factor(&n(7), &cfg).unwrap();
        assert_eq!(
            f.factors,
            vec![PrimePower {
                base: n(7),
                exponent: 1
            }]
        );
        assert!(factor(&n(1), &cfg).is_err());
    }

    #[test]
    fn factor_without_trial_division_uses_the_ladder() {
        let cfg = FactorConfig {
            trial_bound: 1,
            ..FactorConfig::default()
        };
        let f = factor(&n(62615533), &cfg).unwrap();
        assert_eq!(
            f.factors.iter().map(|p| p.base.clone()).collect::<Vec<_>>(),
            vec![n(7907), n(7919)]
        );
        assert!(f.log.iter().any(|s| s.stage == "rho"));

        for strategy in [Strategy::QuantumRhoLinear, Strategy::QuantumRho] {
            let cfg = FactorConfig {
                trial_bound: 1,
                strategies: vec![strategy],
                ..FactorConfig::default()
            };
            let m = n(3 * 5 * 7 * 11 * 13 * 17 * 19);
            let f = factor(&m, &cfg).unwrap();
            assert!(f.is_complete(), "{strategy:?}: {:?}", f.unfactored);
            assert_eq!(f.product(), m);
            assert_eq!(f.factors.len(), 7);
        }
    }

    #[test]
    fn factor_reports_partial_results() {
        let cfg = FactorConfig {
            trial_bound: 1,
            strategies: vec![],
            ..FactorConfig::default()
        };
        let f = factor(&n(2 * 3 * 143), &cfg).unwrap();
        assert!(!f.is_complete());
        assert_eq!(f.product(), n(2 * 3 * 143));
    }

    #[test]
    fn factor_is_deterministic_across_execution_modes() {
        let m = n(1_000_003u64 * 999_983);
        let seq = factor(
            &m,
            &FactorConfig {
                execution: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        let par = factor(
            &m,
            &FactorConfig {
                execution: Execution::Parallel,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
        assert!(seq.is_complete());
    }
}
