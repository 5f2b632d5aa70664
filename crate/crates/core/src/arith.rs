//! Exact modular arithmetic, primality and small-prime utilities.
//!
//! Everything here is a pure function over value types. Quantities that can
//! grow with the modulus use [`Natural`] (an arbitrary-precision unsigned
//! integer); small machine-word helpers are provided for the hot loops of
//! the cycle-structure sweeps.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Arbitrary-precision non-negative integer.
pub type Natural = BigUint;

/// Miller-Rabin rounds used when callers do not choose their own.
pub const DEFAULT_PRIMALITY_ROUNDS: u32 = 20;

/// Witnesses {2, 3, ..., 41} are a deterministic Miller-Rabin certificate
/// for every n below 3.317 * 10^24.
const FIXED_WITNESSES: [u32; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];

fn deterministic_limit() -> BigUint {
    // 3317044064679887385961981
    "3317044064679887385961981".parse().unwrap()
}

/// An element of Z/mZ, always stored reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Residue {
    #[serde(with = "crate::decimal")]
    value: Natural,
    #[serde(with = "crate::decimal")]
    modulus: Natural,
}

impl Residue {
    /// Reduces `value` modulo `modulus`. The modulus must be at least 2.
    pub fn new(value: impl Into<Natural>, modulus: impl Into<Natural>) -> Result<Self> {
        let modulus = modulus.into();
        if modulus < BigUint::from(2u32) {
            return Err(Error::invalid(format!("modulus {modulus} is below 2")));
        }
        let value = value.into() % &modulus;
        Ok(Residue { value, modulus })
    }

    /// Reduces a signed integer into `[0, modulus)`.
    pub fn from_signed(value: &BigInt, modulus: impl Into<Natural>) -> Result<Self> {
        let modulus = modulus.into();
        let m = BigInt::from_biguint(Sign::Plus, modulus.clone());
        let reduced = value.mod_floor(&m);
        Residue::new(reduced.magnitude().clone(), modulus)
    }

    pub fn one(modulus: impl Into<Natural>) -> Result<Self> {
        Residue::new(1u32, modulus)
    }

    pub fn value(&self) -> &Natural {
        &self.value
    }

    pub fn modulus(&self) -> &Natural {
        &self.modulus
    }

    pub fn into_value(self) -> Natural {
        self.value
    }

    /// Same modulus, new value (reduced).
    pub fn with_value(&self, value: impl Into<Natural>) -> Residue {
        Residue {
            value: value.into() % &self.modulus,
            modulus: self.modulus.clone(),
        }
    }

    pub fn mul(&self, other: &Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        self.with_value(&self.value * &other.value)
    }

    pub fn add(&self, other: &Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        self.with_value(&self.value + &other.value)
    }

    pub fn sub(&self, other: &Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        self.with_value(&self.value + &self.modulus - &other.value)
    }

    pub fn is_one(&self) -> bool {
        self.value.is_one()
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

/// `base^exponent` with `base` prime and `exponent >= 1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrimePower {
    #[serde(with = "crate::decimal")]
    pub base: Natural,
    pub exponent: u32,
}

impl PrimePower {
    pub fn value(&self) -> Natural {
        num_traits::pow(self.base.clone(), self.exponent as usize)
    }
}

impl fmt::Display for PrimePower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 1 {
            write!(f, "{}", self.base)
        } else {
            write!(f, "{}^{}", self.base, self.exponent)
        }
    }
}

pub fn gcd(a: &Natural, b: &Natural) -> Result<Natural> {
    if a.is_zero() && b.is_zero() {
        return Err(Error::invalid("gcd(0, 0) is undefined"));
    }
    Ok(a.gcd(b))
}

pub fn lcm(a: &Natural, b: &Natural) -> Result<Natural> {
    if a.is_zero() || b.is_zero() {
        return Err(Error::invalid("lcm needs positive arguments"));
    }
    Ok(a.lcm(b))
}

pub fn mod_pow(base: &Residue, exponent: &Natural) -> Residue {
    Residue {
        value: base.value.modpow(exponent, &base.modulus),
        modulus: base.modulus.clone(),
    }
}

/// Inverse by the extended Euclidean algorithm.
///
/// Fails with [`Error::NotInvertible`] carrying `gcd(a, modulus)`, which is a
/// nontrivial divisor of the modulus whenever it is below it.
pub fn mod_inv(a: &Residue) -> Result<Residue> {
    let m = BigInt::from_biguint(Sign::Plus, a.modulus.clone());
    let x = BigInt::from_biguint(Sign::Plus, a.value.clone());
    let egcd = x.extended_gcd(&m);
    if !egcd.gcd.is_one() {
        return Err(Error::NotInvertible {
            value: a.value.clone(),
            modulus: a.modulus.clone(),
            gcd: egcd.gcd.magnitude().clone(),
        });
    }
    Residue::from_signed(&egcd.x, a.modulus.clone())
}

fn miller_rabin_witness(n: &BigUint, n_minus_1: &BigUint, d: &BigUint, s: u64, a: &BigUint) -> bool {
    // true when `a` proves n composite
    let mut x = a.modpow(d, n);
    if x.is_one() || &x == n_minus_1 {
        return false;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if &x == n_minus_1 {
            return false;
        }
    }
    true
}

/// Miller-Rabin with the fixed witnesses 2..=41, which is exact below
/// 3.3 * 10^24. Larger inputs additionally get `rounds` pseudo-random
/// witnesses drawn from a generator seeded by `n`, so answers are
/// reproducible.
pub fn is_probable_prime(n: &Natural, rounds: u32) -> bool {
    let rounds = rounds.max(1);
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &p in FIXED_WITNESSES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    for &a in FIXED_WITNESSES.iter() {
        if miller_rabin_witness(n, &n_minus_1, &d, s, &BigUint::from(a)) {
            return false;
        }
    }
    if n < &deterministic_limit() {
        return true;
    }
    let seed = n.iter_u64_digits().fold(0x9e37_79b9_7f4a_7c15u64, |h, w| {
        h.rotate_left(17) ^ w.wrapping_mul(0xff51_afd7_ed55_8ccd)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper = &n_minus_1 - 1u32; // witnesses in [2, n-2]
    for _ in 0..rounds {
        let a = random_below(&mut rng, &(&upper - 1u32)) + 2u32;
        if miller_rabin_witness(n, &n_minus_1, &d, s, &a) {
            return false;
        }
    }
    true
}

/// Uniform value in `[0, bound)` for `bound >= 1`.
pub(crate) fn random_below<R: Rng + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    if let Some(b) = bound.to_u64() {
        return BigUint::from(rng.gen_range(0..b.max(1)));
    }
    let bits = bound.bits();
    loop {
        let words = bits.div_ceil(32) as usize;
        let mut digits: Vec<u32> = (0..words).map(|_| rng.gen()).collect();
        let excess = (words as u64) * 32 - bits;
        if let Some(top) = digits.last_mut() {
            *top >>= excess;
        }
        let candidate = BigUint::new(digits);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Returns `(p, k)` with `p` prime and `p^k = n`, or `None` when `n` is not a
/// prime power. Tries every exponent up to `log2 n` with exact integer roots.
pub fn as_prime_power(n: &Natural) -> Result<Option<PrimePower>> {
    if n < &BigUint::from(2u32) {
        return Err(Error::invalid(format!("{n} has no prime-power form")));
    }
    let max_k = n.bits() as u32;
    for k in (2..=max_k).rev() {
        let root = n.nth_root(k);
        if root < BigUint::from(2u32) {
            continue;
        }
        if num_traits::pow(root.clone(), k as usize) == *n {
            // largest k: the root itself is not a perfect power
            return Ok(
                is_probable_prime(&root, DEFAULT_PRIMALITY_ROUNDS).then_some(PrimePower {
                    base: root,
                    exponent: k,
                }),
            );
        }
    }
    Ok(is_probable_prime(n, DEFAULT_PRIMALITY_ROUNDS).then(|| PrimePower {
        base: n.clone(),
        exponent: 1,
    }))
}

/// Sieve of Eratosthenes over `[0, limit]`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

/// The `n` smallest primes, ascending.
pub fn first_primes(n: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    // Rosser: p_n < n (ln n + ln ln n) for n >= 6
    let limit = if n < 6 {
        13
    } else {
        let x = n as f64;
        (x * (x.ln() + x.ln().ln())).ceil() as u64 + 1
    };
    let mut primes = primes_up_to(limit);
    primes.truncate(n);
    primes
}

/// How [`multiplicative_order_with`] finds the order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderStrategy {
    /// Multiply by x until reaching 1. Exact, O(r) multiplications.
    #[default]
    RepeatedMultiplication,
    /// Factor the modulus by trial division up to `bound`, take the
    /// Carmichael exponent and strip prime factors from it.
    GroupExponent { bound: u64 },
}

/// Exact multiplicative order by repeated multiplication.
pub fn multiplicative_order(x: &Residue) -> Result<Natural> {
    multiplicative_order_with(x, OrderStrategy::RepeatedMultiplication)
}

pub fn multiplicative_order_with(x: &Residue, strategy: OrderStrategy) -> Result<Natural> {
    let g = x.value.gcd(&x.modulus);
    if !g.is_one() {
        return Err(Error::NotCoprime {
            value: x.value.clone(),
            modulus: x.modulus.clone(),
            gcd: g,
        });
    }
    match strategy {
        OrderStrategy::RepeatedMultiplication => Ok(order_by_multiplication(x)),
        OrderStrategy::GroupExponent { bound } => order_by_group_exponent(x, bound),
    }
}

fn order_by_multiplication(x: &Residue) -> Natural {
    if let (Some(v), Some(m)) = (x.value.to_u64(), x.modulus.to_u64()) {
        let mut acc = v % m;
        let mut r: u64 = 1;
        while acc != 1 {
            acc = mulmod_u64(acc, v, m);
            r += 1;
        }
        return BigUint::from(r);
    }
    let mut acc = x.value.clone();
    let mut r = BigUint::one();
    while !acc.is_one() {
        acc = (&acc * &x.value) % &x.modulus;
        r += 1u32;
    }
    r
}

fn order_by_group_exponent(x: &Residue, bound: u64) -> Result<Natural> {
    let modulus_factors = factor_completely_by_trial(&x.modulus, bound)?;
    let mut exponent = BigUint::one();
    for (p, k) in &modulus_factors {
        let p_big = BigUint::from(*p);
        let lambda_pk = if *p == 2 {
            match k {
                1 => BigUint::one(),
                2 => BigUint::from(2u32),
                _ => BigUint::one() << (k - 2),
            }
        } else {
            num_traits::pow(p_big.clone(), (*k - 1) as usize) * (&p_big - 1u32)
        };
        exponent = exponent.lcm(&lambda_pk);
    }
    let mut order = exponent.clone();
    for (q, _) in factor_completely_by_trial(&exponent, bound)? {
        let q = BigUint::from(q);
        while (&order % &q).is_zero() && mod_pow(x, &(&order / &q)).is_one() {
            order /= &q;
        }
    }
    Ok(order)
}

/// Result of trial division: the small prime factors found and the cofactor
/// left over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialDivision {
    pub factors: Vec<(u64, u32)>,
    pub cofactor: Natural,
}

/// Strips every prime factor `p <= bound` from `n`.
pub fn trial_division(n: &Natural, bound: u64) -> TrialDivision {
    let mut rest = n.clone();
    let mut factors = Vec::new();
    if rest.is_zero() {
        return TrialDivision {
            factors,
            cofactor: rest,
        };
    }
    let mut p = 2u64;
    while p <= bound {
        let pb = BigUint::from(p);
        if &pb * &pb > rest {
            break;
        }
        let mut k = 0u32;
        while (&rest % &pb).is_zero() {
            rest /= &pb;
            k += 1;
        }
        if k > 0 {
            factors.push((p, k));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    // what is left is 1, prime (if p^2 passed it) or has only factors > bound
    if rest > BigUint::one() {
        if let Some(r) = rest.to_u64() {
            if r <= bound || (p as u128) * (p as u128) > r as u128 {
                factors.push((r, 1));
                rest = BigUint::one();
            }
        }
    }
    merge_factor_list(&mut factors);
    TrialDivision {
        factors,
        cofactor: rest,
    }
}

fn merge_factor_list(factors: &mut Vec<(u64, u32)>) {
    factors.sort_unstable();
    let mut merged: Vec<(u64, u32)> = Vec::with_capacity(factors.len());
    for &(p, k) in factors.iter() {
        match merged.last_mut() {
            Some((q, e)) if *q == p => *e += k,
            _ => merged.push((p, k)),
        }
    }
    *factors = merged;
}

/// Full factorization by trial division, or a capacity error when a cofactor
/// survives the bound.
pub fn factor_completely_by_trial(n: &Natural, bound: u64) -> Result<Vec<(u64, u32)>> {
    let td = trial_division(n, bound);
    if !td.cofactor.is_one() {
        return Err(Error::Capacity(format!(
            "{n} has a cofactor {} with no prime factor <= {bound}",
            td.cofactor
        )));
    }
    Ok(td.factors)
}

// ---- machine-word helpers ----

#[inline]
pub fn mulmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
pub fn addmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

pub fn powmod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod_u64(acc, base, m);
        }
        base = mulmod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

#[inline]
pub fn gcd_u64(a: u64, b: u64) -> u64 {
    num_integer::gcd(a, b)
}

pub fn is_prime_u64(n: u64) -> bool {
    is_probable_prime(&BigUint::from(n), 1)
}

/// Exponent of the prime `t` in `n` for machine words (`n >= 1`).
pub(crate) fn valuation_u64(t: u64, mut n: u64) -> u32 {
    let mut e = 0;
    while n.is_multiple_of(t) {
        n /= t;
        e += 1;
    }
    e
}
