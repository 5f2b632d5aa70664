//! Collision classification, distinguishing primes, and the constructive
//! characterization of nontrivial collisions.
//!
//! For `N = A B` with `gcd(A, B) = 1`, an iterated polynomial map has cycle
//! length `lambda = lcm(lambda_A, lambda_B)` modulo N. A nontrivial collision
//! exists exactly when `lambda_A != lambda_B`; then for a distinguishing prime
//! `t` of the two cycle lengths, `m = lambda / t` is a multiple of one of them
//! but not the other, and `gcd(f^m(x) - x, N)` is a proper divisor of N for
//! every `x` on the cycle.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::arith::{self, gcd_u64, valuation_u64, Natural};
use crate::error::{Error, Result};
use crate::sequences::{cycle_shape_bruteforce, Polynomial};

/// Default trial-division bound for factoring cycle lengths.
pub const DEFAULT_FACTOR_BOUND: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionKind {
    /// gcd is 1.
    NotCollision,
    /// gcd is N.
    Trivial,
    /// gcd strictly between 1 and N.
    Nontrivial,
}

/// The gcd of a difference of two sequence terms with N, and what it means.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Classification {
    #[serde(with = "crate::decimal")]
    pub gcd: Natural,
    pub kind: CollisionKind,
}

/// Classify the pair `(n_i, n_j)` relative to N using `gcd(|n_i - n_j|, N)`.
/// Inputs need not be reduced.
pub fn classify(n_i: &Natural, n_j: &Natural, modulus: &Natural) -> Classification {
    let diff = if n_i >= n_j { n_i - n_j } else { n_j - n_i };
    let gcd = diff.gcd(modulus);
    let kind = if &gcd == modulus {
        CollisionKind::Trivial
    } else if gcd.is_one() {
        CollisionKind::NotCollision
    } else {
        CollisionKind::Nontrivial
    };
    Classification { gcd, kind }
}

#[inline]
pub fn classify_u64(n_i: u64, n_j: u64, modulus: u64) -> CollisionKind {
    let g = gcd_u64(n_i.abs_diff(n_j), modulus);
    if g == modulus {
        CollisionKind::Trivial
    } else if g == 1 {
        CollisionKind::NotCollision
    } else {
        CollisionKind::Nontrivial
    }
}

/// An index pair of a sequence together with its classification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionWitness {
    #[serde(with = "crate::decimal")]
    pub i: Natural,
    #[serde(with = "crate::decimal")]
    pub j: Natural,
    #[serde(with = "crate::decimal")]
    pub n_i: Natural,
    #[serde(with = "crate::decimal")]
    pub n_j: Natural,
    #[serde(with = "crate::decimal")]
    pub gcd: Natural,
    pub kind: CollisionKind,
}

impl CollisionWitness {
    pub fn new(i: impl Into<Natural>, j: impl Into<Natural>, n_i: Natural, n_j: Natural, modulus: &Natural) -> Self {
        let Classification { gcd, kind } = classify(&n_i, &n_j, modulus);
        CollisionWitness {
            i: i.into(),
            j: j.into(),
            n_i,
            n_j,
            gcd,
            kind,
        }
    }

    pub fn is_nontrivial(&self) -> bool {
        self.kind == CollisionKind::Nontrivial
    }
}

/// Largest `e` with `t^e | n`.
pub fn prime_exponent(t: u64, n: u64) -> Result<u32> {
    if n == 0 {
        return Err(Error::invalid("prime_exponent of 0 is unbounded"));
    }
    if !arith::is_prime_u64(t) {
        return Err(Error::invalid(format!("{t} is not prime")));
    }
    Ok(valuation_u64(t, n))
}

/// A prime whose exponent differs between two numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistinguishingPrime {
    pub t: u64,
    pub e_a: u32,
    pub e_b: u32,
}

pub fn distinguishing_primes(lambda_a: u64, lambda_b: u64) -> Result<Vec<DistinguishingPrime>> {
    distinguishing_primes_with_bound(lambda_a, lambda_b, DEFAULT_FACTOR_BOUND)
}

/// All primes with differing exponents in `lambda_a` and `lambda_b`,
/// ascending. Both numbers are factored by trial division up to `bound`.
pub fn distinguishing_primes_with_bound(lambda_a: u64, lambda_b: u64, bound: u64) -> Result<Vec<DistinguishingPrime>> {
    if lambda_a == 0 || lambda_b == 0 {
        return Err(Error::invalid("cycle lengths must be positive"));
    }
    if lambda_a == lambda_b {
        return Ok(Vec::new());
    }
    let l = num_integer::lcm(lambda_a, lambda_b);
    let primes = arith::factor_completely_by_trial(&BigUint::from(l), bound)?;
    Ok(primes
        .into_iter()
        .filter_map(|(t, _)| {
            let (e_a, e_b) = (valuation_u64(t, lambda_a), valuation_u64(t, lambda_b));
            (e_a != e_b).then_some(DistinguishingPrime { t, e_a, e_b })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    A,
    B,
}

/// `m = lcm(lambda_a, lambda_b) / t` together with the prime used and the
/// cycle length it is a multiple of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WitnessOffset {
    pub m: u64,
    pub t: u64,
    pub multiple_of: Side,
}

/// Builds the offset `m` from the smallest distinguishing prime whose
/// exponent is lower on the A side; if every distinguishing prime leans the
/// other way, the smallest one is used with the sides swapped. `None` iff the
/// two cycle lengths are equal.
pub fn construct_m(lambda_a: u64, lambda_b: u64) -> Result<Option<WitnessOffset>> {
    let primes = distinguishing_primes(lambda_a, lambda_b)?;
    let chosen = primes.iter().find(|p| p.e_a < p.e_b).or_else(|| primes.first());
    Ok(chosen.map(|p| {
        let lambda = num_integer::lcm(lambda_a, lambda_b);
        WitnessOffset {
            m: lambda / p.t,
            t: p.t,
            multiple_of: if p.e_a < p.e_b { Side::A } else { Side::B },
        }
    }))
}

/// Everything [`verify_characterization`] learned about one sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub mu: u64,
    pub lambda: u64,
    pub mu_a: u64,
    pub lambda_a: u64,
    pub mu_b: u64,
    pub lambda_b: u64,
    pub lcm_holds: bool,
    pub distinguishing: Vec<DistinguishingPrime>,
    pub offset: Option<WitnessOffset>,
    /// `(mu, mu + m)` with its gcd, when `m` exists.
    pub witness: Option<CollisionWitness>,
    /// Whether some in-cycle pair `(mu, mu + k)`, `0 < k < lambda`, is
    /// nontrivial, found by direct search.
    pub nontrivial_pair_exists: bool,
    /// Cycle members `x` for which `gcd(f^m(x) - x, N)` was not a proper
    /// divisor. Empty when the characterization holds.
    pub counterexamples: Vec<u64>,
}

/// Brute-force check of the characterization for one polynomial and start
/// value, splitting `N = A B`.
pub fn verify_characterization(
    poly: &Polynomial,
    x0: &Natural,
    a: &Natural,
    b: &Natural,
) -> Result<CharacterizationReport> {
    let modulus = a * b;
    if poly.modulus() != &modulus {
        return Err(Error::invalid(format!(
            "{a} * {b} does not match the polynomial modulus {}",
            poly.modulus()
        )));
    }
    if a <= &BigUint::one() || b <= &BigUint::one() {
        return Err(Error::invalid("both factors must exceed 1"));
    }
    if !a.gcd(b).is_one() {
        return Err(Error::invalid(format!("{a} and {b} are not coprime")));
    }
    let word = poly
        .to_word()
        .ok_or_else(|| Error::Capacity(format!("{modulus} is too large for brute-force analysis")))?;
    let (a, b) = (a.to_u64().unwrap(), b.to_u64().unwrap());
    let n = word.modulus;
    let x0 = (x0 % &modulus).to_u64().unwrap();

    let shape = cycle_shape_bruteforce(|x: &u64| word.eval(*x), x0);
    let shape_a = cycle_shape_bruteforce(|x: &u64| word.eval_mod(*x, a), x0 % a);
    let shape_b = cycle_shape_bruteforce(|x: &u64| word.eval_mod(*x, b), x0 % b);

    // the cycle, starting at x_mu
    let mut entry = x0;
    for _ in 0..shape.mu {
        entry = word.eval(entry);
    }
    let mut cycle = Vec::with_capacity(shape.lambda as usize);
    let mut x = entry;
    for _ in 0..shape.lambda {
        cycle.push(x);
        x = word.eval(x);
    }

    let nontrivial_pair_exists = cycle[1..]
        .iter()
        .any(|&y| classify_u64(entry, y, n) == CollisionKind::Nontrivial);

    let distinguishing = distinguishing_primes(shape_a.lambda, shape_b.lambda)?;
    let offset = construct_m(shape_a.lambda, shape_b.lambda)?;
    let mut witness = None;
    let mut counterexamples = Vec::new();
    if let Some(off) = offset {
        let len = cycle.len();
        let shift = (off.m % len as u64) as usize;
        for (k, &x) in cycle.iter().enumerate() {
            let image = cycle[(k + shift) % len];
            if classify_u64(image, x, n) != CollisionKind::Nontrivial {
                counterexamples.push(x);
            }
        }
        witness = Some(CollisionWitness::new(
            shape.mu,
            shape.mu + off.m,
            BigUint::from(entry),
            BigUint::from(cycle[shift % len]),
            &modulus,
        ));
    }
    Ok(CharacterizationReport {
        mu: shape.mu,
        lambda: shape.lambda,
        mu_a: shape_a.mu,
        lambda_a: shape_a.lambda,
        mu_b: shape_b.mu,
        lambda_b: shape_b.lambda,
        lcm_holds: shape.lambda == num_integer::lcm(shape_a.lambda, shape_b.lambda),
        distinguishing,
        offset,
        witness,
        nontrivial_pair_exists,
        counterexamples,
    })
}

/// Convenience used by reports: is `m` a multiple of exactly one of the two.
pub fn divides_exactly_one(m: u64, lambda_a: u64, lambda_b: u64) -> bool {
    m.is_multiple_of(lambda_a) != m.is_multiple_of(lambda_b)
}
