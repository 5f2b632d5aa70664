//! Iterated maps modulo N: the quadratic family `a x^2 + b x + (b^2 - 2b)/(4a)`,
//! the linear family `a x`, their closed forms, and tail/cycle analysis.
//!
//! Cycle analysis comes in three flavours:
//! - [`cycle_shape_bruteforce`] records first-visit indices (test oracle),
//! - [`floyd_meet`] is the constant-memory tortoise and hare,
//! - [`OrbitTable`] solves the whole functional graph of a map on `Z/mZ` at
//!   once, which is what the exhaustive sweeps use.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::Hash;

use crate::arith::{self, mod_inv, mod_pow, Natural, Residue};
use crate::error::{Error, Result};

/// Tail length `mu` and cycle length `lambda` of an eventually periodic
/// sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleShape {
    pub mu: u64,
    pub lambda: u64,
}

impl CycleShape {
    /// Smallest `i >= 1` with `x_i = x_{2i}`: the least positive multiple of
    /// `lambda` that is at least `mu`.
    pub fn first_meeting_index(&self) -> u64 {
        let laps = self.mu.div_ceil(self.lambda).max(1);
        laps * self.lambda
    }
}

/// Integer polynomial reduced modulo `modulus`, coefficients in ascending
/// degree. Reduction modulo any divisor of the modulus commutes with
/// evaluation, which is what makes shadow sequences meaningful.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    #[serde(with = "crate::decimal::vec")]
    coeffs: Vec<Natural>,
    #[serde(with = "crate::decimal")]
    modulus: Natural,
}

impl Polynomial {
    pub fn new(coeffs: Vec<Natural>, modulus: Natural) -> Result<Self> {
        if modulus < BigUint::from(2u32) {
            return Err(Error::invalid("polynomial modulus must be at least 2"));
        }
        if coeffs.is_empty() {
            return Err(Error::invalid("polynomial needs at least one coefficient"));
        }
        let coeffs = coeffs.into_iter().map(|c| c % &modulus).collect();
        Ok(Polynomial { coeffs, modulus })
    }

    /// `x^exponent + constant`, the classical rho step. Negative constants are
    /// reduced into `[0, modulus)`.
    pub fn raw(exponent: u32, constant: &BigInt, modulus: Natural) -> Result<Self> {
        if exponent == 0 {
            return Err(Error::invalid("exponent must be at least 1"));
        }
        let c = Residue::from_signed(constant, modulus.clone())?;
        let mut coeffs = vec![BigUint::zero(); exponent as usize + 1];
        coeffs[0] = c.into_value();
        coeffs[exponent as usize] = BigUint::one();
        Polynomial::new(coeffs, modulus)
    }

    pub fn modulus(&self) -> &Natural {
        &self.modulus
    }

    pub fn coefficients(&self) -> &[Natural] {
        &self.coeffs
    }

    pub fn eval(&self, x: &Natural) -> Natural {
        horner(&self.coeffs, x, &self.modulus)
    }

    /// The same polynomial over `Z/dZ` for a divisor `d` of the modulus.
    pub fn reduce(&self, divisor: &Natural) -> Result<Polynomial> {
        if divisor.is_zero() || !(&self.modulus % divisor).is_zero() {
            return Err(Error::invalid(format!(
                "{divisor} does not divide the modulus {}",
                self.modulus
            )));
        }
        if divisor.is_one() {
            return Err(Error::invalid("cannot reduce modulo 1"));
        }
        Polynomial::new(self.coeffs.clone(), divisor.clone())
    }

    /// Machine-word copy for hot loops; `None` if the modulus needs more than
    /// 63 bits.
    pub fn to_word(&self) -> Option<WordPolynomial> {
        let modulus = self.modulus.to_u64().filter(|m| *m < (1 << 63))?;
        let coeffs = self.coeffs.iter().map(|c| c.to_u64().unwrap()).collect();
        Some(WordPolynomial { coeffs, modulus })
    }
}

fn horner(coeffs: &[Natural], x: &Natural, modulus: &Natural) -> Natural {
    let x = x % modulus;
    let mut acc = BigUint::zero();
    for c in coeffs.iter().rev() {
        acc = (acc * &x + c) % modulus;
    }
    acc
}

/// [`Polynomial`] over machine words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordPolynomial {
    pub coeffs: Vec<u64>,
    pub modulus: u64,
}

impl WordPolynomial {
    /// `x^2 + c mod m`.
    pub fn square_plus(c: u64, modulus: u64) -> Self {
        WordPolynomial {
            coeffs: vec![c % modulus, 0, 1 % modulus],
            modulus,
        }
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        self.eval_mod(x, self.modulus)
    }

    /// Evaluate modulo a divisor of the polynomial's modulus.
    #[inline]
    pub fn eval_mod(&self, x: u64, m: u64) -> u64 {
        let x = x % m;
        let mut acc = 0u64;
        if m <= u32::MAX as u64 {
            for &c in self.coeffs.iter().rev() {
                acc = (acc * x + c % m) % m;
            }
            return acc;
        }
        for &c in self.coeffs.iter().rev() {
            acc = ((acc as u128 * x as u128 + (c % m) as u128) % m as u128) as u64;
        }
        acc
    }
}

/// The quadratic family `f(x) = a x^2 + b x + (b^2 - 2b)(4a)^{-1} mod N`.
///
/// Construction requires N odd, `N >= 3`, N not a prime power and
/// `gcd(a, N) = 1`, so that `2^{-1}`, `(2a)^{-1}` and `(4a)^{-1}` exist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticFamily {
    #[serde(with = "crate::decimal")]
    a: Natural,
    #[serde(with = "crate::decimal")]
    b: Natural,
    #[serde(with = "crate::decimal")]
    modulus: Natural,
    #[serde(with = "crate::decimal")]
    constant: Natural,
    #[serde(with = "crate::decimal")]
    inv_two: Natural,
    #[serde(with = "crate::decimal")]
    inv_two_a: Natural,
}

impl QuadraticFamily {
    pub fn new(a: impl Into<Natural>, b: impl Into<Natural>, modulus: impl Into<Natural>) -> Result<Self> {
        let modulus: Natural = modulus.into();
        if modulus < BigUint::from(3u32) || modulus.is_even() {
            return Err(Error::invalid(format!("modulus {modulus} must be odd and at least 3")));
        }
        if arith::as_prime_power(&modulus)?.is_some() {
            return Err(Error::invalid(format!("modulus {modulus} is a prime power")));
        }
        let a = a.into() % &modulus;
        let b = b.into() % &modulus;
        let two_a = Residue::new(&a * 2u32, modulus.clone())?;
        let inv_two_a = mod_inv(&two_a).map_err(|e| match e {
            Error::NotInvertible { gcd, .. } => Error::NotCoprime {
                value: a.clone(),
                modulus: modulus.clone(),
                gcd,
            },
            other => other,
        })?;
        let inv_two = mod_inv(&Residue::new(2u32, modulus.clone())?)?;
        let inv_four_a = inv_two_a.mul(&inv_two);
        // b^2 - 2b = b (b - 2), kept non-negative by adding the modulus
        let b_times_b_minus_2 = (&b * (&b + &modulus - 2u32)) % &modulus;
        let constant = (b_times_b_minus_2 * inv_four_a.value()) % &modulus;
        Ok(QuadraticFamily {
            a,
            b,
            modulus,
            constant,
            inv_two: inv_two.into_value(),
            inv_two_a: inv_two_a.into_value(),
        })
    }

    pub fn a(&self) -> &Natural {
        &self.a
    }

    pub fn b(&self) -> &Natural {
        &self.b
    }

    pub fn modulus(&self) -> &Natural {
        &self.modulus
    }

    /// The constant term `(b^2 - 2b)(4a)^{-1} mod N`.
    pub fn constant(&self) -> &Natural {
        &self.constant
    }

    /// One application of the map.
    pub fn iterate(&self, x: &Natural) -> Natural {
        let x = x % &self.modulus;
        (&self.a * &x * &x + &self.b * &x + &self.constant) % &self.modulus
    }

    /// `alpha = (2a x0 + b) 2^{-1} mod N`, the base of the closed form.
    pub fn alpha(&self, x0: &Natural) -> Natural {
        ((&self.a * 2u32 * x0 + &self.b) * &self.inv_two) % &self.modulus
    }

    pub(crate) fn inv_two_a(&self) -> &Natural {
        &self.inv_two_a
    }

    /// The map as an integer polynomial `[c, b, a]`.
    pub fn polynomial(&self) -> Polynomial {
        Polynomial::new(
            vec![self.constant.clone(), self.b.clone(), self.a.clone()],
            self.modulus.clone(),
        )
        .expect("family modulus is at least 3")
    }
}

/// One step of `x^e + c mod N`.
pub fn iterate_raw_polynomial(exponent: u32, constant: &BigInt, modulus: &Natural, x: &Natural) -> Result<Natural> {
    Ok(Polynomial::raw(exponent, constant, modulus.clone())?.eval(x))
}

/// A quadratic family together with a start value and the order of its
/// closed-form base, enough to jump to any index in `O(log i + log r)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedFormContext {
    family: QuadraticFamily,
    #[serde(with = "crate::decimal")]
    x0: Natural,
    #[serde(with = "crate::decimal")]
    alpha: Natural,
    #[serde(with = "crate::decimal")]
    order: Natural,
}

impl ClosedFormContext {
    /// `order` must satisfy `alpha^order = 1`; the exact order or any multiple
    /// of it is accepted.
    pub fn new(family: QuadraticFamily, x0: impl Into<Natural>, order: Natural) -> Result<Self> {
        let x0 = x0.into() % family.modulus();
        let alpha = family.alpha(&x0);
        let g = alpha.gcd(family.modulus());
        if !g.is_one() {
            return Err(Error::NotCoprime {
                value: alpha,
                modulus: family.modulus().clone(),
                gcd: g,
            });
        }
        if order.is_zero() || !alpha.modpow(&order, family.modulus()).is_one() {
            return Err(Error::invalid(format!(
                "{alpha}^{order} is not 1 modulo {}",
                family.modulus()
            )));
        }
        Ok(ClosedFormContext {
            family,
            x0,
            alpha,
            order,
        })
    }

    /// Computes `ord(alpha, N)` by repeated multiplication.
    pub fn with_exact_order(family: QuadraticFamily, x0: impl Into<Natural>) -> Result<Self> {
        let x0 = x0.into() % family.modulus();
        let alpha = Residue::new(family.alpha(&x0), family.modulus().clone())?;
        let order = arith::multiplicative_order(&alpha)?;
        ClosedFormContext::new(family, x0, order)
    }

    pub fn family(&self) -> &QuadraticFamily {
        &self.family
    }

    pub fn x0(&self) -> &Natural {
        &self.x0
    }

    pub fn alpha(&self) -> &Natural {
        &self.alpha
    }

    pub fn order(&self) -> &Natural {
        &self.order
    }

    /// The `i`-th iterate `f^i(x0) = (2 alpha^gamma - b)(2a)^{-1} mod N` with
    /// `gamma = 2^i mod r`.
    pub fn term(&self, i: &Natural) -> Natural {
        let n = self.family.modulus();
        let gamma = BigUint::from(2u32).modpow(i, &self.order);
        let power = self.alpha.modpow(&gamma, n);
        let numerator = (power * 2u32 + n - self.family.b()) % n;
        (numerator * self.family.inv_two_a()) % n
    }
}

/// Free-function form of [`ClosedFormContext::term`].
pub fn closed_form_g(ctx: &ClosedFormContext, i: &Natural) -> Natural {
    ctx.term(i)
}

/// The linear family `f(x) = a x mod N` started at 1, closed form `a^i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearFamily {
    #[serde(with = "crate::decimal")]
    a: Natural,
    #[serde(with = "crate::decimal")]
    modulus: Natural,
}

impl LinearFamily {
    pub fn new(a: impl Into<Natural>, modulus: impl Into<Natural>) -> Result<Self> {
        let a = a.into();
        let modulus = modulus.into();
        if a <= BigUint::one() || a >= modulus {
            return Err(Error::invalid(format!("need 1 < a < N, got a = {a}, N = {modulus}")));
        }
        let g = a.gcd(&modulus);
        if !g.is_one() {
            return Err(Error::NotCoprime {
                value: a,
                modulus,
                gcd: g,
            });
        }
        Ok(LinearFamily { a, modulus })
    }

    pub fn a(&self) -> &Natural {
        &self.a
    }

    pub fn modulus(&self) -> &Natural {
        &self.modulus
    }

    pub fn iterate(&self, x: &Natural) -> Natural {
        (x * &self.a) % &self.modulus
    }

    pub fn term(&self, i: &Natural) -> Natural {
        mod_pow(&Residue::new(self.a.clone(), self.modulus.clone()).unwrap(), i).into_value()
    }
}

pub fn closed_form_linear(family: &LinearFamily, i: &Natural) -> Natural {
    family.term(i)
}

/// Exact `(mu, lambda)` by remembering the first index at which every value
/// was seen. Memory grows with `mu + lambda`.
pub fn cycle_shape_bruteforce<T, F>(mut step: F, x0: T) -> CycleShape
where
    T: Clone + Eq + Hash,
    F: FnMut(&T) -> T,
{
    let mut seen: HashMap<T, u64> = HashMap::new();
    let mut x = x0;
    let mut i = 0u64;
    loop {
        if let Some(&first) = seen.get(&x) {
            return CycleShape {
                mu: first,
                lambda: i - first,
            };
        }
        let next = step(&x);
        seen.insert(x, i);
        x = next;
        i += 1;
    }
}

/// Floyd's tortoise and hare. Returns the smallest `i >= 1` with
/// `x_i = x_{2i}`; such an `i` is always `>= mu` and a multiple of `lambda`.
pub fn floyd_meet<T, F>(mut step: F, x0: T) -> u64
where
    T: PartialEq,
    F: FnMut(&T) -> T,
{
    let mut tortoise = step(&x0);
    let mut hare = step(&tortoise);
    let mut i = 1u64;
    while tortoise != hare {
        tortoise = step(&tortoise);
        let h = step(&hare);
        hare = step(&h);
        i += 1;
    }
    i
}

/// Shape of the shadow sequence obtained by reducing every term modulo a
/// divisor `divisor` of the polynomial's modulus.
pub fn reduced_cycle_shape(poly: &Polynomial, x0: &Natural, divisor: &Natural) -> Result<CycleShape> {
    let reduced = poly.reduce(divisor)?;
    let start = x0 % divisor;
    Ok(match reduced.to_word() {
        Some(w) => cycle_shape_bruteforce(|x: &u64| w.eval(*x), start.to_u64().unwrap()),
        None => cycle_shape_bruteforce(|x: &Natural| reduced.eval(x), start),
    })
}

const UNSEEN: u32 = u32::MAX;

/// Tail length, cycle length and cycle membership for every start value of a
/// map on `{0, .., m-1}`, computed in `O(m)` time.
#[derive(Clone, Debug)]
pub struct OrbitTable {
    modulus: u64,
    tail: Vec<u32>,
    cycle_of: Vec<u32>,
    /// position within its cycle, for cycle members
    position: Vec<u32>,
    cycles: Vec<Vec<u64>>,
}

impl OrbitTable {
    /// `step` must map `[0, m)` into itself.
    pub fn build(modulus: u64, step: impl Fn(u64) -> u64) -> Self {
        assert!(
            modulus >= 1 && modulus < u32::MAX as u64,
            "orbit tables are for desk-scale moduli"
        );
        let m = modulus as usize;
        let next: Vec<u32> = (0..modulus).map(|x| step(x) as u32).collect();
        let mut tail = vec![UNSEEN; m];
        let mut cycle_of = vec![UNSEEN; m];
        let mut position = vec![UNSEEN; m];
        let mut on_path = vec![UNSEEN; m];
        let mut cycles: Vec<Vec<u64>> = Vec::new();
        let mut path: Vec<u32> = Vec::new();

        for start in 0..m {
            if tail[start] != UNSEEN {
                continue;
            }
            path.clear();
            let mut x = start as u32;
            while tail[x as usize] == UNSEEN && on_path[x as usize] == UNSEEN {
                on_path[x as usize] = path.len() as u32;
                path.push(x);
                x = next[x as usize];
            }
            let mut resolved = path.len();
            if tail[x as usize] == UNSEEN {
                // closed a new cycle at path[k..]
                let k = on_path[x as usize] as usize;
                let id = cycles.len() as u32;
                let members: Vec<u64> = path[k..].iter().map(|&v| v as u64).collect();
                for (pos, &v) in path[k..].iter().enumerate() {
                    tail[v as usize] = 0;
                    cycle_of[v as usize] = id;
                    position[v as usize] = pos as u32;
                }
                cycles.push(members);
                resolved = k;
            }
            for &v in path[..resolved].iter().rev() {
                let succ = next[v as usize] as usize;
                tail[v as usize] = tail[succ] + 1;
                cycle_of[v as usize] = cycle_of[succ];
            }
            for &v in &path {
                on_path[v as usize] = UNSEEN;
            }
        }
        OrbitTable {
            modulus,
            tail,
            cycle_of,
            position,
            cycles,
        }
    }

    /// Table for `x -> x^2 + c mod m`.
    pub fn square_plus(c: u64, modulus: u64) -> Self {
        let w = WordPolynomial::square_plus(c, modulus);
        Self::build(modulus, |x| w.eval(x))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn shape(&self, x0: u64) -> CycleShape {
        let x = x0 as usize;
        CycleShape {
            mu: self.tail[x] as u64,
            lambda: self.cycles[self.cycle_of[x] as usize].len() as u64,
        }
    }

    pub fn cycle_id(&self, x0: u64) -> usize {
        self.cycle_of[x0 as usize] as usize
    }

    /// Members of a cycle in iteration order.
    pub fn cycle(&self, id: usize) -> &[u64] {
        &self.cycles[id]
    }

    pub fn cycles(&self) -> &[Vec<u64>] {
        &self.cycles
    }

    /// Position of a cycle member inside [`OrbitTable::cycle`].
    pub fn position(&self, member: u64) -> Option<usize> {
        let p = self.position[member as usize];
        (p != UNSEEN).then_some(p as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::gcd_u64;
    use proptest::prelude::*;

    fn n(v: u64) -> Natural {
        BigUint::from(v)
    }

    fn sequence(poly: &WordPolynomial, x0: u64, len: usize) -> Vec<u64> {
        std::iter::successors(Some(x0), |x| Some(poly.eval(*x)))
            .take(len)
            .collect()
    }

    #[test]
    fn quadratic_iteration_examples() {
        let f = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        assert_eq!(f.iterate(&n(2)), n(8));
        assert_eq!(f.iterate(&n(0)), n(0));
        let g = QuadraticFamily::new(1u32, 2u32, 62615533u32).unwrap();
        assert_eq!(g.iterate(&n(3)), n(15));
        assert_eq!(g.constant(), &n(0));
    }

    #[test]
    fn quadratic_family_rejects_bad_moduli() {
        assert!(QuadraticFamily::new(1u32, 2u32, 144u32).is_err());
        assert!(QuadraticFamily::new(1u32, 2u32, 343u32).is_err());
        assert!(QuadraticFamily::new(1u32, 2u32, 13u32).is_err());
        match QuadraticFamily::new(11u32, 2u32, 143u32) {
            Err(Error::NotCoprime { gcd, .. }) => assert_eq!(gcd, n(11)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_polynomial_examples() {
        let m = n(3127);
        assert_eq!(iterate_raw_polynomial(2, &BigInt::from(8), &m, &n(2)).unwrap(), n(12));
        assert_eq!(iterate_raw_polynomial(2, &BigInt::from(-2), &m, &n(2)).unwrap(), n(2));
        assert_eq!(
            iterate_raw_polynomial(1, &BigInt::from(0), &m, &n(1234)).unwrap(),
            n(1234)
        );
        assert!(iterate_raw_polynomial(0, &BigInt::from(0), &m, &n(1)).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let f = QuadraticFamily::new(1u32, 2u32, 62615533u32).unwrap();
        let ctx = ClosedFormContext::with_exact_order(f, 3u32).unwrap();
        assert_eq!(ctx.alpha(), &n(4));
        assert_eq!(ctx.order(), &n(15649927));
        assert_eq!(closed_form_g(&ctx, &n(62615533)), n(10689696));
        assert_eq!(closed_form_g(&ctx, &n(0)), n(3));

        let f = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        let ctx = ClosedFormContext::with_exact_order(f, 2u32).unwrap();
        assert_eq!(ctx.order(), &n(15));
        assert_eq!(closed_form_g(&ctx, &n(143)), n(125));
    }

    #[test]
    fn closed_form_accepts_multiples_of_the_order() {
        let f = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        let exact = ClosedFormContext::new(f.clone(), 2u32, n(15)).unwrap();
        let multiple = ClosedFormContext::new(f.clone(), 2u32, n(120)).unwrap();
        for i in 0..100u64 {
            assert_eq!(exact.term(&n(i)), multiple.term(&n(i)));
        }
        assert!(ClosedFormContext::new(f.clone(), 2u32, n(7)).is_err());
        // alpha = 2*10/2 + 1 = 11 shares 11 with 143
        match ClosedFormContext::new(f, 10u32, n(15)) {
            Err(Error::NotCoprime { gcd, .. }) => assert_eq!(gcd, n(11)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_closed_form_examples() {
        let f = LinearFamily::new(3u32, 209u32).unwrap();
        assert_eq!(closed_form_linear(&f, &n(45)), n(56));
        assert_eq!(closed_form_linear(&f, &n(0)), n(1));
        let g = LinearFamily::new(3u32, 62615533u32).unwrap();
        assert_eq!(closed_form_linear(&g, &n(422971)), n(48604330));
        assert!(LinearFamily::new(1u32, 209u32).is_err());
        assert!(LinearFamily::new(11u32, 209u32).is_err());
    }

    #[test]
    fn bruteforce_shapes() {
        let mod53 = WordPolynomial::square_plus(8, 53);
        assert_eq!(cycle_shape_bruteforce(|x: &u64| mod53.eval(*x), 2).lambda, 4);
        let mod3127 = WordPolynomial::square_plus(8, 3127);
        let shape = cycle_shape_bruteforce(|x: &u64| mod3127.eval(*x), 2);
        assert!(shape.mu <= 8, "pair (8, 12) must lie in the cycle");
        assert_eq!(shape, CycleShape { mu: 8, lambda: 12 });
        assert_eq!(
            cycle_shape_bruteforce(|x: &u64| *x, 77),
            CycleShape { mu: 0, lambda: 1 }
        );
    }

    #[test]
    fn floyd_examples() {
        let mod53 = WordPolynomial::square_plus(8, 53);
        let shape = cycle_shape_bruteforce(|x: &u64| mod53.eval(*x), 2);
        let i = floyd_meet(|x: &u64| mod53.eval(*x), 2);
        assert!(i > 0 && i % 4 == 0 && i >= shape.mu);
        assert_eq!(floyd_meet(|_: &u64| 5, 1), 1);

        let mod3127 = WordPolynomial::square_plus(8, 3127);
        let i = floyd_meet(|x: &u64| mod3127.eval(*x), 2) as usize;
        let seq = sequence(&mod3127, 2, 2 * i + 1);
        assert_eq!(seq[i], seq[2 * i]);
    }

    #[test]
    fn reduced_shapes() {
        let p = Polynomial::raw(2, &BigInt::from(8), n(3127)).unwrap();
        assert_eq!(reduced_cycle_shape(&p, &n(2), &n(53)).unwrap().lambda, 4);
        let full = reduced_cycle_shape(&p, &n(2), &n(3127)).unwrap();
        let direct = cycle_shape_bruteforce(|x: &Natural| p.eval(x), n(2));
        assert_eq!(full, direct);
        assert!(reduced_cycle_shape(&p, &n(2), &n(7)).is_err());

        let q = Polynomial::raw(2, &BigInt::from(8), n(3551)).unwrap();
        let l53 = reduced_cycle_shape(&q, &n(38), &n(53)).unwrap().lambda;
        let l67 = reduced_cycle_shape(&q, &n(38), &n(67)).unwrap().lambda;
        let l = reduced_cycle_shape(&q, &n(38), &n(3551)).unwrap().lambda;
        assert_eq!((l53, l67, l), (4, 4, 4));
    }

    #[test]
    fn orbit_table_matches_bruteforce() {
        for m in 1..300u64 {
            for c in 0..4 {
                let w = WordPolynomial::square_plus(c, m);
                let table = OrbitTable::build(m, |x| w.eval(x));
                for x0 in 0..m {
                    let shape = cycle_shape_bruteforce(|x: &u64| w.eval(*x), x0);
                    assert_eq!(table.shape(x0), shape, "m={m} c={c} x0={x0}");
                }
                for cycle in table.cycles() {
                    for (k, &v) in cycle.iter().enumerate() {
                        assert_eq!(w.eval(v), cycle[(k + 1) % cycle.len()]);
                        assert_eq!(table.position(v), Some(k));
                    }
                }
            }
        }
    }

    #[test]
    fn quadratic_step_matches_completed_square() {
        // f(x) = ((2a x + b)^2 - 2b) (4a)^{-1}
        for modulus in [15u64, 21, 35, 143, 3127] {
            for a in 1..20u64 {
                if gcd_u64(a, modulus) != 1 {
                    continue;
                }
                for b in 0..12u64 {
                    let f = QuadraticFamily::new(a, b, modulus).unwrap();
                    let inv4a = mod_inv(&Residue::new(4 * a, modulus).unwrap()).unwrap();
                    for x in 0..modulus.min(60) {
                        let s = (2 * a * x + b) % modulus;
                        let num = (s * s + 2 * modulus - 2 * b % modulus) % modulus;
                        let expected = n(num) * inv4a.value() % n(modulus);
                        assert_eq!(f.iterate(&n(x)), expected);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_iteration(
            p_idx in 1usize..25, q_idx in 1usize..25, a in 1u64..500, b in 0u64..500, x0 in 0u64..10_000
        ) {
            let primes = crate::arith::first_primes(26);
            prop_assume!(p_idx != q_idx);
            let modulus = primes[p_idx] * primes[q_idx];
            prop_assume!(gcd_u64(a, modulus) == 1);
            let f = QuadraticFamily::new(a, b, modulus).unwrap();
            let ctx = match ClosedFormContext::with_exact_order(f.clone(), x0) {
                Ok(ctx) => ctx,
                Err(_) => return Ok(()),
            };
            let mut x = n(x0 % modulus);
            for i in 0..120u64 {
                prop_assert_eq!(ctx.term(&n(i)), x.clone());
                x = f.iterate(&x);
            }
        }

        #[test]
        fn shadow_collisions_persist(p_idx in 0usize..20, q_idx in 0usize..20, c in 0u64..30, x0 in 0u64..5000) {
            let primes = crate::arith::first_primes(20);
            prop_assume!(p_idx != q_idx);
            let (p, q) = (primes[p_idx], primes[q_idx]);
            let w = WordPolynomial::square_plus(c, p * q);
            let shape = cycle_shape_bruteforce(|x: &u64| w.eval(*x), x0 % (p * q));
            let len = (shape.mu + 3 * shape.lambda) as usize + 1;
            let seq = sequence(&w, x0 % (p * q), len);
            let horizon = (shape.mu + shape.lambda) as usize;
            for i in 0..horizon {
                for j in i + 1..horizon {
                    if seq[i] % p == seq[j] % p {
                        for delta in 0..=(2 * shape.lambda as usize) {
                            if j + delta < seq.len() {
                                prop_assert_eq!(seq[i + delta] % p, seq[j + delta] % p);
                            }
                        }
                    }
                }
            }
        }
    }
}
