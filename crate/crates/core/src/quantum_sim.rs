//! Amplitude-exact simulation of the period-finding circuit.
//!
//! Three registers are tracked per basis state: the addend (n bits, holding
//! the index shift), the counter (ℓ bits plus an overflow guard bit) and the
//! target (n bits). The circuit is
//!
//! ```text
//! Ψ0 = |shift⟩|0⟩|0⟩
//! Ψ1 = H on the counter
//! Ψ2 = ADD: counter += addend
//! Ψ3 = U:   target ^= oracle(counter - shift)
//! Ψ4 = ADD reversed
//! Ψ5 = QFT† on the counter
//! ```
//!
//! Operators act on whole registers. Measurement statistics after Ψ5 are
//! computed per target class: when a class is an arithmetic progression of
//! counter values with equal amplitudes, its contribution is a closed-form
//! geometric sum; otherwise an FFT of that class is used. Nothing is sampled
//! until [`sample`] is called.

use num_bigint::BigUint;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::algorithms::{Backend, BackendMode, PeriodicSequence};
use crate::arith::{self, Natural, Residue};
use crate::error::{Error, Result};
use crate::par::Execution;

/// Largest counter width simulated unless configured otherwise.
pub const DEFAULT_MAX_ELL: u32 = 24;
pub const DEFAULT_MAX_ATTEMPTS: usize = 24;

/// Amplitudes below this magnitude are dropped from Ψ5.
pub const AMPLITUDE_EPSILON: f64 = 1e-12;

/// `(n, ℓ)` for a modulus: `n = ⌊log2 N⌋ + 1` and `ℓ = ⌊log2 N²⌋ + 1`.
pub fn register_widths(modulus: u64) -> (u32, u32) {
    let n = 64 - modulus.leading_zeros();
    let sq = modulus as u128 * modulus as u128;
    let ell = 128 - sq.leading_zeros();
    (n, ell)
}

/// Everything the circuit needs: register widths, the index shift loaded
/// into the addend register, and the oracle table `i -> h(i)` on `[0, 2^ℓ)`.
#[derive(Clone, Debug)]
pub struct CircuitConfig {
    modulus: u64,
    n: u32,
    ell: u32,
    shift: u64,
    table: Arc<[u64]>,
    pub seed: u64,
}

impl CircuitConfig {
    /// Builds the oracle table by evaluating `oracle` on `0..2^ℓ`.
    pub fn new(modulus: u64, shift: u64, oracle: impl Fn(u64) -> u64, seed: u64, max_ell: u32) -> Result<Self> {
        let (n, ell) = Self::widths_checked(modulus, shift, max_ell)?;
        let table: Vec<u64> = (0..1u64 << ell).map(|i| oracle(i) % modulus).collect();
        Ok(CircuitConfig {
            modulus,
            n,
            ell,
            shift,
            table: table.into(),
            seed,
        })
    }

    /// Oracle `i -> seq.term(anchor + i)`, with the anchor as shift.
    pub fn from_sequence(seq: &dyn PeriodicSequence, seed: u64, max_ell: u32) -> Result<Self> {
        let modulus = seq
            .modulus()
            .to_u64()
            .ok_or_else(|| Error::Capacity(format!("modulus {} is too large to simulate", seq.modulus())))?;
        let anchor = seq.anchor();
        let shift = anchor
            .to_u64()
            .ok_or_else(|| Error::Capacity(format!("anchor {anchor} is too large to simulate")))?;
        let (n, ell) = Self::widths_checked(modulus, shift, max_ell)?;
        let len = 1usize << ell;
        let mut table = Vec::with_capacity(len);
        match seq.term_word(shift) {
            Some(first) if seq.successor_word(first).is_some() => {
                let mut x = first;
                for _ in 0..len {
                    table.push(x);
                    x = seq.successor_word(x).unwrap();
                }
            }
            _ => {
                let mut x = seq.term(&anchor);
                for _ in 0..len {
                    table.push(x.to_u64().unwrap());
                    x = seq.successor(&x);
                }
            }
        }
        Ok(CircuitConfig {
            modulus,
            n,
            ell,
            shift,
            table: table.into(),
            seed,
        })
    }

    /// Oracle `i -> x^i mod N`, for order finding.
    pub fn for_order(x: &Residue, seed: u64, max_ell: u32) -> Result<Self> {
        let modulus = x
            .modulus()
            .to_u64()
            .ok_or_else(|| Error::Capacity(format!("modulus {} is too large to simulate", x.modulus())))?;
        let (n, ell) = Self::widths_checked(modulus, 0, max_ell)?;
        let base = x.value().to_u64().unwrap();
        let mut table = Vec::with_capacity(1 << ell);
        let mut acc = 1 % modulus;
        for _ in 0..1u64 << ell {
            table.push(acc);
            acc = arith::mulmod_u64(acc, base, modulus);
        }
        Ok(CircuitConfig {
            modulus,
            n,
            ell,
            shift: 0,
            table: table.into(),
            seed,
        })
    }

    fn widths_checked(modulus: u64, shift: u64, max_ell: u32) -> Result<(u32, u32)> {
        if modulus < 2 {
            return Err(Error::invalid("modulus must be at least 2"));
        }
        let (n, ell) = register_widths(modulus);
        if ell > max_ell {
            return Err(Error::Capacity(format!(
                "modulus {modulus} needs a {ell}-bit counter, above the limit of {max_ell}; use the oracle backend"
            )));
        }
        if shift >> n != 0 {
            return Err(Error::invalid(format!(
                "shift {shift} does not fit the {n}-bit addend register"
            )));
        }
        Ok((n, ell))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn shift(&self) -> u64 {
        self.shift
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    /// `h(i)` for `i` taken modulo `2^ℓ`.
    pub fn oracle(&self, i: u64) -> u64 {
        self.table[(i & ((1 << self.ell) - 1)) as usize]
    }

    fn counter_size(&self) -> u64 {
        1 << self.ell
    }

    /// The counter with its overflow guard bit.
    fn guarded_mask(&self) -> u64 {
        (1 << (self.ell + 1)) - 1
    }
}

/// A basis state `(addend, counter, target)`.
pub type Basis = (u64, u64, u64);

/// Sparse superposition over the three registers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegisterState {
    amplitudes: BTreeMap<Basis, Complex64>,
}

impl RegisterState {
    pub fn basis(state: Basis) -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(state, Complex64::new(1.0, 0.0));
        RegisterState { amplitudes }
    }

    pub fn amplitude(&self, state: &Basis) -> Complex64 {
        self.amplitudes.get(state).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Basis, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Distinct target-register values in the support.
    pub fn targets(&self) -> Vec<u64> {
        let mut t: Vec<u64> = self.amplitudes.keys().map(|b| b.2).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Applies a basis permutation. Panics if two inputs collide, which would
    /// mean the map is not injective.
    fn relabel(&self, f: impl Fn(Basis) -> Basis) -> Self {
        let mut amplitudes = BTreeMap::new();
        for (&b, &a) in &self.amplitudes {
            let prev = amplitudes.insert(f(b), a);
            assert!(prev.is_none(), "basis map is not injective at {b:?}");
        }
        RegisterState { amplitudes }
    }
}

/// Probability of each counter outcome `c ∈ [0, 2^ℓ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    ell: u32,
    probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn probability(&self, c: u64) -> f64 {
        self.probabilities.get(c as usize).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Outcomes with probability above `threshold`, ascending.
    pub fn support(&self, threshold: f64) -> Vec<(u64, f64)> {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > threshold)
            .map(|(c, p)| (c as u64, *p))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Stage operators
// ---------------------------------------------------------------------------

/// Ψ0 = |shift⟩|0⟩|0⟩.
pub fn prepare_initial(config: &CircuitConfig) -> RegisterState {
    RegisterState::basis((config.shift, 0, 0))
}

/// Uniform superposition over the counter. Requires the counter to be 0.
pub fn hadamard_layer(state: &RegisterState, config: &CircuitConfig) -> Result<RegisterState> {
    let size = config.counter_size();
    let scale = (size as f64).sqrt().recip();
    let mut amplitudes = BTreeMap::new();
    for (&(addend, counter, target), &a) in &state.amplitudes {
        if counter != 0 {
            return Err(Error::invalid("hadamard layer expects the counter register in |0>"));
        }
        for i in 0..size {
            amplitudes.insert((addend, i, target), a * scale);
        }
    }
    Ok(RegisterState { amplitudes })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Reverse,
}

/// `|A⟩|B⟩ -> |A⟩|B ± A⟩` on the guarded counter.
pub fn adder_shift(state: &RegisterState, config: &CircuitConfig, direction: Direction) -> RegisterState {
    let mask = config.guarded_mask();
    state.relabel(|(addend, counter, target)| {
        let moved = match direction {
            Direction::Forward => counter.wrapping_add(addend),
            Direction::Reverse => counter.wrapping_sub(addend),
        };
        (addend, moved & mask, target)
    })
}

/// `|j⟩|y⟩ -> |j⟩|y ⊕ h(j - shift)⟩`.
pub fn apply_u(state: &RegisterState, config: &CircuitConfig) -> RegisterState {
    state.relabel(|(addend, counter, target)| {
        let i = counter.wrapping_sub(config.shift);
        (addend, counter, target ^ config.oracle(i))
    })
}

/// Counter values and amplitudes sharing one `(addend, target)` pair.
struct Class {
    entries: Vec<(u64, Complex64)>,
}

enum ClassShape {
    /// `count` terms `start + k step` with one common amplitude.
    Progression {
        count: u64,
        step: u64,
        weight: f64,
    },
    General,
}

impl Class {
    fn shape(&self) -> ClassShape {
        let (first, amp) = self.entries[0];
        if self.entries.iter().any(|(_, a)| *a != amp) {
            return ClassShape::General;
        }
        let count = self.entries.len() as u64;
        let step = if count > 1 { self.entries[1].0 - first } else { 1 };
        let regular = self.entries.windows(2).all(|w| w[1].0 - w[0].0 == step);
        if !regular {
            return ClassShape::General;
        }
        ClassShape::Progression {
            count,
            step,
            weight: amp.norm_sqr(),
        }
    }
}

fn classes_of(state: &RegisterState, ell: u32) -> Result<BTreeMap<(u64, u64), Class>> {
    let mut classes: BTreeMap<(u64, u64), Class> = BTreeMap::new();
    for (&(addend, counter, target), &a) in &state.amplitudes {
        if counter >> ell != 0 {
            return Err(Error::invalid(format!(
                "counter value {counter} exceeds {ell} bits; undo the adder first"
            )));
        }
        classes
            .entry((addend, target))
            .or_insert_with(|| Class { entries: Vec::new() })
            .entries
            .push((counter, a));
    }
    // BTreeMap iteration already sorts by counter within a class
    Ok(classes)
}

/// `|Σ_{k<count} e^{2πi k step c / 2^ℓ}|²`.
fn progression_kernel(count: u64, step: u64, c: u64, ell: u32) -> f64 {
    let mask = (1u128 << ell) - 1;
    let phase = (step as u128 * c as u128) & mask;
    if phase == 0 {
        return (count as f64) * (count as f64);
    }
    let scale = (1u128 << ell) as f64;
    let total = (phase * count as u128) & mask;
    let num = (PI * total as f64 / scale).sin();
    let den = (PI * phase as f64 / scale).sin();
    (num * num) / (den * den)
}

/// Unnormalised `X[c] = Σ_i x_i e^{+2πi i c / 2^ℓ}` of one class.
fn class_transform(entries: &[(u64, Complex64)], ell: u32, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let size = 1usize << ell;
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for &(i, a) in entries {
        buf[i as usize] = a;
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf
}

const KERNEL_CHUNK: usize = 1 << 12;

fn distribution_from_classes(
    classes: &BTreeMap<(u64, u64), Class>,
    ell: u32,
    execution: Execution,
) -> OutcomeDistribution {
    let size = 1usize << ell;
    let norm = (size as f64).recip();
    // progression classes only contribute through (count, step) and |amp|^2
    let mut groups: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut general = Vec::new();
    for class in classes.values() {
        match class.shape() {
            ClassShape::Progression { count, step, weight } => {
                *groups.entry((count, step)).or_insert(0.0) += weight;
            }
            ClassShape::General => general.push(class),
        }
    }
    let groups: Vec<(u64, u64, f64)> = groups.into_iter().map(|((n, s), w)| (n, s, w)).collect();
    let chunks: Vec<usize> = (0..size).step_by(KERNEL_CHUNK).collect();
    let mut probabilities: Vec<f64> = execution
        .map(chunks, |start| {
            (start..(start + KERNEL_CHUNK).min(size))
                .map(|c| {
                    groups
                        .iter()
                        .map(|&(count, step, w)| w * progression_kernel(count, step, c as u64, ell))
                        .sum::<f64>()
                        * norm
                })
                .collect::<Vec<f64>>()
        })
        .into_iter()
        .flatten()
        .collect();
    if !general.is_empty() {
        let mut planner = FftPlanner::new();
        for class in general {
            let x = class_transform(&class.entries, ell, &mut planner);
            for (p, v) in probabilities.iter_mut().zip(&x) {
                *p += v.norm_sqr() * norm;
            }
        }
    }
    OutcomeDistribution { ell, probabilities }
}

/// Exact counter distribution after QFT† on a Ψ4-shaped state, without
/// materialising Ψ5.
pub fn inverse_qft_distribution(state: &RegisterState, config: &CircuitConfig) -> Result<OutcomeDistribution> {
    let classes = classes_of(state, config.ell)?;
    Ok(distribution_from_classes(&classes, config.ell, Execution::Sequential))
}

/// The distribution the circuit produces for `config`, computed straight
/// from the oracle table. Same result as running the stages and calling
/// [`inverse_qft_distribution`] on Ψ4.
pub fn outcome_distribution(config: &CircuitConfig, execution: Execution) -> OutcomeDistribution {
    let amp = Complex64::new((config.counter_size() as f64).sqrt().recip(), 0.0);
    let mut by_target: HashMap<u64, Class> = HashMap::new();
    for (i, &y) in config.table.iter().enumerate() {
        by_target
            .entry(y)
            .or_insert_with(|| Class { entries: Vec::new() })
            .entries
            .push((i as u64, amp));
    }
    let classes: BTreeMap<(u64, u64), Class> = by_target
        .into_iter()
        .map(|(y, class)| ((config.shift, y), class))
        .collect();
    distribution_from_classes(&classes, config.ell, execution)
}

/// Ψ5 = QFT† Ψ4, with amplitudes below [`AMPLITUDE_EPSILON`] dropped.
pub fn inverse_qft(state: &RegisterState, config: &CircuitConfig) -> Result<RegisterState> {
    let classes = classes_of(state, config.ell)?;
    let norm = (config.counter_size() as f64).sqrt().recip();
    let mut planner = FftPlanner::new();
    let mut amplitudes = BTreeMap::new();
    for (&(addend, target), class) in &classes {
        let x = class_transform(&class.entries, config.ell, &mut planner);
        for (c, v) in x.into_iter().enumerate() {
            let v = v * norm;
            if v.norm() >= AMPLITUDE_EPSILON {
                amplitudes.insert((addend, c as u64, target), v);
            }
        }
    }
    Ok(RegisterState { amplitudes })
}

/// One outcome drawn from `dist`.
pub fn sample<R: Rng + ?Sized>(dist: &OutcomeDistribution, rng: &mut R) -> u64 {
    WeightedIndex::new(&dist.probabilities)
        .expect("distribution has positive mass")
        .sample(rng) as u64
}

/// Smallest continued-fraction convergent denominator `q ≤ N` of
/// `c / 2^ℓ` with `|c / 2^ℓ - k / q| ≤ 2^{-ℓ}`. `None` for `c = 0`.
pub fn extract_period(c: u64, ell: u32, modulus: &Natural) -> Option<Natural> {
    if c == 0 || ell >= 64 || c >> ell != 0 {
        return None;
    }
    let limit = modulus.to_u64().unwrap_or(u64::MAX) as u128;
    let denom = 1u128 << ell;
    let (mut num, mut den) = (c as u128, denom);
    // convergents h/k built from the partial quotients
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    while den != 0 {
        let q = num / den;
        (num, den) = (den, num - q * den);
        (h_prev, h) = (h, q * h + h_prev);
        (k_prev, k) = (k, q * k + k_prev);
        if k > limit {
            return None;
        }
        // |c/2^ℓ - h/k| ≤ 1/2^ℓ  <=>  |c k - h 2^ℓ| ≤ k
        let lhs = (c as u128 * k).abs_diff(h * denom);
        if lhs <= k {
            return Some(BigUint::from(k as u64));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// End-to-end period finding
// ---------------------------------------------------------------------------

/// One measurement and what it yielded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub outcome: u64,
    /// Extracted denominator; 1 when the outcome carried no information.
    pub candidate: u64,
    /// Running lcm of the candidates after this attempt.
    pub combined: u64,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodFindingRun {
    pub period: Option<u64>,
    pub attempts: Vec<Attempt>,
}

/// True when `table[i] = table[i + p]` wherever both exist.
fn is_period(table: &[u64], p: u64) -> bool {
    let p = p as usize;
    p > 0 && p < table.len() && table[..table.len() - p].iter().zip(&table[p..]).all(|(a, b)| a == b)
}

/// Divides out primes while the result stays a period.
fn minimise_period(table: &[u64], mut p: u64) -> u64 {
    let primes = arith::trial_division(&BigUint::from(p), u64::MAX).factors;
    for (q, _) in primes {
        while p.is_multiple_of(q) && is_period(table, p / q) {
            p /= q;
        }
    }
    p
}

/// Repeats measurement on one precomputed distribution until the lcm of the
/// extracted candidates verifies against the oracle table.
pub fn run_period_finding_on(
    config: &CircuitConfig,
    dist: &OutcomeDistribution,
    max_attempts: usize,
) -> PeriodFindingRun {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let modulus = BigUint::from(config.modulus);
    let mut combined = 1u64;
    let mut attempts = Vec::new();
    for _ in 0..max_attempts {
        let outcome = sample(dist, &mut rng);
        let candidate = extract_period(outcome, config.ell, &modulus)
            .and_then(|q| q.to_u64())
            .unwrap_or(1);
        let mut found = None;
        if is_period(&config.table, candidate) {
            found = Some(candidate);
        } else {
            let joined = num_integer::lcm(combined, candidate);
            combined = if joined > config.modulus { candidate } else { joined };
            if is_period(&config.table, combined) {
                found = Some(combined);
            }
        }
        attempts.push(Attempt {
            outcome,
            candidate,
            combined,
            verified: found.is_some(),
        });
        if let Some(p) = found {
            return PeriodFindingRun {
                period: Some(minimise_period(&config.table, p)),
                attempts,
            };
        }
    }
    PeriodFindingRun { period: None, attempts }
}

/// The least period of the oracle, or [`Error::BackendFailure`] after
/// `max_attempts` measurements.
pub fn run_period_finding(config: &CircuitConfig, max_attempts: usize) -> Result<Natural> {
    let dist = outcome_distribution(config, Execution::available());
    run_period_finding_on(config, &dist, max_attempts)
        .period
        .map(BigUint::from)
        .ok_or(Error::BackendFailure { attempts: max_attempts })
}

// ---------------------------------------------------------------------------
// Backend
// ---------------------------------------------------------------------------

/// Period finding by circuit simulation. Each query draws from an RNG seeded
/// by `seed` and the query itself, so answers do not depend on query order.
#[derive(Clone, Copy, Debug)]
pub struct CircuitBackend {
    pub seed: u64,
    pub max_attempts: usize,
    pub max_ell: u32,
    pub execution: Execution,
}

impl Default for CircuitBackend {
    fn default() -> Self {
        CircuitBackend {
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            max_ell: DEFAULT_MAX_ELL,
            execution: Execution::Sequential,
        }
    }
}

impl CircuitBackend {
    pub fn with_seed(seed: u64) -> Self {
        CircuitBackend {
            seed,
            ..Default::default()
        }
    }

    fn query_seed(&self, modulus: u64, shift: u64, first: u64, kind: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mix = rng.gen::<u64>() ^ modulus.rotate_left(17) ^ shift.rotate_left(31) ^ first.rotate_left(47) ^ kind;
        ChaCha8Rng::seed_from_u64(mix).gen()
    }

    fn run(&self, mut config: CircuitConfig, kind: u64) -> Result<Natural> {
        config.seed = self.query_seed(config.modulus, config.shift, config.table[0], kind);
        let dist = outcome_distribution(&config, self.execution);
        run_period_finding_on(&config, &dist, self.max_attempts)
            .period
            .map(BigUint::from)
            .ok_or(Error::BackendFailure {
                attempts: self.max_attempts,
            })
    }
}

impl Backend for CircuitBackend {
    fn mode(&self) -> BackendMode {
        BackendMode::CircuitSimulation
    }

    fn order_of(&self, x: &Residue) -> Result<Natural> {
        let g = x.value().gcd(x.modulus());
        if !g.is_one() {
            return Err(Error::NotCoprime {
                value: x.value().clone(),
                modulus: x.modulus().clone(),
                gcd: g,
            });
        }
        self.run(CircuitConfig::for_order(x, 0, self.max_ell)?, 1)
    }

    fn period_of(&self, seq: &dyn PeriodicSequence) -> Result<Natural> {
        self.run(CircuitConfig::from_sequence(seq, 0, self.max_ell)?, 2)
    }
}

// ---------------------------------------------------------------------------
// Trace export
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "psi0")]
    Psi0,
    #[serde(rename = "psi1")]
    Psi1,
    #[serde(rename = "psi2")]
    Psi2,
    #[serde(rename = "psi3")]
    Psi3,
    #[serde(rename = "psi4")]
    Psi4,
    #[serde(rename = "psi5")]
    Psi5,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Psi0,
        Stage::Psi1,
        Stage::Psi2,
        Stage::Psi3,
        Stage::Psi4,
        Stage::Psi5,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Psi0 => "psi0",
            Stage::Psi1 => "psi1",
            Stage::Psi2 => "psi2",
            Stage::Psi3 => "psi3",
            Stage::Psi4 => "psi4",
            Stage::Psi5 => "psi5",
        }
    }

    pub fn from_index(i: usize) -> Option<Stage> {
        Stage::ALL.get(i).copied()
    }
}

/// `[addend, counter, target, re, im]`.
pub type TraceEntry = (u64, u64, u64, f64, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub label: Stage,
    pub support: usize,
    pub norm: f64,
    pub entries: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub modulus: u64,
    pub n_bits: u32,
    pub ell: u32,
    pub shift: u64,
    pub stages: Vec<StageSnapshot>,
}

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn snapshot(label: Stage, state: &RegisterState) -> StageSnapshot {
    let entries: Vec<TraceEntry> = state
        .iter()
        .map(|(&(a, c, t), z)| (a, c, t, round12(z.re), round12(z.im)))
        .filter(|e| e.3 != 0.0 || e.4 != 0.0)
        .collect();
    StageSnapshot {
        label,
        support: entries.len(),
        norm: round12(state.norm_sqr()),
        entries,
    }
}

/// All six states of the circuit, in order.
pub fn run_stages(config: &CircuitConfig) -> Result<Vec<(Stage, RegisterState)>> {
    let psi0 = prepare_initial(config);
    let psi1 = hadamard_layer(&psi0, config)?;
    let psi2 = adder_shift(&psi1, config, Direction::Forward);
    let psi3 = apply_u(&psi2, config);
    let psi4 = adder_shift(&psi3, config, Direction::Reverse);
    let psi5 = inverse_qft(&psi4, config)?;
    Ok(vec![
        (Stage::Psi0, psi0),
        (Stage::Psi1, psi1),
        (Stage::Psi2, psi2),
        (Stage::Psi3, psi3),
        (Stage::Psi4, psi4),
        (Stage::Psi5, psi5),
    ])
}

/// Snapshots of the selected stages (all of them when `only` is empty).
pub fn trace(config: &CircuitConfig, only: &[Stage]) -> Result<Trace> {
    let stages = run_stages(config)?
        .into_iter()
        .filter(|(s, _)| only.is_empty() || only.contains(s))
        .map(|(s, state)| snapshot(s, &state))
        .collect();
    Ok(Trace {
        modulus: config.modulus,
        n_bits: config.n,
        ell: config.ell,
        shift: config.shift,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{PowerOrbit, QuadraticOrbit};
    use crate::sequences::{ClosedFormContext, LinearFamily, QuadraticFamily};

    fn config_143() -> CircuitConfig {
        let family = QuadraticFamily::new(1u32, 2u32, 143u32).unwrap();
        let ctx = ClosedFormContext::with_exact_order(family, 2u32).unwrap();
        CircuitConfig::from_sequence(&QuadraticOrbit::new(ctx), 7, DEFAULT_MAX_ELL).unwrap()
    }

    fn naive_distribution(config: &CircuitConfig) -> Vec<f64> {
        // direct O(4^ℓ) DFT per class, only for tiny ℓ
        let size = 1u64 << config.ell;
        let mut classes: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for i in 0..size {
            classes.entry(config.oracle(i)).or_default().push(i);
        }
        (0..size)
            .map(|c| {
                classes
                    .values()
                    .map(|members| {
                        let s: Complex64 = members
                            .iter()
                            .map(|&i| Complex64::from_polar(1.0, 2.0 * PI * ((i * c) % size) as f64 / size as f64))
                            .sum();
                        s.norm_sqr()
                    })
                    .sum::<f64>()
                    / (size * size) as f64
            })
            .collect()
    }

    #[test]
    fn widths() {
        assert_eq!(register_widths(143), (8, 15));
        assert_eq!(register_widths(209), (8, 16));
        assert_eq!(register_widths(2), (2, 3));
    }

    #[test]
    fn stages_for_143() {
        let config = config_143();
        assert_eq!((config.n(), config.ell(), config.shift()), (8, 15, 143));
        let psi0 = prepare_initial(&config);
        assert_eq!(psi0.amplitude(&(143, 0, 0)), Complex64::new(1.0, 0.0));
        let psi1 = hadamard_layer(&psi0, &config).unwrap();
        assert_eq!(psi1.len(), 32768);
        assert!((psi1.amplitude(&(143, 5, 0)).re - 32768f64.sqrt().recip()).abs() < 1e-15);
        let psi2 = adder_shift(&psi1, &config, Direction::Forward);
        assert_eq!(psi2.iter().next().unwrap().0, &(143, 143, 0));
        let psi3 = apply_u(&psi2, &config);
        assert_eq!(psi3.targets(), vec![2, 8, 80, 125]);
        for (j, y) in [(143, 125), (144, 2), (145, 8), (146, 80)] {
            assert!(psi3.amplitude(&(143, j, y)).norm() > 0.0);
        }
        let psi4 = adder_shift(&psi3, &config, Direction::Reverse);
        let first: Vec<Basis> = psi4.iter().take(4).map(|(b, _)| *b).collect();
        assert_eq!(first, vec![(143, 0, 125), (143, 1, 2), (143, 2, 8), (143, 3, 80)]);
        for s in [&psi1, &psi2, &psi3, &psi4] {
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
        let psi5 = inverse_qft(&psi4, &config).unwrap();
        assert!((psi5.norm_sqr() - 1.0).abs() < 1e-12);
        let counters: std::collections::BTreeSet<u64> = psi5.iter().map(|(b, _)| b.1).collect();
        assert_eq!(counters.into_iter().collect::<Vec<_>>(), vec![0, 8192, 16384, 24576]);
    }

    #[test]
    fn adder_round_trip_is_identity() {
        let config = config_143();
        let psi1 = hadamard_layer(&prepare_initial(&config), &config).unwrap();
        let back = adder_shift(
            &adder_shift(&psi1, &config, Direction::Forward),
            &config,
            Direction::Reverse,
        );
        assert_eq!(back, psi1);
        // the guard bit keeps N + i from wrapping
        let top = adder_shift(&psi1, &config, Direction::Forward);
        assert!(top.iter().any(|(b, _)| b.1 == 32767 + 143));
    }

    #[test]
    fn distribution_for_143() {
        let config = config_143();
        let dist = outcome_distribution(&config, Execution::Sequential);
        for c in 0..1u64 << 15 {
            let p = dist.probability(c);
            if c % 8192 == 0 {
                assert!((p - 0.25).abs() < 1e-9, "{c}: {p}");
            } else {
                assert!(p < 1e-9, "{c}: {p}");
            }
        }
        assert!((dist.total() - 1.0).abs() < 1e-12);
        let stages = run_stages(&config).unwrap();
        let from_state = inverse_qft_distribution(&stages[4].1, &config).unwrap();
        for (a, b) in dist.probabilities().iter().zip(from_state.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_naive_dft() {
        for (n, a) in [(15u64, 2u64), (21, 2), (33, 5), (35, 3), (39, 7)] {
            let x = Residue::new(a, n).unwrap();
            let config = CircuitConfig::for_order(&x, 0, DEFAULT_MAX_ELL).unwrap();
            let fast = outcome_distribution(&config, Execution::Parallel);
            let slow = naive_distribution(&config);
            for (c, (p, q)) in fast.probabilities().iter().zip(&slow).enumerate() {
                assert!((p - q).abs() < 1e-9, "N={n} c={c}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn general_classes_use_the_fft() {
        // a non-periodic oracle forces the fallback path
        let config = CircuitConfig::new(15, 0, |i| (i * i + i / 3) % 15, 0, DEFAULT_MAX_ELL).unwrap();
        let fast = outcome_distribution(&config, Execution::Sequential);
        let slow = naive_distribution(&config);
        for (p, q) in fast.probabilities().iter().zip(&slow) {
            assert!((p - q).abs() < 1e-9);
        }
        assert!((fast.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_oracle_concentrates_at_zero() {
        let config = CircuitConfig::new(35, 0, |_| 4, 0, DEFAULT_MAX_ELL).unwrap();
        let dist = outcome_distribution(&config, Execution::Sequential);
        assert!((dist.probability(0) - 1.0).abs() < 1e-12);
        assert_eq!(run_period_finding(&config, 4).unwrap(), BigUint::one());
    }

    #[test]
    fn extract_period_examples() {
        let n = BigUint::from(143u32);
        assert_eq!(extract_period(8192, 15, &n), Some(BigUint::from(4u32)));
        assert_eq!(extract_period(24576, 15, &n), Some(BigUint::from(4u32)));
        assert_eq!(extract_period(16384, 15, &n), Some(BigUint::from(2u32)));
        assert_eq!(extract_period(0, 15, &n), None);
        // 1/3 is approximated to within 2^-15 by 10923/32768
        assert_eq!(extract_period(10923, 15, &n), Some(BigUint::from(3u32)));
        assert_eq!(extract_period(1 << 15, 15, &n), None);
    }

    #[test]
    fn sampling_is_seeded_and_stays_on_the_support() {
        let config = config_143();
        let dist = outcome_distribution(&config, Execution::Sequential);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            *counts.entry(sample(&dist, &mut rng)).or_insert(0u32) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![0, 8192, 16384, 24576]);
        // binomial sd for p = 1/4 over 10^4 draws is about 43.3
        for &k in counts.values() {
            assert!((k as f64 - 2500.0).abs() < 3.0 * 43.31, "{k}");
        }
        let point = CircuitConfig::new(15, 0, |_| 1, 0, DEFAULT_MAX_ELL).unwrap();
        let dist = outcome_distribution(&point, Execution::Sequential);
        assert_eq!(sample(&dist, &mut rng), 0);
    }

    #[test]
    fn period_finding_examples() {
        let config = config_143();
        assert_eq!(run_period_finding(&config, 32).unwrap(), BigUint::from(4u32));
        let power = PowerOrbit::new(LinearFamily::new(3u32, 209u32).unwrap());
        let config = CircuitConfig::from_sequence(&power, 3, DEFAULT_MAX_ELL).unwrap();
        assert_eq!(config.ell(), 16);
        assert_eq!(run_period_finding(&config, 32).unwrap(), BigUint::from(90u32));
        // one attempt on the zero outcome cannot succeed
        let failing = (0..64)
            .map(|seed| CircuitConfig { seed, ..config_143() })
            .find(|c| {
                run_period_finding_on(c, &outcome_distribution(c, Execution::Sequential), 1)
                    .period
                    .is_none()
            })
            .unwrap();
        assert!(matches!(
            run_period_finding(&failing, 1),
            Err(Error::BackendFailure { attempts: 1 })
        ));
    }

    #[test]
    fn ell_guard() {
        let x = Residue::new(2u32, 5003u32).unwrap();
        assert!(matches!(CircuitConfig::for_order(&x, 0, 24), Err(Error::Capacity(_))));
    }

    #[test]
    fn backend_answers_orders_and_periods() {
        let backend = CircuitBackend::with_seed(11);
        let x = Residue::new(3u32, 209u32).unwrap();
        assert_eq!(backend.order_of(&x).unwrap(), BigUint::from(90u32));
        let x = Residue::new(11u32, 209u32).unwrap();
        assert!(backend.order_of(&x).is_err());
    }

    #[test]
    fn trace_is_deterministic_and_rounded() {
        let config = config_143();
        let a = serde_json::to_string(&trace(&config, &[Stage::Psi3, Stage::Psi5]).unwrap()).unwrap();
        let b = serde_json::to_string(&trace(&config, &[Stage::Psi3, Stage::Psi5]).unwrap()).unwrap();
        assert_eq!(a, b);
        let t = trace(&config, &[Stage::Psi5]).unwrap();
        assert_eq!(t.stages.len(), 1);
        assert_eq!(t.stages[0].support, 16);
    }
}
