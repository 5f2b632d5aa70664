use num_bigint::BigUint;
use num_traits::One;
use proptest::prelude::*;

use qrho_core::algorithms::{
    extended_shor, factor, quantum_rho, quantum_rho_linear, shor, Backend, ExactBackend, FactorConfig,
};
use qrho_core::arith::{gcd_u64, is_prime_u64, multiplicative_order, Residue};
use qrho_core::quantum_sim::{outcome_distribution, CircuitBackend, CircuitConfig, DEFAULT_MAX_ELL};
use qrho_core::sequences::QuadraticFamily;
use qrho_core::Execution;

fn n(v: u64) -> BigUint {
    BigUint::from(v)
}

fn proper_divisor(f: &Option<BigUint>, modulus: u64) -> bool {
    match f {
        None => true,
        Some(f) => f > &BigUint::one() && f < &n(modulus) && (n(modulus) % f) == n(0),
    }
}

fn odd_semiprime() -> impl Strategy<Value = u64> {
    (3u64..400, 3u64..400)
        .prop_filter("distinct odd primes", |&(p, q)| {
            p != q && p % 2 == 1 && q % 2 == 1 && is_prime_u64(p) && is_prime_u64(q)
        })
        .prop_map(|(p, q)| p * q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factor_multiplies_back_to_input(v in 2u64..2_000_000_000) {
        let config = FactorConfig { trial_bound: 50, execution: Execution::Sequential, ..FactorConfig::default() };
        let f = factor(&n(v), &config).unwrap();
        prop_assert_eq!(f.product(), n(v));
        prop_assert!(f.is_complete());
        for w in f.factors.windows(2) {
            prop_assert!(w[0].base < w[1].base);
        }
        for pp in &f.factors {
            prop_assert!(is_prime_u64(u64::try_from(&pp.base).unwrap()));
        }
    }

    #[test]
    fn reported_factors_divide(modulus in odd_semiprime(), x in 2u64..10_000, a in 1u64..20, b in 0u64..20) {
        let backend = ExactBackend::default();
        let x = x % modulus;
        if x > 1 && gcd_u64(x, modulus) == 1 {
            let r = Residue::new(x, modulus).unwrap();
            prop_assert!(proper_divisor(&shor(&r, &backend).unwrap().factor, modulus));
            prop_assert!(proper_divisor(&extended_shor(&r, &backend).unwrap().factor, modulus));
            prop_assert!(proper_divisor(&quantum_rho_linear(&n(x), &n(modulus), &backend).unwrap().factor, modulus));
        }
        if gcd_u64(2 * a, modulus) == 1 {
            let family = QuadraticFamily::new(a, 2 * b, modulus).unwrap();
            if let Ok(res) = quantum_rho(&family, &n(x), &backend, None) {
                prop_assert!(proper_divisor(&res.factor, modulus));
            }
        }
    }

    #[test]
    fn extended_shor_finds_whatever_shor_finds(modulus in odd_semiprime(), x in 2u64..10_000) {
        let x = x % modulus;
        prop_assume!(x > 1 && gcd_u64(x, modulus) == 1);
        let r = Residue::new(x, modulus).unwrap();
        let backend = ExactBackend::default();
        if shor(&r, &backend).unwrap().factor.is_some() {
            prop_assert!(extended_shor(&r, &backend).unwrap().factor.is_some());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn circuit_order_matches_exact(modulus in 3u64..180, x in 2u64..180, seed in any::<u64>()) {
        let x = x % modulus;
        prop_assume!(x > 1 && gcd_u64(x, modulus) == 1);
        let r = Residue::new(x, modulus).unwrap();
        let circuit = CircuitBackend::with_seed(seed);
        prop_assert_eq!(circuit.order_of(&r).unwrap(), multiplicative_order(&r).unwrap());
    }

    #[test]
    fn distribution_is_normalised_and_mode_independent(modulus in 3u64..120, x in 2u64..120) {
        let x = x % modulus;
        prop_assume!(x > 1 && gcd_u64(x, modulus) == 1);
        let r = Residue::new(x, modulus).unwrap();
        let config = CircuitConfig::for_order(&r, 0, DEFAULT_MAX_ELL).unwrap();
        let seq = outcome_distribution(&config, Execution::Sequential);
        let par = outcome_distribution(&config, Execution::Parallel);
        prop_assert!((seq.total() - 1.0).abs() < 1e-9);
        prop_assert_eq!(seq.probabilities(), par.probabilities());

        // peaks sit at multiples of 2^ell / r, so r * c / 2^ell is near an integer
        let order = u64::try_from(multiplicative_order(&r).unwrap()).unwrap();
        let size = 1u64 << config.ell();
        let near_peak: f64 = seq
            .probabilities()
            .iter()
            .enumerate()
            .filter(|&(c, _)| {
                let rem = (c as u64 * order) % size;
                rem.min(size - rem) * 2 <= order
            })
            .map(|(_, p)| p)
            .sum();
        prop_assert!(near_peak >= 4.0 / (std::f64::consts::PI * std::f64::consts::PI) - 1e-9);
    }
}
