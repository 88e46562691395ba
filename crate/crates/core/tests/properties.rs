use ftsc::numerics::{adaptive_quad, frac_pow, QuadratureSpec, RationalExponent};
use ftsc::plant::{benchmark, plant_derivative, BenchmarkId};
use ftsc::verification::{comparison_sweep, sample_inequality_suite};
use proptest::prelude::*;

const ODD_POOL: [(i64, i64); 7] = [(1, 1), (41, 49), (33, 49), (25, 49), (90, 49), (3, 1), (9, 7)];

fn all_benchmarks() -> Vec<BenchmarkId> {
    let mut ids = BenchmarkId::SECOND_ORDER.to_vec();
    ids.extend(BenchmarkId::third_order_all());
    ids
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frac_pow_is_odd_for_odd_numerators(x in -10.0f64..10.0, k in 0usize..ODD_POOL.len()) {
        let (n, d) = ODD_POOL[k];
        let p = RationalExponent::new(n, d).unwrap();
        let a = frac_pow(x, p).unwrap();
        let b = frac_pow(-x, p).unwrap();
        if n % 2 == 1 {
            prop_assert_eq!(a, -b);
        } else {
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn exponent_text_round_trips(n in -200i64..200, k in 0i64..100) {
        prop_assume!(n != 0);
        let d = 2 * k + 1;
        let p = RationalExponent::new(n, d).unwrap();
        let back: RationalExponent = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
        prop_assert!((p.value() - n as f64 / d as f64).abs() < 1e-15);
    }

    #[test]
    fn benchmark_drifts_scale_consistently(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
        let a = benchmark(BenchmarkId::A).plant;
        let c = benchmark(BenchmarkId::C).plant;
        for i in 1..=2 {
            let x = [x1, x2];
            prop_assert!((c.drift(i, &x) - 5.0 * a.drift(i, &x)).abs() <= 1e-12 * (1.0 + a.drift(i, &x).abs()));
        }
    }
}

#[test]
fn registered_plants_rest_at_origin() {
    for id in all_benchmarks() {
        let case = benchmark(id);
        assert!(case.plant.vanishing_drift, "{id}");
        let zero = vec![0.0; case.plant.n()];
        assert!(
            plant_derivative(&case.plant, &zero, 0.0)
                .unwrap()
                .iter()
                .all(|v| *v == 0.0),
            "{id}"
        );
    }
}

#[test]
fn quadrature_integrates_monomials() {
    let spec = QuadratureSpec::default();
    for k in 0..=6 {
        let v = adaptive_quad(|t| t.powi(k), 0.0, 1.0, &spec).unwrap();
        let exact = 1.0 / (k as f64 + 1.0);
        assert!((v - exact).abs() <= spec.abs_tol + spec.rel_tol * exact, "k = {k}");
    }
}

#[test]
fn checkers_are_deterministic_given_seeds() {
    let gamma = RationalExponent::odd(45, 49).unwrap();
    assert_eq!(
        comparison_sweep(3, 10, gamma).unwrap(),
        comparison_sweep(3, 10, gamma).unwrap()
    );
    assert_eq!(
        sample_inequality_suite(9, 200).unwrap(),
        sample_inequality_suite(9, 200).unwrap()
    );
    assert_ne!(
        sample_inequality_suite(9, 200).unwrap().seed,
        sample_inequality_suite(10, 200).unwrap().seed
    );
}
