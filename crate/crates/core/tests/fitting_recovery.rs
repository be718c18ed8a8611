use gridres_core::fitting::{
    evaluate, fit_exponential, fit_restoration, Curve, ExponentialModel, SaturatingRestorationModel,
};
use gridres_core::solver::LmOptions;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

fn sample<M: Curve>(m: &M, xs: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    xs.into_iter().map(|x| (x, m.value(x))).collect()
}

#[test]
fn noiseless_exponential_recovery() {
    let truth = ExponentialModel { a: 3.0, b: 0.2 };
    let fit = fit_exponential(&sample(&truth, (0..=10).map(f64::from)), &LmOptions::default()).unwrap();
    assert!(rel(fit.model.a, 3.0) < 1e-6, "{:?}", fit.model);
    assert!(rel(fit.model.b, 0.2) < 1e-6, "{:?}", fit.model);
    assert!(fit.diagnostics.converged, "{:?}", fit.report);
}

#[test]
fn published_wind_zone1_coefficients_recovered() {
    let truth = ExponentialModel { a: 2.9214, b: 0.1058 };
    let xs = (0..20).map(|i| 5.0 + 1.5 * i as f64);
    let fit = fit_exponential(&sample(&truth, xs), &LmOptions::default()).unwrap();
    assert!(rel(fit.model.a, 2.9214) < 1e-6);
    assert!(rel(fit.model.b, 0.1058) < 1e-6);
}

#[test]
fn noisy_exponential_within_ten_percent() {
    let truth = ExponentialModel { a: 2.0, b: 0.15 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let samples: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let x = rng.random_range(5.0..30.0);
            (x, truth.value(x) * (1.0 + noise.sample(&mut rng)))
        })
        .collect();
    let fit = fit_exponential(&samples, &LmOptions::default()).unwrap();
    assert!(rel(fit.model.a, 2.0) < 0.10, "{:?}", fit.model);
    assert!(rel(fit.model.b, 0.15) < 0.10, "{:?}", fit.model);
}

#[test]
fn noiseless_double_exponential_recovery() {
    let truth = SaturatingRestorationModel { c: 200.0, a1: 150.0, b1: 0.01, a2: 50.0, b2: 0.05 };
    let fit = fit_restoration(&sample(&truth, (1..=300).map(f64::from)), &LmOptions::default()).unwrap();
    let m = fit.model;
    for (got, want) in [(m.c, 200.0), (m.a1, 150.0), (m.b1, 0.01), (m.a2, 50.0), (m.b2, 0.05)] {
        assert!(rel(got, want) < 1e-3, "{m:?}");
    }
}

#[test]
fn constant_restoration_data_saturates() {
    let samples: Vec<(f64, f64)> = (1..=30).map(|x| (x as f64, 12.0)).collect();
    let fit = fit_restoration(&samples, &LmOptions::default()).unwrap();
    for (x, _) in &samples {
        assert!((fit.model.value(*x) - 12.0).abs() < 1e-6, "{:?}", fit.model);
    }
}

#[test]
fn constant_fragility_data_is_flat() {
    let samples: Vec<(f64, f64)> = (0..8).map(|x| (x as f64 * 2.0, 5.0)).collect();
    let fit = fit_exponential(&samples, &LmOptions::default()).unwrap();
    assert!((fit.model.a - 5.0).abs() < 1e-9);
    assert!(fit.model.b.abs() < 1e-9);
}

#[test]
fn published_restoration_at_one_hundred_outages() {
    let m = SaturatingRestorationModel { c: 232.60, a1: 217.17, b1: 0.001, a2: 15.22, b2: 0.041 };
    let want = 232.60 - 217.17 * (-0.1f64).exp() - 15.22 * (-4.1f64).exp();
    assert!((want - 35.85).abs() < 0.01);
    assert_eq!(evaluate(&m, 100.0).unwrap().value, want);
}

fn central_difference<M: Curve>(m: &M, x: f64) -> Vec<f64> {
    let p = m.params();
    (0..p.len())
        .map(|j| {
            let h = 1e-6 * p[j].abs().max(1.0);
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[j] += h;
            dn[j] -= h;
            (M::from_params(&up).value(x) - M::from_params(&dn).value(x)) / (2.0 * h)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64], scale: f64) {
    for (a, n) in analytic.iter().zip(numeric) {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(scale * 1e-3).max(1e-12);
        assert!(err < 1e-5, "analytic {analytic:?} vs numeric {numeric:?}");
    }
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let e = ExponentialModel { a: rng.random_range(0.01..10.0), b: rng.random_range(-0.5..0.5) };
        let x = rng.random_range(0.0..30.0);
        assert_close(&e.gradient(x), &central_difference(&e, x), e.value(x));

        let r = SaturatingRestorationModel {
            c: rng.random_range(10.0..300.0),
            a1: rng.random_range(0.0..200.0),
            b1: rng.random_range(0.001..0.1),
            a2: rng.random_range(0.0..50.0),
            b2: rng.random_range(0.01..1.0),
        };
        let x = rng.random_range(0.0..300.0);
        assert_close(&r.gradient(x), &central_difference(&r, x), r.c);
    }
}

#[test]
fn accepted_steps_never_increase_sse() {
    let truth = SaturatingRestorationModel { c: 80.0, a1: 60.0, b1: 0.03, a2: 15.0, b2: 0.3 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<(f64, f64)> = (0..150)
        .map(|_| {
            let x = rng.random_range(1.0..200.0f64).round();
            (x, truth.value(x) * rng.random_range(0.85..1.15))
        })
        .collect();
    let fit = fit_restoration(&samples, &LmOptions::default()).unwrap();
    assert!(fit.report.sse_history.windows(2).all(|w| w[1] <= w[0]));
}

fn restoration_law() -> impl Strategy<Value = SaturatingRestorationModel> {
    (10.0..300.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.001..0.2f64, 0.01..2.0f64).prop_map(
        |(c, f1, f2, b1, b2)| SaturatingRestorationModel {
            c,
            a1: c * f1 * 0.8,
            b1,
            a2: c * (1.0 - f1) * f2 * 0.2,
            b2,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fitted_restoration_is_monotone(law in restoration_law(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(f64, f64)> = (0..60)
            .map(|_| {
                let x = rng.random_range(1.0..150.0f64).round();
                (x, law.value(x) * rng.random_range(0.8..1.2))
            })
            .collect();
        let fit = fit_restoration(&samples, &LmOptions::default()).unwrap();
        prop_assert!(fit.model.satisfies_constraints());
        let [lo, hi] = fit.fit_domain;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let y = fit.model.value(lo + (hi - lo) * i as f64 / 999.0);
            prop_assert!(y >= prev);
            prev = y;
        }
    }

    #[test]
    fn exponential_fit_is_scale_covariant(
        a in 0.1..5.0f64,
        b in 0.05..0.3f64,
        k in 0.1..20.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|_| {
                let x = rng.random_range(0.0..20.0);
                (x, a * (b * x).exp() * rng.random_range(0.9..1.1))
            })
            .collect();
        let scaled: Vec<(f64, f64)> = samples.iter().map(|(x, y)| (*x, k * y)).collect();
        let base = fit_exponential(&samples, &LmOptions::default()).unwrap().model;
        let other = fit_exponential(&scaled, &LmOptions::default()).unwrap().model;
        prop_assert!(rel(other.a, k * base.a) < 1e-8, "{base:?} {other:?}");
        prop_assert!((other.b - base.b).abs() < 1e-8 * base.b.abs().max(1.0));
    }

    #[test]
    fn refitting_own_predictions_is_idempotent(a in 0.1..5.0f64, b in 0.05..0.3f64) {
        let data = sample(&ExponentialModel { a, b }, (0..15).map(|i| i as f64 * 1.5));
        let first = fit_exponential(&data, &LmOptions::default()).unwrap().model;
        let again = fit_exponential(&sample(&first, data.iter().map(|d| d.0)), &LmOptions::default())
            .unwrap()
            .model;
        prop_assert!(rel(again.a, first.a) < 1e-9);
        prop_assert!(rel(again.b, first.b) < 1e-9);
    }
}
