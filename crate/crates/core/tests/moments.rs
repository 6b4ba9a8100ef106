mod support;

use proptest::prelude::*;
use sbm_core::moment::closed_form_moment;
use sbm_core::{moment, InitialCondition, MomentRequest};

fn within(value: f64, se: f64, exact: f64, k: f64) -> bool {
    (value - exact).abs() <= k * se + 64.0 * f64::EPSILON * exact.abs()
}

#[test]
fn third_moment_matches_cumulant_oracle() {
    for (k, t) in [(1.0, 0.1), (1.0, 1.0), (2.5, 1.0), (1.0, 100.0)] {
        let u0 = InitialCondition::constant(k).unwrap();
        let r = moment(&MomentRequest::new(3, t, 0.3, u0)).unwrap();
        let exact = support::third_moment_constant(k, t);
        assert!(
            within(r.value, r.std_error, exact, 4.0),
            "K={k} t={t}: {} +- {} vs {exact}",
            r.value,
            r.std_error
        );
        assert!((r.value - exact).abs() / exact < 2e-3);
    }
}

#[test]
fn second_moment_closed_forms() {
    let c = InitialCondition::constant(1.0).unwrap();
    let r = moment(&MomentRequest::new(2, 1.0, 0.0, c.clone())).unwrap();
    assert!(within(
        r.value,
        r.std_error,
        support::second_moment_constant(1.0, 1.0),
        3.0
    ));
    assert!((closed_form_moment(2, 1.0, 0.0, &c).unwrap() - 1.564_189_583_5).abs() < 1e-9);

    let d = InitialCondition::dirac(0.0);
    let exact = 0.25 + 1.0 / (2.0 * std::f64::consts::PI);
    let r = moment(&MomentRequest::new(2, 1.0, 0.0, d.clone())).unwrap();
    assert!(
        within(r.value, r.std_error, exact, 3.0),
        "{} +- {}",
        r.value,
        r.std_error
    );
    assert!((r.value - exact).abs() / exact < 1e-3);
    assert!((closed_form_moment(2, 1.0, 0.0, &d).unwrap() - exact).abs() < 1e-12);
}

#[test]
fn moments_are_polynomials_in_sqrt_t_for_constant_density() {
    // m_n(t) = sum_k c_k t^{k/2}; halving sqrt(t) scales each n'-term by 2^{-n'}.
    let u0 = InitialCondition::constant(1.0).unwrap();
    let a = moment(&MomentRequest::new(4, 4.0, 0.0, u0.clone())).unwrap();
    let b = moment(&MomentRequest::new(4, 1.0, 0.0, u0)).unwrap();
    for (ta, tb) in a.per_nprime.iter().zip(&b.per_nprime) {
        let scaled = tb.value * 2f64.powi(ta.n_prime as i32);
        let se = (ta.std_error.powi(2) + (tb.std_error * 2f64.powi(ta.n_prime as i32)).powi(2)).sqrt();
        assert!(
            within(ta.value, se, scaled, 4.0),
            "n'={}: {} vs {scaled}",
            ta.n_prime,
            ta.value
        );
    }
}

#[test]
fn lyapunov_ladder_and_growth_in_t() {
    let u0 = InitialCondition::dirac(0.5);
    let norms: Vec<f64> = (1..=4)
        .map(|n| {
            moment(&MomentRequest::new(n, 2.0, 0.0, u0.clone()))
                .unwrap()
                .value
                .powf(1.0 / n as f64)
        })
        .collect();
    assert!(norms.windows(2).all(|w| w[1] > w[0]), "{norms:?}");

    let c = InitialCondition::constant(1.0).unwrap();
    let ms: Vec<f64> = [0.5, 2.0, 8.0]
        .iter()
        .map(|&t| moment(&MomentRequest::new(3, t, 0.0, c.clone())).unwrap().value)
        .collect();
    assert!(ms.windows(2).all(|w| w[1] > w[0]), "{ms:?}");
}

#[test]
fn fixed_seed_is_reproducible() {
    let u0 = InitialCondition::dirac(0.0);
    let a = moment(&MomentRequest::new(3, 1.0, 0.2, u0.clone()).with_seed(9)).unwrap();
    let b = moment(&MomentRequest::new(3, 1.0, 0.2, u0).with_seed(9)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dirac_moments_depend_on_distance_only(w in -2.0f64..2.0, x in -2.0f64..2.0) {
        let shifted = moment(&MomentRequest::new(3, 1.0, x, InitialCondition::dirac(w)).with_seed(1)).unwrap();
        let mirrored = moment(&MomentRequest::new(3, 1.0, -x, InitialCondition::dirac(-w)).with_seed(1)).unwrap();
        let centred = moment(&MomentRequest::new(3, 1.0, x - w, InitialCondition::dirac(0.0)).with_seed(1)).unwrap();
        let se = (shifted.std_error.powi(2) + centred.std_error.powi(2)).sqrt();
        prop_assert!(within(shifted.value, se, centred.value, 4.0));
        let se = (shifted.std_error.powi(2) + mirrored.std_error.powi(2)).sqrt();
        prop_assert!(within(shifted.value, se, mirrored.value, 4.0));
    }

    #[test]
    fn constant_density_is_translation_invariant(x in -10.0f64..10.0, k in 0.2f64..3.0) {
        let u0 = InitialCondition::constant(k).unwrap();
        let a = moment(&MomentRequest::new(3, 1.0, x, u0.clone()).with_seed(3)).unwrap();
        let b = moment(&MomentRequest::new(3, 1.0, 0.0, u0).with_seed(3)).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * b.value);
    }
}
