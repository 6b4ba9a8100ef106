use sbm_core::particles::{
    empirical_tail, moments_from_samples, run_replicates, simulate_path, smoothed_mean,
    smoothed_second_moment_constant, Extrapolation, Method, SimulationConfig,
};
use sbm_core::rng::stream;
use sbm_core::InitialCondition;

fn config(n: u64, t: f64, reps: usize, seed: u64) -> SimulationConfig {
    SimulationConfig::new(n, t, reps, seed)
}

#[test]
fn fixed_seed_reproduces_atoms() {
    let c = config(500, 1.0, 1, 5);
    for u0 in [InitialCondition::constant(1.0).unwrap(), InitialCondition::dirac(0.0)] {
        let a = simulate_path(&c, &u0, 0.0, &mut stream(5, &[0])).unwrap();
        let b = simulate_path(&c, &u0, 0.0, &mut stream(5, &[0])).unwrap();
        assert_eq!(a, b);
        let other = simulate_path(&c, &u0, 0.0, &mut stream(6, &[0])).unwrap();
        assert_ne!(a.positions, other.positions);
    }
    let set = |seed| run_replicates(&config(500, 1.0, 64, seed), &InitialCondition::dirac(0.0), 0.0).unwrap();
    assert_eq!(set(1), set(1));
}

#[test]
fn dirac_mean_and_mass_match_exact_values() {
    let u0 = InitialCondition::dirac(0.0);
    let c = config(2_000, 1.0, 4_000, 11);
    let set = run_replicates(&c, &u0, 0.0).unwrap();
    let m = moments_from_samples(&set, &[1], Extrapolation::Quadratic).unwrap();
    assert!(
        (m.total_mass.mean - 1.0).abs() <= 3.0 * m.total_mass.std_error,
        "{:?}",
        m.total_mass
    );
    for bm in &m.per_bandwidth {
        let exact = smoothed_mean(&u0, 1.0, 0.0, bm.bandwidth).unwrap();
        let e = bm.moments[0];
        assert!(
            (e.mean - exact).abs() <= 3.0 * e.std_error,
            "h={}: {e:?} vs {exact}",
            bm.bandwidth
        );
    }
}

#[test]
fn constant_density_second_moment_matches_smoothed_closed_form() {
    let u0 = InitialCondition::constant(1.0).unwrap();
    let set = run_replicates(&config(2_000, 1.0, 3_000, 12), &u0, 0.0).unwrap();
    let m = moments_from_samples(&set, &[1, 2], Extrapolation::Linear).unwrap();
    for bm in &m.per_bandwidth {
        let exact = smoothed_second_moment_constant(1.0, 1.0, bm.bandwidth);
        let e = bm.moments[1];
        assert!(
            (e.mean - exact).abs() <= 3.0 * e.std_error,
            "h={}: {e:?} vs {exact}",
            bm.bandwidth
        );
        assert!((bm.moments[0].mean - 1.0).abs() <= 3.0 * bm.moments[0].std_error);
    }
}

#[test]
fn genealogy_sampler_agrees_with_event_driven_reference() {
    let u0 = InitialCondition::constant(1.0).unwrap();
    let mut a = config(200, 0.25, 2_000, 3);
    a.domain_truncation = Some(2.0);
    let mut b = a.clone();
    a.method = Method::Genealogy;
    b.method = Method::EventDriven;
    b.seed = 4;
    let ma = moments_from_samples(&run_replicates(&a, &u0, 0.0).unwrap(), &[2], Extrapolation::Linear).unwrap();
    let mb = moments_from_samples(&run_replicates(&b, &u0, 0.0).unwrap(), &[2], Extrapolation::Linear).unwrap();
    for (x, y) in ma.per_bandwidth.iter().zip(&mb.per_bandwidth) {
        let (x, y) = (x.moments[0], y.moments[0]);
        let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert!((x.mean - y.mean).abs() <= 3.5 * se, "{x:?} vs {y:?}");
    }
}

#[test]
fn tail_frequencies_are_nested() {
    let u0 = InitialCondition::constant(1.0).unwrap();
    let zs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
    let tail = empirical_tail(&config(1_000, 1.0, 500, 8), &u0, 0.0, &zs).unwrap();
    assert_eq!(tail[0].frequency, 1.0);
    assert!(tail.windows(2).all(|w| w[1].frequency <= w[0].frequency));
    assert_eq!(tail.last().unwrap().frequency, 0.0);
    assert!(tail.last().unwrap().censored);
}
