use ccjs::confidence::{constraint, ConfidenceSpec, Framework};
use ccjs::problem::{InstanceParams, MmvSystem, ProblemInstance};
use ccjs::rng::{stream, Stream};
use ccjs::solver::{
    brute_force_r0, find_bracket, l12_norm, lagrangian, max_iteration, minimize_lagrangian, random_init, solve,
    subgradient, Init, InnerStep, SolverConfig,
};
use ccjs::Error;
use ndarray::{array, Array2};
use proptest::prelude::*;

fn small_instance(seed: u64) -> ProblemInstance {
    let p = InstanceParams {
        m: 8,
        k: 12,
        n: 3,
        s: 2,
        theta: 200.0,
        ..Default::default()
    };
    ProblemInstance::generate(&p, seed).unwrap()
}

/// Central difference quotient of the Lagrangian at entry `(t, s)`.
fn central_difference(fw: Framework, sys: &MmvSystem, x: &Array2<f64>, lambda: f64, t: usize, s: usize) -> f64 {
    let h = 1e-6;
    let mut up = x.clone();
    let mut down = x.clone();
    up[[t, s]] += h;
    down[[t, s]] -= h;
    let lu = lagrangian(fw, sys, &up, lambda, 0.0).unwrap();
    let ld = lagrangian(fw, sys, &down, lambda, 0.0).unwrap();
    (lu - ld) / (2.0 * h)
}

#[test]
fn l12_examples() {
    assert_eq!(l12_norm(&Array2::zeros((2, 2))), 0.0);
    assert_eq!(l12_norm(&array![[3.0, 4.0], [0.0, 0.0]]), 5.0);
}

#[test]
fn max_iteration_example() {
    assert_eq!(max_iteration(0.0, 1024.0, 0.5), 10);
}

#[test]
fn subgradients_match_finite_differences() {
    let inst = small_instance(3);
    let sys = inst.system();
    let mut rng = stream(3, Stream::Analysis);
    for fw in [Framework::Ls, Framework::Ml] {
        for _ in 0..10 {
            let x = random_init(12, 3, &mut rng);
            let lambda = rng.random_range(0.01..2.0);
            let g = subgradient(fw, &sys, &x, lambda).unwrap();
            for ((t, s), &v) in g.indexed_iter() {
                let fd = central_difference(fw, &sys, &x, lambda, t, s);
                assert!((v - fd).abs() <= 1e-4 * v.abs().max(1.0), "{fw} ({t},{s}): {v} vs {fd}");
            }
        }
    }
}

#[test]
fn zero_multiplier_empties_the_matrix() {
    let inst = small_instance(5);
    let sys = inst.system();
    let spec = ConfidenceSpec::for_system(Framework::Ls, &sys, 0.05).unwrap();
    let mut rng = stream(5, Stream::SolverInit);
    let start = random_init(12, 3, &mut stream(5, Stream::SolverInit));
    let out = minimize_lagrangian(&sys, &spec, 0.0, &SolverConfig::default(), &mut rng).unwrap();
    assert!(l12_norm(&out.x) < 1e-6 * l12_norm(&start));
}

#[test]
fn inner_solve_descends_and_stays_nonnegative() {
    let inst = small_instance(6);
    let sys = inst.system();
    for fw in [Framework::Ls, Framework::Ml] {
        for step in [InnerStep::Proximal, InnerStep::Subgradient] {
            let spec = ConfidenceSpec::for_system(fw, &sys, 0.05).unwrap();
            let start = random_init(12, 3, &mut stream(6, Stream::SolverInit));
            let cfg = SolverConfig {
                init: Init::WarmStart(start.clone()),
                step,
                max_inner: 500,
                ..Default::default()
            };
            let lambda = if fw == Framework::Ls { 0.01 } else { 1.0 };
            let out = minimize_lagrangian(&sys, &spec, lambda, &cfg, &mut stream(0, Stream::SolverInit)).unwrap();
            let before = lagrangian(fw, &sys, &start, lambda, spec.epsilon).unwrap();
            assert!(out.lagrangian <= before, "{fw} {step:?}");
            assert!(out.x.iter().all(|v| *v >= 0.0));
            // running one more block from the result never increases L
            let again = SolverConfig {
                init: Init::WarmStart(out.x.clone()),
                ..cfg
            };
            let next = minimize_lagrangian(&sys, &spec, lambda, &again, &mut stream(0, Stream::SolverInit)).unwrap();
            assert!(next.lagrangian <= out.lagrangian + 1e-9 * out.lagrangian.abs());
        }
    }
}

#[test]
fn user_bracket_must_change_sign() {
    let inst = small_instance(7);
    let sys = inst.system();
    let spec = ConfidenceSpec::for_system(Framework::Ls, &sys, 0.05).unwrap();
    let cfg = SolverConfig {
        lambda_min: Some(10.0),
        lambda_max: Some(20.0),
        ..Default::default()
    };
    assert!(matches!(
        solve(&sys, &spec, &cfg, &mut stream(7, Stream::SolverInit)),
        Err(Error::Bracket { .. })
    ));
}

#[test]
fn trivial_radius_returns_zero() {
    let inst = small_instance(8);
    let sys = inst.system();
    let f0 = constraint(Framework::Ls, &sys, &Array2::zeros((12, 3))).unwrap();
    let spec = ConfidenceSpec::with_epsilon(Framework::Ls, 0.05, 2.0 * f0).unwrap();
    let r = solve(&sys, &spec, &SolverConfig::default(), &mut stream(8, Stream::SolverInit)).unwrap();
    assert_eq!(r.lambda_star, 0.0);
    assert!(r.x_star.iter().all(|v| *v == 0.0));
    assert!(r.kkt_satisfied());
}

#[test]
fn solve_is_deterministic() {
    let inst = small_instance(9);
    let sys = inst.system();
    let spec = ConfidenceSpec::for_system(Framework::Ml, &sys, 0.05).unwrap();
    let cfg = SolverConfig {
        max_inner: 400,
        max_outer: 10,
        ..Default::default()
    };
    let a = solve(&sys, &spec, &cfg, &mut stream(1, Stream::SolverInit)).unwrap();
    let b = solve(&sys, &spec, &cfg, &mut stream(1, Stream::SolverInit)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.objective_l12, l12_norm(&a.x_star));
    assert_eq!(a.trace.len(), a.outer_iters);
}

#[test]
fn multiplier_curve_is_mostly_monotone() {
    // g(X(λ)) should fall as λ grows; count violations rather than assert none
    let inst = small_instance(10);
    let sys = inst.system();
    let spec = ConfidenceSpec::for_system(Framework::Ls, &sys, 0.05).unwrap();
    let mut gs = Vec::new();
    for lambda in ccjs::divergence::log_grid(1e-5, 1.0, 12).unwrap() {
        let out = minimize_lagrangian(&sys, &spec, lambda, &SolverConfig::default(), &mut stream(1, Stream::SolverInit))
            .unwrap();
        gs.push(out.g);
    }
    let violations = gs.windows(2).filter(|w| w[1] > w[0] + 1e-6 * spec.epsilon).count();
    assert!(violations <= 1, "{gs:?}");
}

#[test]
fn brute_force_agrees_on_exact_data() {
    let a = array![[1.0, 0.0, 0.6, 0.0], [0.0, 1.0, 0.8, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let x = array![[0.0, 0.0], [0.0, 0.0], [4.0, 2.0], [0.0, 0.0]];
    let y = a.dot(&x);
    let sys = MmvSystem::new(vec![a.clone(), a], y).unwrap();
    let r = brute_force_r0(&sys, &ConfidenceSpec::with_epsilon(Framework::Ls, 0.05, 1e-8).unwrap()).unwrap();
    assert_eq!((r.r0, r.support), (1, vec![2]));
    assert!(r.constraint_value <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l12_triangle_inequality(a in prop::collection::vec(0.0f64..5.0, 12), b in prop::collection::vec(0.0f64..5.0, 12)) {
        let x = Array2::from_shape_vec((4, 3), a).unwrap();
        let z = Array2::from_shape_vec((4, 3), b).unwrap();
        prop_assert!(l12_norm(&(&x + &z)) <= l12_norm(&x) + l12_norm(&z) + 1e-12);
    }

    #[test]
    fn bracket_residuals_change_sign(seed in 0u64..10_000, ml: bool) {
        let fw = if ml { Framework::Ml } else { Framework::Ls };
        let inst = small_instance(seed);
        let sys = inst.system();
        let spec = ConfidenceSpec::for_system(fw, &sys, 0.05).unwrap();
        let cfg = SolverConfig { max_inner: 600, ..Default::default() };
        let b = find_bracket(&sys, &spec, &cfg, &mut stream(seed, Stream::SolverInit)).unwrap();
        prop_assert!(b.lambda_min < b.lambda_max);
        prop_assert!(b.g_at_min > 0.0 && b.g_at_max <= 0.0, "{} {}", b.g_at_min, b.g_at_max);
    }
}
