use approx::assert_relative_eq;
use ccjs::divergence::{
    g_function, g_series, i_divergence, idiv_moments, kl_divergence, lemma_bounds, log_grid, MomentMethod,
};
use ccjs::rng::{stream, Stream};
use ccjs::Error;
use proptest::prelude::*;
use rand_distr::{Distribution, Poisson};

#[test]
fn divergence_values() {
    assert_relative_eq!(i_divergence(&[2.0], &[1.0]).unwrap(), 2.0 * 2f64.ln() - 1.0, epsilon = 1e-15);
    assert_eq!(i_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), f64::INFINITY);
    assert_eq!(i_divergence(&[0.0, 3.0], &[0.5, 3.0]).unwrap(), 0.5);
    assert!(matches!(i_divergence(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    assert!(matches!(i_divergence(&[-1.0], &[1.0]), Err(Error::Domain(_))));
}

#[test]
fn kl_values() {
    let v = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    assert_relative_eq!(v, 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln(), epsilon = 1e-15);
    assert_relative_eq!(v, 0.143_841_036_2, epsilon = 1e-10);
    assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    assert!(matches!(kl_divergence(&[0.5, 0.6], &[0.5, 0.5]), Err(Error::Domain(_))));
}

#[test]
fn g_values() {
    assert_relative_eq!(g_function(0.5).unwrap(), 2.0 * (2f64.ln() - 0.5), epsilon = 1e-14);
    assert!(g_function(1e-10).unwrap() < 1e-9);
    for z in log_grid(1e-6, 1e3, 200).unwrap() {
        assert!(g_function(z).unwrap() > 0.0, "G({z})");
    }
    assert!(g_function(0.0).is_err());
    assert!(g_function(-1.0).is_err());
}

#[test]
fn g_series_agrees_with_formula() {
    for z in log_grid(1e-8, 1e-6, 50).unwrap() {
        let u = (2.0 * z).sqrt();
        // the closed form evaluated with log1p keeps enough digits here
        let formula = (1.0 + u) * (z + u.ln_1p() - u) / u;
        assert!((formula - g_series(z)).abs() < 1e-10, "z={z}");
        assert!((g_function(z).unwrap() - g_series(z)).abs() < 1e-10);
    }
}

#[test]
fn bound_example() {
    let (y, lam) = ([3.0, 1.0], [2.0, 2.0]);
    let eps = i_divergence(&y, &lam).unwrap();
    assert_relative_eq!(eps, 3.0 * 1.5f64.ln() + 0.5f64.ln(), epsilon = 1e-15);
    let b = lemma_bounds(&y, &lam, eps).unwrap();
    assert_eq!(b.l1_gap, 2.0);
    let expected = 2.0 * (8.0 * eps).sqrt() + 4.0 * g_function(eps / 2.0).unwrap();
    assert_relative_eq!(b.l1_bound, expected, epsilon = 1e-12);
    assert!(b.all_hold());
}

#[test]
fn bound_errors() {
    assert!(matches!(lemma_bounds(&[0.0, 0.0], &[1.0, 1.0], 5.0), Err(Error::Domain(_))));
    assert!(matches!(lemma_bounds(&[5.0], &[1.0], 0.1), Err(Error::Contract(_))));
}

#[test]
fn moments_at_large_rate() {
    let est = idiv_moments(100.0, MomentMethod::SeriesTruncation, 100_000, &mut stream(0, Stream::Analysis)).unwrap();
    assert!((0.48..=0.53).contains(&est.mean), "{est:?}");
    assert!((0.45..=0.56).contains(&est.variance), "{est:?}");
}

#[test]
fn small_rate_series_matches_direct_sum() {
    let lambda: f64 = 0.01;
    let est = idiv_moments(lambda, MomentMethod::SeriesTruncation, 10_000, &mut stream(0, Stream::Analysis)).unwrap();
    // direct pmf recursion over y = 0..40
    let (mut pmf, mut mean, mut second) = ((-lambda).exp(), 0.0, 0.0);
    for y in 0..40u32 {
        let yf = f64::from(y);
        let v = i_divergence(&[yf], &[lambda]).unwrap();
        mean += pmf * v;
        second += pmf * v * v;
        pmf *= lambda / (yf + 1.0);
    }
    assert_relative_eq!(est.mean, mean, max_relative = 1e-10);
    assert_relative_eq!(est.variance, second - mean * mean, max_relative = 1e-9);
}

#[test]
fn monte_carlo_tracks_series() {
    let mut rng = stream(3, Stream::Analysis);
    for lambda in [0.5, 5.0, 50.0] {
        let s = idiv_moments(lambda, MomentMethod::SeriesTruncation, 100_000, &mut rng).unwrap();
        let m = idiv_moments(lambda, MomentMethod::MonteCarlo, 200_000, &mut rng).unwrap();
        let se = (s.variance / 200_000.0).sqrt();
        assert!((s.mean - m.mean).abs() < 5.0 * se, "λ={lambda}: {} vs {}", s.mean, m.mean);
    }
    assert!(idiv_moments(0.0, MomentMethod::MonteCarlo, 10, &mut rng).is_err());
}

fn positive_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|d| (prop::collection::vec(1e-3f64..50.0, d), prop::collection::vec(1e-3f64..50.0, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn divergence_is_nonnegative((x, y) in positive_pair()) {
        prop_assert!(i_divergence(&x, &y).unwrap() >= 0.0);
        prop_assert_eq!(i_divergence(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn equal_mass_divergence_is_kl((x, y) in positive_pair()) {
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let xn: Vec<f64> = x.iter().map(|v| v / sx).collect();
        let yn: Vec<f64> = y.iter().map(|v| v / sy).collect();
        let kl = kl_divergence(&xn, &yn).unwrap();
        let idiv = i_divergence(&xn, &yn).unwrap();
        prop_assert!((kl - idiv).abs() <= 1e-12 * (1.0 + kl));
    }

    #[test]
    fn bounds_hold_on_positive_pairs((y, lam) in positive_pair()) {
        let eps = i_divergence(&y, &lam).unwrap();
        prop_assume!(eps > 0.0);
        let b = lemma_bounds(&y, &lam, eps).unwrap();
        prop_assert!(b.split_ok);
        prop_assert!(b.normalized_l1 <= b.pinsker_bound);
        prop_assert!(b.mass_gap <= b.mass_bound);
        prop_assert!(b.l1_gap <= b.l1_bound);
    }

    #[test]
    fn bounds_hold_on_poisson_draws(seed: u64, m in 1usize..=8) {
        let mut rng = stream(seed, Stream::Analysis);
        let lam: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..50.0)).collect();
        let y: Vec<f64> = lam.iter().map(|&l| Poisson::new(l).unwrap().sample(&mut rng)).collect();
        let eps = i_divergence(&y, &lam).unwrap();
        prop_assume!(eps > 0.0 && y.iter().sum::<f64>() > 0.0);
        let b = lemma_bounds(&y, &lam, eps).unwrap();
        prop_assert!(b.l1_gap <= b.l1_bound);
    }

    #[test]
    fn g_is_increasing(a in 1e-9f64..1e3, b in 1e-9f64..1e3) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi > lo * (1.0 + 1e-9));
        prop_assert!(g_function(lo).unwrap() <= g_function(hi).unwrap());
    }
}
