use ndarray::{Array1, Array2, ArrayView1};

use crate::confidence::{ConfidenceSpec, Framework};
use crate::divergence::i_divergence_term;
use crate::error::{Error, Result};
use crate::problem::MmvSystem;

pub const BRUTE_FORCE_MAX_K: usize = 12;
pub const BRUTE_FORCE_MAX_N: usize = 3;

const MAX_SWEEPS: usize = 200_000;
const SWEEP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    /// Minimizer of the constraint function on the first feasible support.
    pub x: Array2<f64>,
    pub r0: usize,
    pub support: Vec<usize>,
    pub constraint_value: f64,
}

/// Smallest row support on which the constraint can be met, found by
/// enumerating supports in order of increasing size.
pub fn brute_force_r0(system: &MmvSystem, spec: &ConfidenceSpec) -> Result<BruteForceResult> {
    let (_, k, n) = system.dims();
    if k > BRUTE_FORCE_MAX_K || n > BRUTE_FORCE_MAX_N {
        return Err(Error::Guard(format!(
            "K={k}, N={n} exceeds the limits K <= {BRUTE_FORCE_MAX_K}, N <= {BRUTE_FORCE_MAX_N}"
        )));
    }
    for size in 0..=k {
        let mut support: Vec<usize> = (0..size).collect();
        loop {
            let (x, value) = restricted_minimum(system, spec.framework, &support);
            if value <= spec.epsilon {
                return Ok(BruteForceResult {
                    x,
                    r0: size,
                    support,
                    constraint_value: value,
                });
            }
            if !next_combination(&mut support, k) {
                break;
            }
        }
    }
    // every support including the full one is infeasible
    let all: Vec<usize> = (0..k).collect();
    let (_, value) = restricted_minimum(system, spec.framework, &all);
    Err(Error::Contract(format!(
        "constraint cannot be met on any support: minimum {value} exceeds radius {}",
        spec.epsilon
    )))
}

fn next_combination(c: &mut [usize], k: usize) -> bool {
    let s = c.len();
    let mut i = s;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if c[i] < k - s + i {
            break;
        }
    }
    c[i] += 1;
    for j in i + 1..s {
        c[j] = c[j - 1] + 1;
    }
    true
}

/// Minimizes the constraint over nonnegative matrices supported on
/// `support`; columns decouple.
fn restricted_minimum(system: &MmvSystem, framework: Framework, support: &[usize]) -> (Array2<f64>, f64) {
    let (m, k, n) = system.dims();
    let mut x = Array2::zeros((k, n));
    let mut total = 0.0;
    for i in 0..n {
        let a = &system.matrices()[i];
        let b = Array2::from_shape_fn((m, support.len()), |(j, t)| a[[j, support[t]]]);
        let y = system.count_column(i);
        let (coef, value) = match framework {
            Framework::Ls => nnls(&b, y),
            Framework::Ml => poisson_fit(&b, y),
        };
        total += value;
        for (t, &row) in support.iter().enumerate() {
            x[[row, i]] = coef[t];
        }
    }
    (x, total)
}

/// Cyclic coordinate descent for `min ‖Bc − y‖²` over `c ≥ 0`.
fn nnls(b: &Array2<f64>, y: ArrayView1<f64>) -> (Array1<f64>, f64) {
    let s = b.ncols();
    let mut c = Array1::<f64>::zeros(s);
    let mut r: Array1<f64> = -&y;
    let norms: Vec<f64> = (0..s).map(|t| b.column(t).dot(&b.column(t))).collect();
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0f64;
        for t in 0..s {
            if norms[t] == 0.0 {
                continue;
            }
            let col = b.column(t);
            let new = (c[t] - col.dot(&r) / norms[t]).max(0.0);
            let d = new - c[t];
            if d != 0.0 {
                r.scaled_add(d, &col);
                c[t] = new;
                change = change.max(d.abs() / (1.0 + new.abs()));
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    let value = r.dot(&r);
    (c, value)
}

/// Cyclic exact coordinate minimization of `I(y‖Bc)` over `c ≥ 0`.
fn poisson_fit(b: &Array2<f64>, y: ArrayView1<f64>) -> (Array1<f64>, f64) {
    let (m, s) = b.dim();
    // a positive count on a row the support cannot reach is infeasible
    if (0..m).any(|j| y[j] > 0.0 && b.row(j).iter().all(|v| *v == 0.0)) {
        return (Array1::zeros(s), f64::INFINITY);
    }
    let mass: f64 = y.sum();
    let mut c = Array1::<f64>::zeros(s);
    if mass > 0.0 && s > 0 {
        c.fill(mass / b.sum().max(f64::MIN_POSITIVE));
    }
    let mut rates = b.dot(&c);
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0f64;
        for t in 0..s {
            let col = b.column(t);
            let rest: Array1<f64> = &rates - &(&col * c[t]);
            let new = coordinate_root(col, rest.view(), y);
            let d = new - c[t];
            if d != 0.0 {
                rates = rest + &col * new;
                c[t] = new;
                change = change.max(d.abs() / (1.0 + new.abs()));
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    let value = y.iter().zip(&rates).map(|(&yj, &r)| i_divergence_term(yj, r)).sum();
    (c, value)
}

/// Minimizer over `v ≥ 0` of `Σ_j (rest_j + col_j v) − y_j log(rest_j + col_j v)`.
fn coordinate_root(col: ArrayView1<f64>, rest: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let slope = |v: f64| -> f64 {
        let mut d = 0.0;
        for j in 0..col.len() {
            if col[j] == 0.0 {
                continue;
            }
            let rate = rest[j] + col[j] * v;
            d += col[j];
            if y[j] > 0.0 {
                d -= y[j] * col[j] / rate;
            }
        }
        d
    };
    if col.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0f64;
    while slope(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        let mut empty: Vec<usize> = vec![];
        assert!(!next_combination(&mut empty, 3));
    }

    #[test]
    fn nnls_matches_closed_form() {
        let b = array![[1.0], [1.0]];
        let (c, v) = nnls(&b, array![1.0, 3.0].view());
        assert!((c[0] - 2.0).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let (c, _) = nnls(&b, array![-1.0, -3.0].view());
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn poisson_fit_single_column() {
        // minimizer of Σ(b_j c − y_j log b_j c) is c = Σy / Σb
        let b = array![[1.0], [2.0]];
        let (c, _) = poisson_fit(&b, array![3.0, 5.0].view());
        assert!((c[0] - 8.0 / 3.0).abs() < 1e-10);
        let (_, v) = poisson_fit(&array![[0.0], [1.0]], array![1.0, 0.0].view());
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn guard_and_empty_support() {
        let big = MmvSystem::new(vec![Array2::eye(13)], Array2::zeros((13, 1))).unwrap();
        let spec = ConfidenceSpec::with_epsilon(Framework::Ls, 0.05, 1.0).unwrap();
        assert!(matches!(brute_force_r0(&big, &spec), Err(Error::Guard(_))));
        let sys = MmvSystem::new(vec![Array2::eye(3)], array![[1.0], [0.0], [0.0]]).unwrap();
        let r = brute_force_r0(&sys, &ConfidenceSpec::with_epsilon(Framework::Ls, 0.05, 5.0).unwrap()).unwrap();
        assert_eq!(r.r0, 0);
        assert!(r.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn consistent_single_row() {
        let a = array![[1.0, 0.0, 0.6], [0.0, 1.0, 0.8]];
        let x = array![[0.0], [0.0], [5.0]];
        let y = a.dot(&x);
        let sys = MmvSystem::new(vec![a], y).unwrap();
        for fw in [Framework::Ls, Framework::Ml] {
            let r = brute_force_r0(&sys, &ConfidenceSpec::with_epsilon(fw, 0.05, 1e-6).unwrap()).unwrap();
            assert_eq!((r.r0, r.support.clone()), (1, vec![2]), "{fw}");
        }
    }
}
