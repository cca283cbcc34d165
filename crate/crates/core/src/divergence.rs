//! I-divergence and KL divergence, the scalar bound function `G`, the
//! ℓ₁ bounds implied by a bounded I-divergence, and the moments of
//! `I(y‖λ)` for a Poisson count `y`.

use std::io::Write;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::rng::Rng;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "vectors have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!(
            "entries must be finite and nonnegative, found {v}"
        )));
    }
    Ok(())
}

/// One term `x log(x/y) + y − x`, with `0 log(0/y) = 0` and `+∞` when
/// `x > 0 = y`.
#[inline]
pub fn i_divergence_term(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        y
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln() + y - x
    }
}

/// `I(x‖y) = Σ x log(x/y) + y − x`; `+∞` when supp(x) ⊄ supp(y).
pub fn i_divergence(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(x.iter().zip(y).map(|(&a, &b)| i_divergence_term(a, b)).sum())
}

/// `D_KL(x‖y) = Σ x log(x/y)` for probability vectors.
pub fn kl_divergence(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    for (name, v) in [("x", x), ("y", y)] {
        let mass: f64 = v.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("{name} has ℓ₁ norm {mass}, expected 1")));
        }
    }
    Ok(x
        .iter()
        .zip(y)
        .map(|(&a, &b)| match (a == 0.0, b == 0.0) {
            (true, _) => 0.0,
            (false, true) => f64::INFINITY,
            (false, false) => a * (a / b).ln(),
        })
        .sum())
}

const G_SERIES_CUTOFF: f64 = 1e-8;

/// `G(z) = (1+u)(z + log(1+u) − u)/u` with `u = √(2z)`.
pub fn g_function(z: f64) -> Result<f64> {
    if !(z > 0.0) || z.is_nan() {
        return Err(Error::Domain(format!("G is defined for z > 0, got {z}")));
    }
    if z == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if z < G_SERIES_CUTOFF {
        return Ok(g_series(z));
    }
    let u = (2.0 * z).sqrt();
    Ok((1.0 + u) * log1p_remainder(u, z) / u)
}

/// Two-term expansion `2z/3 + (2z)^{3/2}/12` of G at the origin.
pub fn g_series(z: f64) -> f64 {
    2.0 * z / 3.0 + (2.0 * z).powf(1.5) / 12.0
}

/// `z + log(1+u) − u` where `z = u²/2`; summed as a series for small `u`
/// because the closed form cancels to a third-order quantity.
fn log1p_remainder(u: f64, z: f64) -> f64 {
    if u >= 0.1 {
        return z + u.ln_1p() - u;
    }
    let mut sum = 0.0;
    let mut power = u * u * u;
    let mut n = 3.0;
    loop {
        let term = power / n;
        sum += if (n as u64) % 2 == 1 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            return sum;
        }
        power *= u;
        n += 1.0;
    }
}

/// Right-hand sides of the bounds implied by `I(y‖λ) ≤ ε`, together with
/// the left-hand quantities they bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaBounds {
    /// `I(y‖λ) = Y·I(y/Y‖λ/Λ) + I(Y‖Λ)` holds to 1e-9 relative.
    pub split_ok: bool,
    /// Bound `ε/Y` on `I(y/Y‖λ/Λ)`.
    pub normalized_split_bound: f64,
    /// Bound `ε` on `I(Y‖Λ)`.
    pub mass_split_bound: f64,
    /// `√(2ε/Y)`, bounding `‖y/Y − λ/Λ‖₁`.
    pub pinsker_bound: f64,
    /// `√(2εY) + Y·G(2ε/Y)`, bounding `|Y − Λ|`.
    pub mass_bound: f64,
    /// `2√(2εY) + Y·G(2ε/Y)`, bounding `‖y − λ‖₁`.
    pub l1_bound: f64,
    pub normalized_divergence: f64,
    pub mass_divergence: f64,
    pub normalized_l1: f64,
    pub mass_gap: f64,
    pub l1_gap: f64,
}

impl LemmaBounds {
    /// Whether every bound holds for the observed quantities.
    pub fn all_hold(&self) -> bool {
        self.split_ok
            && self.normalized_divergence <= self.normalized_split_bound
            && self.mass_divergence <= self.mass_split_bound
            && self.normalized_l1 <= self.pinsker_bound
            && self.mass_gap <= self.mass_bound
            && self.l1_gap <= self.l1_bound
    }
}

/// Evaluates the I-divergence bounds for `y` against `lambda` at radius
/// `eps`.
pub fn lemma_bounds(y: &[f64], lambda: &[f64], eps: f64) -> Result<LemmaBounds> {
    check_pair(y, lambda)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {eps}")));
    }
    let big_y: f64 = y.iter().sum();
    if big_y == 0.0 {
        return Err(Error::Domain("bounds need ‖y‖₁ > 0".into()));
    }
    let total = i_divergence(y, lambda)?;
    if !(total <= eps) {
        return Err(Error::Contract(format!(
            "I(y‖λ) = {total} exceeds the radius {eps}"
        )));
    }
    // total is finite, so Λ > 0
    let big_l: f64 = lambda.iter().sum();
    let y_norm: Vec<f64> = y.iter().map(|v| v / big_y).collect();
    let l_norm: Vec<f64> = lambda.iter().map(|v| v / big_l).collect();
    let normalized_divergence = i_divergence(&y_norm, &l_norm)?;
    let mass_divergence = i_divergence_term(big_y, big_l);
    let split = big_y * normalized_divergence + mass_divergence;
    let scale = total.abs().max(split.abs()).max(1e-3 * f64::EPSILON * (big_y + big_l));
    let split_ok = (total - split).abs() <= 1e-9 * scale;

    let g = g_function(2.0 * eps / big_y)?;
    let root = (2.0 * eps * big_y).sqrt();
    Ok(LemmaBounds {
        split_ok,
        normalized_split_bound: eps / big_y,
        mass_split_bound: eps,
        pinsker_bound: (2.0 * eps / big_y).sqrt(),
        mass_bound: root + big_y * g,
        l1_bound: 2.0 * root + big_y * g,
        normalized_divergence,
        mass_divergence,
        normalized_l1: y_norm.iter().zip(&l_norm).map(|(a, b)| (a - b).abs()).sum(),
        mass_gap: (big_y - big_l).abs(),
        l1_gap: y.iter().zip(lambda).map(|(a, b)| (a - b).abs()).sum(),
    })
}

/// How a moment estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    SeriesTruncation,
    MonteCarlo,
}

impl MomentMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MomentMethod::SeriesTruncation => "series-truncation",
            MomentMethod::MonteCarlo => "monte-carlo",
        }
    }
}

impl std::str::FromStr for MomentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" | "series-truncation" => Ok(MomentMethod::SeriesTruncation),
            "mc" | "monte-carlo" => Ok(MomentMethod::MonteCarlo),
            other => Err(Error::Argument(format!("unknown moment method {other:?}"))),
        }
    }
}

/// Mean and variance of `I(y‖λ)` for `y ~ Poisson(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub lambda: f64,
    pub mean: f64,
    pub variance: f64,
    /// Series terms summed or samples drawn.
    pub num_terms_or_samples: usize,
    pub method: MomentMethod,
    pub budget: usize,
}

/// `ln k!`: exact summation below 30, Stirling series above.
fn ln_factorial(k: u64) -> f64 {
    if k < 30 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Moments of `I(y‖λ)`.
///
/// The series method sums the exact Poisson pmf outward from the mode until
/// the collected mass exceeds `1 − 1e-12` and ten consecutive terms on each
/// side contribute less than `1e-14`; `budget` caps the number of terms. The
/// Monte-Carlo method averages over `budget` draws from `rng`.
pub fn idiv_moments(lambda: f64, method: MomentMethod, budget: usize, rng: &mut Rng) -> Result<MomentEstimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("Poisson rate must be positive, got {lambda}")));
    }
    if budget == 0 {
        return Err(Error::Argument("moment budget must be at least 1".into()));
    }
    let (mean, variance, used) = match method {
        MomentMethod::SeriesTruncation => series_moments(lambda, budget),
        MomentMethod::MonteCarlo => mc_moments(lambda, budget, rng)?,
    };
    Ok(MomentEstimate {
        lambda,
        mean,
        variance,
        num_terms_or_samples: used,
        method,
        budget,
    })
}

fn series_moments(lambda: f64, budget: usize) -> (f64, f64, usize) {
    let mode = lambda.floor() as u64;
    let ln_lambda = lambda.ln();
    let ln_pmf = |k: u64| k as f64 * ln_lambda - lambda - ln_factorial(k);
    let mut terms: Vec<(f64, f64)> = Vec::new();
    let mut mass = 0.0;
    let small = |p: f64, i: f64| p * i.max(i * i).max(1.0) < 1e-14;

    let mut quiet_up = 0;
    let mut quiet_down = 0;
    let mut up = mode;
    let mut down = mode;
    let mut down_done = false;
    // mode term
    let p = ln_pmf(mode).exp();
    let i = i_divergence_term(mode as f64, lambda);
    terms.push((p, i));
    mass += p;
    while terms.len() < budget {
        let up_done = mass >= 1.0 - 1e-12 && quiet_up >= 10;
        if up_done && (down_done || (mass >= 1.0 - 1e-12 && quiet_down >= 10)) {
            break;
        }
        if !up_done {
            up += 1;
            let p = ln_pmf(up).exp();
            let i = i_divergence_term(up as f64, lambda);
            quiet_up = if small(p, i) { quiet_up + 1 } else { 0 };
            terms.push((p, i));
            mass += p;
        }
        if !down_done && terms.len() < budget {
            if down == 0 {
                down_done = true;
            } else {
                down -= 1;
                let p = ln_pmf(down).exp();
                let i = i_divergence_term(down as f64, lambda);
                quiet_down = if small(p, i) { quiet_down + 1 } else { 0 };
                terms.push((p, i));
                mass += p;
            }
        }
    }
    let mean: f64 = terms.iter().map(|(p, i)| p * i).sum();
    let variance: f64 = terms.iter().map(|(p, i)| p * (i - mean).powi(2)).sum();
    (mean, variance, terms.len())
}

fn mc_moments(lambda: f64, samples: usize, rng: &mut Rng) -> Result<(f64, f64, usize)> {
    let dist = Poisson::new(lambda).map_err(|e| Error::Domain(e.to_string()))?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for n in 1..=samples {
        let y: f64 = dist.sample(rng);
        let i = i_divergence_term(y, lambda);
        let delta = i - mean;
        mean += delta / n as f64;
        m2 += delta * (i - mean);
    }
    let variance = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
    Ok((mean, variance, samples))
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::Argument(format!(
            "log grid needs 0 < lo <= hi and n >= 1, got [{lo}, {hi}] with n={n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

/// Moment estimates on every rate of `lambdas`.
pub fn moment_curve(lambdas: &[f64], method: MomentMethod, budget: usize, rng: &mut Rng) -> Result<Vec<MomentEstimate>> {
    lambdas.iter().map(|&l| idiv_moments(l, method, budget, rng)).collect()
}

/// Writes `lambda,mean,variance,method,budget` rows.
pub fn write_moments_csv<W: Write>(out: W, rows: &[MomentEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "mean", "variance", "method", "budget"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.mean),
            fmt_f64(r.variance),
            r.method.as_str().to_string(),
            r.budget.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
