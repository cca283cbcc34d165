//! Confidence-constrained ℓ₁,₂ minimization.
//!
//! `minimize ‖X‖₁,₂ subject to g(X) = f(X) − ε ≤ 0, X ≥ 0` is solved through
//! its Lagrangian `L(X; λ) = ‖X‖₁,₂ + λ g(X)`: an outer bisection on the
//! multiplier λ drives `g(X(λ))` to zero, and every inner problem is
//! handled by projected subgradient descent with a backtracking step.

mod brute;

pub use brute::{brute_force_r0, BruteForceResult, BRUTE_FORCE_MAX_K, BRUTE_FORCE_MAX_N};

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::confidence::{constraint, ConfidenceSpec, Framework};
use crate::error::{Error, Result};
use crate::format::to_json_string;
use crate::problem::MmvSystem;
use crate::rng::Rng;

/// `Σ_l ‖row_l‖₂`.
pub fn l12_norm(x: &Array2<f64>) -> f64 {
    x.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).sum()
}

/// Starting point of the inner iterations.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Entries drawn from Uniform(0.5, 1.5).
    RandomUniform,
    WarmStart(Array2<f64>),
}

/// Where each inner solve of the bisection starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restart {
    /// From the previous inner solution.
    Warm,
    /// From a fresh random point.
    Randomize,
}

/// Update rule of the inner iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStep {
    /// Projected subgradient step `(X − α∇L)₊`.
    Subgradient,
    /// Projected gradient step on the data term followed by row shrinkage.
    Proximal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Multiplier bracket; searched for when either end is `None`.
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Outer precision; by default chosen so the bisection runs 30 steps.
    pub eta1: Option<f64>,
    /// Feasibility tolerance on `|g|`; defaults to `1e-3·ε`.
    pub eta2: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub init: Init,
    pub restart: Restart,
    pub step: InnerStep,
    /// Rates below this are clamped inside the I-divergence.
    pub positivity_floor: f64,
    /// Stop an inner solve once `|g(X)| ≤ η₂`.
    pub stop_on_boundary: bool,
    /// Sufficient-decrease constant of the backtracking test.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Relative step norm below which an inner solve stops.
    pub step_tol: f64,
    /// Doubling/halving budget of the bracket search.
    pub bracket_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_min: None,
            lambda_max: None,
            eta1: None,
            eta2: None,
            c1: 10.0,
            c2: 0.5,
            max_outer: 30,
            max_inner: 3000,
            init: Init::RandomUniform,
            restart: Restart::Warm,
            step: InnerStep::Proximal,
            positivity_floor: 1e-12,
            stop_on_boundary: false,
            armijo: 0.5,
            max_backtracks: 60,
            step_tol: 1e-14,
            bracket_steps: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 1.0) {
            return Err(Error::Argument(format!("c1 must exceed 1, got {}", self.c1)));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(Error::Argument(format!("c2 must lie in (0, 1), got {}", self.c2)));
        }
        if !(self.armijo > 0.0 && self.armijo <= 1.0) {
            return Err(Error::Argument(format!("Armijo constant must lie in (0, 1], got {}", self.armijo)));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Argument("iteration caps must be positive".into()));
        }
        if let (Some(lo), Some(hi)) = (self.lambda_min, self.lambda_max) {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Bracket { lo, hi, reason: "need 0 <= lambda_min < lambda_max".into() });
            }
        }
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Argument(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(self.positivity_floor >= 0.0) {
            return Err(Error::Argument("positivity floor must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One bisection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer_iter: usize,
    pub lambda: f64,
    pub g_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x_star: Array2<f64>,
    pub lambda_star: f64,
    /// `f(X*) − ε`.
    pub g_residual: f64,
    pub objective_l12: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub trace: Vec<TraceEntry>,
    pub epsilon: f64,
    pub eta2: f64,
    pub bracket: Option<(f64, f64)>,
}

impl SolverResult {
    /// Complementary slackness within tolerance: `λ*·g = 0` up to `η₂`.
    pub fn kkt_satisfied(&self) -> bool {
        self.g_residual.abs() <= self.eta2 || (self.lambda_star == 0.0 && self.g_residual <= 0.0)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda_star": self.lambda_star,
            "g_residual": self.g_residual,
            "objective": self.objective_l12,
            "outer_iters": self.outer_iters,
            "inner_iters_total": self.inner_iters_total,
            "epsilon": self.epsilon,
            "eta2": self.eta2,
            "shape": [self.x_star.nrows(), self.x_star.ncols()],
            "X": self.x_star.iter().copied().collect::<Vec<_>>(),
            "trace": self.trace.iter().map(|t| serde_json::json!([t.outer_iter, t.lambda, t.g_value])).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(to_json_string(&self.to_json_value())?)
    }
}

fn check_nonneg(x: &Array2<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(Error::Domain("iterate must be finite and nonnegative".into()))
    }
}

/// `‖new‖₁,₂ − ‖old‖₁,₂` accumulated row by row without cancellation.
fn l12_change(old: &Array2<f64>, new: &Array2<f64>) -> f64 {
    old.axis_iter(Axis(0))
        .zip(new.axis_iter(Axis(0)))
        .map(|(a, b)| {
            let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
            let sum = na + nb;
            if sum == 0.0 {
                0.0
            } else {
                Zip::from(&a).and(&b).fold(0.0, |acc, &u, &v| acc + (v - u) * (v + u)) / sum
            }
        })
        .sum()
}

/// Row term of the descent direction. On a zero row the element of the
/// unit ball is chosen to cancel the part of the data gradient that would
/// grow the row, so the row only leaves zero when that part exceeds 1 in
/// norm.
fn add_descent_row_term(x: &Array2<f64>, grad: &mut Array2<f64>) {
    for (row, mut g) in x.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))) {
        let norm = row.dot(&row).sqrt();
        if norm != 0.0 {
            g.scaled_add(1.0 / norm, &row);
        } else {
            let push = g.iter().map(|v| (-v).max(0.0).powi(2)).sum::<f64>().sqrt();
            let scale = if push > 1.0 { 1.0 / push } else { 1.0 };
            g.mapv_inplace(|v| if v < 0.0 { v - scale * v } else { v });
        }
    }
}

fn add_row_term(x: &Array2<f64>, grad: &mut Array2<f64>) {
    for (row, mut g) in x.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))) {
        let norm = row.dot(&row).sqrt();
        if norm != 0.0 {
            g.scaled_add(1.0 / norm, &row);
        }
    }
}

/// Subgradient of the least-squares Lagrangian; the row-norm term is zero
/// on rows that are exactly zero.
pub fn subgradient_ls(system: &MmvSystem, x: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    system.check_shape(x)?;
    check_nonneg(x)?;
    let model = Model::new(system, Framework::Ls, 0.0);
    let mut rates = model.zeros_rates();
    model.rates(x, &mut rates);
    let mut grad = Array2::zeros(x.dim());
    model.fit_gradient(&rates, lambda, &mut grad);
    add_row_term(x, &mut grad);
    Ok(grad)
}

/// Subgradient of the I-divergence Lagrangian.
pub fn subgradient_ml(system: &MmvSystem, x: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    system.check_shape(x)?;
    check_nonneg(x)?;
    let model = Model::new(system, Framework::Ml, 0.0);
    let mut rates = model.zeros_rates();
    model.rates(x, &mut rates);
    for ((j, i), &r) in rates.indexed_iter() {
        if r == 0.0 && system.counts()[[j, i]] > 0.0 {
            return Err(Error::Singularity { row: j, column: i });
        }
    }
    let mut grad = Array2::zeros(x.dim());
    model.fit_gradient(&rates, lambda, &mut grad);
    add_row_term(x, &mut grad);
    Ok(grad)
}

pub fn subgradient(framework: Framework, system: &MmvSystem, x: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    match framework {
        Framework::Ls => subgradient_ls(system, x, lambda),
        Framework::Ml => subgradient_ml(system, x, lambda),
    }
}

/// `L(X; λ) = ‖X‖₁,₂ + λ (f(X) − ε)`.
pub fn lagrangian(framework: Framework, system: &MmvSystem, x: &Array2<f64>, lambda: f64, epsilon: f64) -> Result<f64> {
    let f = constraint(framework, system, x)?;
    Ok(l12_norm(x) + lambda * (f - epsilon))
}

/// Per-system kernels shared by the inner iterations.
struct Model<'a> {
    system: &'a MmvSystem,
    framework: Framework,
    floor: f64,
}

impl<'a> Model<'a> {
    fn new(system: &'a MmvSystem, framework: Framework, floor: f64) -> Self {
        Self { system, framework, floor }
    }

    fn zeros_rates(&self) -> Array2<f64> {
        Array2::zeros(self.system.counts().dim())
    }

    fn rates(&self, x: &Array2<f64>, out: &mut Array2<f64>) {
        for (i, a) in self.system.matrices().iter().enumerate() {
            general_mat_vec_mul(1.0, a, &x.column(i), 0.0, &mut out.column_mut(i));
        }
    }

    /// `f` from precomputed rates; I-divergence rates are clamped at the
    /// floor.
    fn fit(&self, rates: &Array2<f64>) -> f64 {
        let y = self.system.counts();
        match self.framework {
            Framework::Ls => Zip::from(rates).and(y).fold(0.0, |acc, &r, &c| acc + (r - c) * (r - c)),
            Framework::Ml => Zip::from(rates).and(y).fold(0.0, |acc, &r, &c| {
                let r = r.max(self.floor);
                acc + if c == 0.0 { r } else { c * (c / r).ln() + r - c }
            }),
        }
    }

    /// `f(new) − f(old)` summed termwise from the rate differences, which
    /// keeps the change accurate when both values are large. A positive
    /// count meeting a rate at or below the floor makes the change `+∞`.
    fn fit_change(&self, old: &Array2<f64>, new: &Array2<f64>) -> f64 {
        let y = self.system.counts();
        match self.framework {
            Framework::Ls => Zip::from(old).and(new).and(y).fold(0.0, |acc, &r, &t, &c| {
                let d = t - r;
                acc + d * (d + 2.0 * (r - c))
            }),
            Framework::Ml => Zip::from(old).and(new).and(y).fold(0.0, |acc, &r, &t, &c| {
                if c > 0.0 && t <= self.floor {
                    // leaving the domain of the I-divergence
                    return f64::INFINITY;
                }
                let (r, t) = (r.max(self.floor), t.max(self.floor));
                let d = t - r;
                acc + if c == 0.0 { d } else { d - c * (d / r).ln_1p() }
            }),
        }
    }

    /// Writes `λ∇f` into `out`.
    fn fit_gradient(&self, rates: &Array2<f64>, lambda: f64, out: &mut Array2<f64>) {
        let y = self.system.counts();
        let mut w = ndarray::Array1::<f64>::zeros(rates.nrows());
        for (i, a) in self.system.matrices().iter().enumerate() {
            match self.framework {
                Framework::Ls => Zip::from(&mut w)
                    .and(rates.column(i))
                    .and(y.column(i))
                    .for_each(|w, &r, &c| *w = 2.0 * lambda * (r - c)),
                Framework::Ml => Zip::from(&mut w)
                    .and(rates.column(i))
                    .and(y.column(i))
                    .for_each(|w, &r, &c| *w = lambda * (1.0 - if c == 0.0 { 0.0 } else { c / r.max(self.floor) })),
            }
            general_mat_vec_mul(1.0, &a.t(), &w, 0.0, &mut out.column_mut(i));
        }
    }
}

/// Why an inner solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStop {
    /// `|g(X)| ≤ η₂`.
    Boundary,
    MaxIterations,
    /// Relative step norm fell below the tolerance.
    StepStall,
    /// No step length passed the sufficient-decrease test.
    LineSearch,
}

/// Result of minimizing the Lagrangian for one multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolve {
    pub x: Array2<f64>,
    pub lambda: f64,
    /// `f(X) − ε` at the returned point.
    pub g: f64,
    /// `f(X) − ε` at the starting point.
    pub g_start: f64,
    pub lagrangian: f64,
    pub iterations: usize,
    pub stop: InnerStop,
    /// Step length in effect at exit.
    pub alpha: f64,
}

impl InnerSolve {
    /// Whether `X(λ)` is taken to violate the constraint, which sends the
    /// bisection to larger multipliers.
    ///
    /// A solve that stopped on the boundary is classified by the side it
    /// started from: the descent crossed the boundary, so the minimizer lies
    /// on the other side.
    fn above(&self, eta2: f64) -> bool {
        if self.stop == InnerStop::Boundary && self.g_start.abs() > eta2 {
            self.g_start < 0.0
        } else {
            self.g > 0.0
        }
    }
}

/// Uniform(0.5, 1.5) starting matrix.
pub fn random_init(k: usize, n: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((k, n), || rng.random_range(0.5..1.5))
}

/// Consecutive negligible steps that end an inner solve.
const STALL_STEPS: usize = 20;

struct Inner<'a> {
    model: Model<'a>,
    config: &'a SolverConfig,
    epsilon: f64,
    eta2: f64,
}

impl Inner<'_> {
    /// Backtracks on `(X − α∇)₊` until `L` decreases by `σ⟨∇, X − X⁺⟩`.
    ///
    /// Returns the accepted fit value.
    #[allow(clippy::too_many_arguments)]
    fn subgradient_step(
        &self,
        x: &Array2<f64>,
        grad: &Array2<f64>,
        rates: &Array2<f64>,
        lambda: f64,
        alpha: &mut f64,
        trial: &mut Array2<f64>,
        trial_rates: &mut Array2<f64>,
    ) -> Option<f64> {
        let cfg = self.config;
        for _ in 0..=cfg.max_backtracks {
            Zip::from(&mut *trial)
                .and(x)
                .and(grad)
                .for_each(|t, &xv, &gv| *t = (xv - *alpha * gv).max(0.0));
            self.model.rates(trial, trial_rates);
            let change = l12_change(x, trial) + lambda * self.model.fit_change(rates, trial_rates);
            let decrease = Zip::from(grad).and(x).and(&*trial).fold(0.0, |acc, &g, &a, &b| acc + g * (a - b));
            if change <= -cfg.armijo * decrease {
                return Some(self.model.fit(trial_rates));
            }
            *alpha *= cfg.c2;
        }
        None
    }

    /// Backtracks on the row-shrunk point `S_α((X − αλ∇f)₊)` until the
    /// quadratic upper model of `λf` holds.
    #[allow(clippy::too_many_arguments)]
    fn proximal_step(
        &self,
        x: &Array2<f64>,
        grad: &Array2<f64>,
        rates: &Array2<f64>,
        lambda: f64,
        alpha: &mut f64,
        trial: &mut Array2<f64>,
        trial_rates: &mut Array2<f64>,
    ) -> Option<f64> {
        let cfg = self.config;
        for _ in 0..=cfg.max_backtracks {
            Zip::from(&mut *trial)
                .and(x)
                .and(grad)
                .for_each(|t, &xv, &gv| *t = (xv - *alpha * gv).max(0.0));
            for mut row in trial.axis_iter_mut(Axis(0)) {
                let norm = row.dot(&row).sqrt();
                let keep = if norm > *alpha { 1.0 - *alpha / norm } else { 0.0 };
                row.mapv_inplace(|v| v * keep);
            }
            self.model.rates(trial, trial_rates);
            let (lin, sq) = Zip::from(grad)
                .and(x)
                .and(&*trial)
                .fold((0.0, 0.0), |(l, q), &g, &a, &b| (l + g * (b - a), q + (b - a) * (b - a)));
            if lambda * self.model.fit_change(rates, trial_rates) <= lin + sq / (2.0 * *alpha) {
                return Some(self.model.fit(trial_rates));
            }
            *alpha *= cfg.c2;
        }
        None
    }

    fn run(&self, x0: Array2<f64>, lambda: f64, alpha: &mut f64) -> Result<InnerSolve> {
        let cfg = self.config;
        let mut x = x0;
        let mut rates = self.model.zeros_rates();
        self.model.rates(&x, &mut rates);
        let mut fit = self.model.fit(&rates);
        let value = l12_norm(&x) + lambda * (fit - self.epsilon);
        if !value.is_finite() {
            return Err(Error::Initialization(value));
        }
        let g_start = fit - self.epsilon;
        let mut grad = Array2::zeros(x.dim());
        let mut trial = Array2::zeros(x.dim());
        let mut trial_rates = self.model.zeros_rates();
        let mut stop = InnerStop::MaxIterations;
        let mut iterations = 0;
        let mut quiet = 0;
        while iterations < cfg.max_inner {
            if cfg.stop_on_boundary && (fit - self.epsilon).abs() <= self.eta2 {
                stop = InnerStop::Boundary;
                break;
            }
            self.model.fit_gradient(&rates, lambda, &mut grad);
            *alpha *= cfg.c1;
            let accepted = match cfg.step {
                InnerStep::Subgradient => {
                    add_descent_row_term(&x, &mut grad);
                    self.subgradient_step(&x, &grad, &rates, lambda, alpha, &mut trial, &mut trial_rates)
                }
                InnerStep::Proximal => self.proximal_step(&x, &grad, &rates, lambda, alpha, &mut trial, &mut trial_rates),
            };
            let Some(trial_fit) = accepted else {
                stop = InnerStop::LineSearch;
                break;
            };
            iterations += 1;
            let step = Zip::from(&x).and(&trial).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b)).sqrt();
            let size = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut rates, &mut trial_rates);
            fit = trial_fit;
            quiet = if step < cfg.step_tol * (1.0 + size) { quiet + 1 } else { 0 };
            if quiet >= STALL_STEPS {
                stop = InnerStop::StepStall;
                break;
            }
        }
        let lagrangian = l12_norm(&x) + lambda * (fit - self.epsilon);
        Ok(InnerSolve {
            x,
            lambda,
            g: fit - self.epsilon,
            g_start,
            lagrangian,
            iterations,
            stop,
            alpha: *alpha,
        })
    }
}

fn resolve_eta2(config: &SolverConfig, spec: &ConfidenceSpec) -> f64 {
    config.eta2.unwrap_or(1e-3 * spec.epsilon)
}

fn check_inputs(system: &MmvSystem, spec: &ConfidenceSpec, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if !(spec.epsilon > 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {}", spec.epsilon)));
    }
    if let Init::WarmStart(x) = &config.init {
        system.check_shape(x)?;
        check_nonneg(x)?;
    }
    Ok(())
}

fn start_point(system: &MmvSystem, config: &SolverConfig, rng: &mut Rng) -> Array2<f64> {
    let (_, k, n) = system.dims();
    match &config.init {
        Init::RandomUniform => random_init(k, n, rng),
        Init::WarmStart(x) => x.clone(),
    }
}

/// Approximately minimizes `L(·; λ)` over the nonnegative orthant from the
/// configured starting point.
pub fn minimize_lagrangian(
    system: &MmvSystem,
    spec: &ConfidenceSpec,
    lambda: f64,
    config: &SolverConfig,
    rng: &mut Rng,
) -> Result<InnerSolve> {
    check_inputs(system, spec, config)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("multiplier must be nonnegative, got {lambda}")));
    }
    let inner = Inner {
        model: Model::new(system, spec.framework, config.positivity_floor),
        config,
        epsilon: spec.epsilon,
        eta2: resolve_eta2(config, spec),
    };
    let mut alpha = 1.0;
    inner.run(start_point(system, config, rng), lambda, &mut alpha)
}

/// A multiplier bracket with the inner solves at its ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Constraint residuals of the inner solves at the two ends.
    pub g_at_min: f64,
    pub g_at_max: f64,
    /// Inner solve at the most recent multiplier tried.
    pub last: InnerSolve,
    pub inner_iters: usize,
    pub steps: usize,
}

struct Search<'a> {
    inner: Inner<'a>,
    inner_iters: usize,
}

impl Search<'_> {
    fn solve_at(&mut self, lambda: f64, start: Array2<f64>) -> Result<InnerSolve> {
        let mut alpha = 1.0;
        let out = self.inner.run(start, lambda, &mut alpha)?;
        self.inner_iters += out.iterations;
        Ok(out)
    }

    fn next_start(&self, previous: &InnerSolve, rng: &mut Rng) -> Array2<f64> {
        match self.inner.config.restart {
            Restart::Warm => previous.x.clone(),
            Restart::Randomize => {
                let (k, n) = previous.x.dim();
                random_init(k, n, rng)
            }
        }
    }

    /// Doubles or halves λ from 1 until the classification flips.
    fn bracket(&mut self, start: Array2<f64>, rng: &mut Rng) -> Result<Bracket> {
        let eta2 = self.inner.eta2;
        let mut lambda = 1.0;
        let mut current = self.solve_at(lambda, start)?;
        let first_above = current.above(eta2);
        for step in 1..=self.inner.config.bracket_steps {
            let next = if first_above { lambda * 2.0 } else { lambda / 2.0 };
            let start = self.next_start(&current, rng);
            let solve = self.solve_at(next, start)?;
            if solve.above(eta2) != first_above {
                let (lo, hi) = if first_above { (lambda, next) } else { (next, lambda) };
                let (g_lo, g_hi) = if first_above { (current.g, solve.g) } else { (solve.g, current.g) };
                return Ok(Bracket {
                    lambda_min: lo,
                    lambda_max: hi,
                    g_at_min: g_lo,
                    g_at_max: g_hi,
                    last: solve,
                    inner_iters: self.inner_iters,
                    steps: step,
                });
            }
            lambda = next;
            current = solve;
        }
        Err(Error::BracketNotFound {
            steps: self.inner.config.bracket_steps,
            last_lambda: lambda,
        })
    }
}

/// Finds `λ_min < λ_max` with `g(X(λ_min)) > 0` and `g(X(λ_max)) ≤ 0`.
pub fn find_bracket(system: &MmvSystem, spec: &ConfidenceSpec, config: &SolverConfig, rng: &mut Rng) -> Result<Bracket> {
    check_inputs(system, spec, config)?;
    let mut search = Search {
        inner: Inner {
            model: Model::new(system, spec.framework, config.positivity_floor),
            config,
            epsilon: spec.epsilon,
            eta2: resolve_eta2(config, spec),
        },
        inner_iters: 0,
    };
    let start = start_point(system, config, rng);
    search.bracket(start, rng)
}

/// Number of bisection steps needed for precision `eta1`.
pub fn max_iteration(lambda_min: f64, lambda_max: f64, eta1: f64) -> usize {
    ((lambda_max - lambda_min) / (2.0 * eta1)).log2().ceil().max(0.0) as usize
}

/// Solves the confidence-constrained problem for `spec`.
///
/// When `X = 0` already satisfies the constraint it is returned with
/// `λ* = 0`.
pub fn solve(system: &MmvSystem, spec: &ConfidenceSpec, config: &SolverConfig, rng: &mut Rng) -> Result<SolverResult> {
    check_inputs(system, spec, config)?;
    let eta2 = resolve_eta2(config, spec);
    let (_, k, n) = system.dims();
    let zero = Array2::<f64>::zeros((k, n));
    let g_zero = constraint(spec.framework, system, &zero)? - spec.epsilon;
    if g_zero <= 0.0 {
        return Ok(SolverResult {
            x_star: zero,
            lambda_star: 0.0,
            g_residual: g_zero,
            objective_l12: 0.0,
            outer_iters: 0,
            inner_iters_total: 0,
            trace: Vec::new(),
            epsilon: spec.epsilon,
            eta2,
            bracket: None,
        });
    }

    let mut search = Search {
        inner: Inner {
            model: Model::new(system, spec.framework, config.positivity_floor),
            config,
            epsilon: spec.epsilon,
            eta2,
        },
        inner_iters: 0,
    };
    let start = start_point(system, config, rng);
    let (mut lo, mut hi, mut current) = match (config.lambda_min, config.lambda_max) {
        (Some(lo), Some(hi)) => {
            let at_lo = search.solve_at(lo, start.clone())?;
            let at_hi = search.solve_at(hi, start)?;
            if !at_lo.above(eta2) || at_hi.above(eta2) {
                return Err(Error::Bracket {
                    lo,
                    hi,
                    reason: format!("constraint residuals {} and {} do not change sign", at_lo.g, at_hi.g),
                });
            }
            (lo, hi, at_hi)
        }
        _ => {
            let b = search.bracket(start, rng)?;
            (b.lambda_min, b.lambda_max, b.last)
        }
    };
    let bracket = (lo, hi);
    let eta1 = config.eta1.unwrap_or((hi - lo) / 2f64.powi(31));
    let iters = max_iteration(lo, hi, eta1).min(config.max_outer).max(1);
    let mut trace = Vec::with_capacity(iters);
    for r in 0..iters {
        let lambda = 0.5 * (lo + hi);
        let start = search.next_start(&current, rng);
        current = search.solve_at(lambda, start)?;
        trace.push(TraceEntry { outer_iter: r + 1, lambda, g_value: current.g });
        if current.above(eta2) {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    let x_star = current.x;
    let g_residual = constraint(spec.framework, system, &x_star)? - spec.epsilon;
    Ok(SolverResult {
        objective_l12: l12_norm(&x_star),
        x_star,
        lambda_star: current.lambda,
        g_residual,
        outer_iters: iters,
        inner_iters_total: search.inner_iters,
        trace,
        epsilon: spec.epsilon,
        eta2,
        bracket: Some(bracket),
    })
}
