//! Sweep drivers behind the command-line experiments.
//!
//! Trials run in parallel on a pool capped by `CCJS_THREADS`. Every trial
//! row is written and flushed as soon as the trial finishes, so row order
//! follows completion order; summary rows come last.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::confidence::{recovery_certificate, ConfidenceSpec, Framework};
use crate::divergence::{log_grid, moment_curve, write_moments_csv, MomentEstimate, MomentMethod};
use crate::error::{Error, Result};
use crate::eval::{default_zeta, score_recovery};
use crate::format::fmt_f64;
use crate::problem::{estimate_rip_constant, InstanceParams, ProblemInstance};
use crate::rng::{stream, trial_seed, Stream};
use crate::solver::{solve, SolverConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CCJS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    EpsilonSensitivity,
    IntensityRecovery,
    Moments,
}

/// A radius on the ε grid: a fixed value, or the formula radius of each
/// trial's own counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPoint {
    Value(f64),
    Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub params: InstanceParams,
    pub p: f64,
    pub theta_grid: Vec<f64>,
    pub epsilon_grid: Vec<EpsilonPoint>,
    pub trials: usize,
    pub base_seed: u64,
    pub framework: Framework,
    pub solver: SolverConfig,
    pub output_path: Option<PathBuf>,
    /// RIP constant used by the certificates; estimated when absent.
    pub delta_2s: Option<f64>,
    /// Supports examined per matrix by the RIP estimate.
    pub rip_supports: usize,
}

impl SweepConfig {
    fn base(kind: SweepKind, framework: Framework) -> Self {
        Self {
            kind,
            params: InstanceParams::default(),
            p: 0.05,
            theta_grid: Vec::new(),
            epsilon_grid: Vec::new(),
            trials: 10,
            base_seed: 1,
            framework,
            solver: SolverConfig::default(),
            output_path: None,
            delta_2s: None,
            rip_supports: 2000,
        }
    }

    /// 15 radii log-spaced over `[10², 10⁹]`.
    pub fn epsilon_sensitivity(framework: Framework) -> Self {
        let grid = log_grid(1e2, 1e9, 15).expect("valid grid");
        Self {
            epsilon_grid: grid.into_iter().map(EpsilonPoint::Value).collect(),
            ..Self::base(SweepKind::EpsilonSensitivity, framework)
        }
    }

    /// 20 intensities log-spaced over `[10⁻², 10⁹]`.
    pub fn intensity_recovery(framework: Framework) -> Self {
        Self {
            theta_grid: log_grid(1e-2, 1e9, 20).expect("valid grid"),
            ..Self::base(SweepKind::IntensityRecovery, framework)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Argument("at least one trial is required".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Argument(format!("p must lie in (0, 1), got {}", self.p)));
        }
        let grid_empty = match self.kind {
            SweepKind::EpsilonSensitivity => self.epsilon_grid.is_empty(),
            SweepKind::IntensityRecovery => self.theta_grid.is_empty(),
            SweepKind::Moments => false,
        };
        if grid_empty {
            return Err(Error::Argument("sweep grid is empty".into()));
        }
        if let Some(v) = self.epsilon_grid.iter().find_map(|e| match e {
            EpsilonPoint::Value(v) if !(*v > 0.0 && v.is_finite()) => Some(*v),
            _ => None,
        }) {
            return Err(Error::Argument(format!("radii must be positive and finite, got {v}")));
        }
        if let Some(t) = self.theta_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Argument(format!("intensities must be positive and finite, got {t}")));
        }
        if let Some(d) = self.delta_2s {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Argument(format!("RIP constant must lie in [0, 1), got {d}")));
            }
        }
        self.solver.validate()
    }
}

/// Worker count from `CCJS_THREADS`, or rayon's default.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn in_pool<T: Send>(job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Serialized CSV sink flushed after every record.
struct Sink<W: Write> {
    writer: Mutex<csv::Writer<W>>,
}

impl<W: Write> Sink<W> {
    fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        writer.flush().map_err(csv::Error::from)?;
        Ok(Self {
            writer: Mutex::new(writer),
        })
    }

    fn write(&self, record: &[String]) -> Result<()> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.write_record(record)?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn status_text(r: &std::result::Result<(), String>) -> String {
    match r {
        Ok(()) => "ok".into(),
        Err(e) => format!("error: {e}"),
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub const EPSILON_HEADER: [&str; 14] = [
    "record",
    "grid_index",
    "epsilon",
    "trial",
    "r0",
    "r0_std",
    "pattern_match",
    "epsilon_star",
    "theta",
    "framework",
    "seed",
    "base_seed",
    "lambda_star",
    "status",
];

/// One trial of the radius sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonTrial {
    pub grid_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub epsilon_star: f64,
    pub r0: Option<usize>,
    pub pattern_match: Option<bool>,
    pub lambda_star: Option<f64>,
    pub status: std::result::Result<(), String>,
}

/// Per-radius aggregate over completed trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSummary {
    pub grid_index: usize,
    /// The grid radius, or the mean formula radius for a formula point.
    pub epsilon: f64,
    pub completed: usize,
    pub r0_mean: f64,
    pub r0_std: f64,
    pub pattern_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonOutcome {
    pub trials: Vec<EpsilonTrial>,
    pub summaries: Vec<EpsilonSummary>,
}

impl EpsilonOutcome {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.status.is_err()).count()
    }
}

fn epsilon_trial(base: &ProblemInstance, cfg: &SweepConfig, grid_index: usize, trial: usize) -> EpsilonTrial {
    let seed = trial_seed(cfg.base_seed, trial, grid_index);
    let mut row = EpsilonTrial {
        grid_index,
        trial,
        seed,
        epsilon: f64::NAN,
        epsilon_star: f64::NAN,
        r0: None,
        pattern_match: None,
        lambda_star: None,
        status: Ok(()),
    };
    let run = |row: &mut EpsilonTrial| -> Result<()> {
        let inst = base.resampled(seed)?;
        let system = inst.system();
        let formula = ConfidenceSpec::for_system(cfg.framework, &system, cfg.p)?;
        row.epsilon_star = formula.epsilon;
        let spec = match cfg.epsilon_grid[grid_index] {
            EpsilonPoint::Formula => formula,
            EpsilonPoint::Value(v) => ConfidenceSpec::with_epsilon(cfg.framework, cfg.p, v)?,
        };
        row.epsilon = spec.epsilon;
        let result = solve(&system, &spec, &cfg.solver, &mut stream(seed, Stream::SolverInit))?;
        let truth = inst.truth().matrix();
        let report = score_recovery(&result.x_star, truth, default_zeta(truth)?)?;
        row.r0 = Some(report.recovered.r0);
        row.pattern_match = Some(report.pattern_match);
        row.lambda_star = Some(result.lambda_star);
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = Err(e.to_string());
    }
    row
}

fn epsilon_record(t: &EpsilonTrial, cfg: &SweepConfig) -> Vec<String> {
    vec![
        "trial".into(),
        t.grid_index.to_string(),
        fmt_f64(t.epsilon),
        t.trial.to_string(),
        opt(t.r0),
        String::new(),
        opt(t.pattern_match),
        fmt_f64(t.epsilon_star),
        fmt_f64(cfg.params.theta),
        cfg.framework.to_string(),
        t.seed.to_string(),
        cfg.base_seed.to_string(),
        opt_f64(t.lambda_star),
        status_text(&t.status),
    ]
}

fn epsilon_summary_record(s: &EpsilonSummary, cfg: &SweepConfig, failed: usize) -> Vec<String> {
    vec![
        "summary".into(),
        s.grid_index.to_string(),
        fmt_f64(s.epsilon),
        String::new(),
        fmt_f64(s.r0_mean),
        fmt_f64(s.r0_std),
        fmt_f64(s.pattern_rate),
        String::new(),
        fmt_f64(cfg.params.theta),
        cfg.framework.to_string(),
        String::new(),
        cfg.base_seed.to_string(),
        String::new(),
        if failed == 0 { "ok".into() } else { format!("{failed} failed") },
    ]
}

/// Recovered row sparsity against the constraint radius.
///
/// Mixing matrices and truth come from `base_seed`; each trial redraws the
/// counts from its own seed.
pub fn sweep_epsilon<W: Write + Send>(cfg: &SweepConfig, out: W) -> Result<EpsilonOutcome> {
    cfg.validate()?;
    let base = ProblemInstance::generate(&cfg.params, cfg.base_seed)?;
    let sink = Sink::new(out, &EPSILON_HEADER)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.epsilon_grid.len())
        .flat_map(|g| (0..cfg.trials).map(move |t| (g, t)))
        .collect();
    let rows: Vec<Result<EpsilonTrial>> = in_pool(|| {
        jobs.par_iter()
            .map(|&(g, t)| {
                let row = epsilon_trial(&base, cfg, g, t);
                sink.write(&epsilon_record(&row, cfg))?;
                Ok(row)
            })
            .collect()
    })?;
    let mut trials = rows.into_iter().collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| (t.grid_index, t.trial));

    let mut summaries = Vec::new();
    for g in 0..cfg.epsilon_grid.len() {
        let group: Vec<&EpsilonTrial> = trials.iter().filter(|t| t.grid_index == g).collect();
        let done: Vec<&&EpsilonTrial> = group.iter().filter(|t| t.status.is_ok()).collect();
        let r0: Vec<f64> = done.iter().filter_map(|t| t.r0.map(|v| v as f64)).collect();
        let (r0_mean, r0_std) = mean_std(&r0);
        let matches = done.iter().filter(|t| t.pattern_match == Some(true)).count();
        let epsilon = match cfg.epsilon_grid[g] {
            EpsilonPoint::Value(v) => v,
            EpsilonPoint::Formula => mean_std(&done.iter().map(|t| t.epsilon).collect::<Vec<_>>()).0,
        };
        let summary = EpsilonSummary {
            grid_index: g,
            epsilon,
            completed: done.len(),
            r0_mean,
            r0_std,
            pattern_rate: if done.is_empty() { f64::NAN } else { matches as f64 / done.len() as f64 },
        };
        sink.write(&epsilon_summary_record(&summary, cfg, group.len() - done.len()))?;
        summaries.push(summary);
    }
    Ok(EpsilonOutcome { trials, summaries })
}

pub const INTENSITY_HEADER: [&str; 18] = [
    "record",
    "grid_index",
    "theta",
    "trial",
    "seed",
    "base_seed",
    "framework",
    "epsilon",
    "r0",
    "pattern_match",
    "certificate",
    "gamma",
    "required_gamma",
    "delta_2s",
    "delta_source",
    "zeta",
    "lambda_star",
    "status",
];

/// Where the certificate's RIP constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSource {
    User,
    Estimate,
    /// The estimate reached 1, so the certificates use 0 instead.
    FallbackZero,
}

impl DeltaSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaSource::User => "user",
            DeltaSource::Estimate => "estimate",
            DeltaSource::FallbackZero => "fallback-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrial {
    pub grid_index: usize,
    pub theta: f64,
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub r0: Option<usize>,
    pub pattern_match: Option<bool>,
    /// Certificate verdict; zero-count columns count as not certified.
    pub certificate: Option<bool>,
    pub gamma: f64,
    pub required_gamma: f64,
    pub zeta: f64,
    pub lambda_star: Option<f64>,
    pub status: std::result::Result<(), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPoint {
    pub theta: f64,
    pub completed: usize,
    /// Fractions over all trials at this intensity.
    pub empirical: f64,
    pub certified: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityOutcome {
    pub trials: Vec<IntensityTrial>,
    pub points: Vec<IntensityPoint>,
    pub delta_2s: f64,
    /// Raw RIP estimate before any fallback.
    pub delta_estimate: Option<f64>,
    pub delta_source: DeltaSource,
    pub empirical_transition: Option<f64>,
    pub certificate_transition: Option<f64>,
}

impl IntensityOutcome {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.status.is_err()).count()
    }

    /// `log10` distance from the empirical to the certificate transition.
    pub fn log10_gap(&self) -> Option<f64> {
        Some(self.certificate_transition?.log10() - self.empirical_transition?.log10())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "delta_2s": self.delta_2s,
            "delta_estimate": self.delta_estimate,
            "delta_source": self.delta_source.as_str(),
            "empirical_transition": self.empirical_transition,
            "certificate_transition": self.certificate_transition,
            "log10_gap": self.log10_gap(),
            "points": self.points.iter().map(|p| serde_json::json!({
                "theta": p.theta,
                "completed": p.completed,
                "empirical": p.empirical,
                "certified": p.certified,
            })).collect::<Vec<_>>(),
            "failures": self.failures(),
        })
    }
}

/// Intensity at which a success-rate curve last crosses `level` from below,
/// interpolated linearly in `log10 θ`.
///
/// `None` when the top of the grid is still below `level`.
pub fn transition_theta(thetas: &[f64], rates: &[f64], level: f64) -> Option<f64> {
    let last_below = rates.iter().rposition(|r| !(*r >= level));
    match last_below {
        None => thetas.first().copied(),
        Some(i) if i + 1 >= rates.len() => None,
        Some(i) => {
            let (p0, p1) = (if rates[i].is_nan() { 0.0 } else { rates[i] }, rates[i + 1]);
            let t = ((level - p0) / (p1 - p0)).clamp(0.0, 1.0);
            let (a, b) = (thetas[i].log10(), thetas[i + 1].log10());
            Some(10f64.powf(a + t * (b - a)))
        }
    }
}

fn intensity_trial(
    base: &ProblemInstance,
    cfg: &SweepConfig,
    delta: f64,
    grid_index: usize,
    trial: usize,
) -> IntensityTrial {
    let theta = cfg.theta_grid[grid_index];
    let seed = trial_seed(cfg.base_seed, trial, grid_index);
    let mut row = IntensityTrial {
        grid_index,
        theta,
        trial,
        seed,
        epsilon: f64::NAN,
        r0: None,
        pattern_match: None,
        certificate: None,
        gamma: f64::NAN,
        required_gamma: f64::NAN,
        zeta: f64::NAN,
        lambda_star: None,
        status: Ok(()),
    };
    let run = |row: &mut IntensityTrial| -> Result<()> {
        let inst = base.rescaled(theta, seed)?;
        let system = inst.system();
        let truth = inst.truth().matrix();
        let spec = ConfidenceSpec::for_system(cfg.framework, &system, cfg.p)?;
        row.epsilon = spec.epsilon;
        let cert = recovery_certificate(&system, truth, &spec, delta)?;
        row.certificate = Some(cert.satisfied && cert.zero_count_columns.is_empty());
        row.gamma = cert.gamma;
        row.required_gamma = cert.required_gamma;
        row.zeta = default_zeta(truth)?;
        let result = solve(&system, &spec, &cfg.solver, &mut stream(seed, Stream::SolverInit))?;
        let report = score_recovery(&result.x_star, truth, row.zeta)?;
        row.r0 = Some(report.recovered.r0);
        row.pattern_match = Some(report.pattern_match);
        row.lambda_star = Some(result.lambda_star);
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = Err(e.to_string());
    }
    row
}

/// Empirical and certified recovery probability against intensity.
pub fn sweep_intensity<W: Write + Send>(cfg: &SweepConfig, out: W) -> Result<IntensityOutcome> {
    cfg.validate()?;
    let base = ProblemInstance::generate(&cfg.params, cfg.base_seed)?;
    let (delta, delta_estimate, delta_source) = match cfg.delta_2s {
        Some(d) => (d, None, DeltaSource::User),
        None => {
            let order = (2 * cfg.params.s).min(cfg.params.k);
            let est = estimate_rip_constant(
                base.mixing(),
                order,
                cfg.rip_supports,
                &mut stream(cfg.base_seed, Stream::Rip),
            )?;
            if est < 1.0 {
                (est, Some(est), DeltaSource::Estimate)
            } else {
                (0.0, Some(est), DeltaSource::FallbackZero)
            }
        }
    };
    let record = |t: &IntensityTrial| -> Vec<String> {
        vec![
            "trial".into(),
            t.grid_index.to_string(),
            fmt_f64(t.theta),
            t.trial.to_string(),
            t.seed.to_string(),
            cfg.base_seed.to_string(),
            cfg.framework.to_string(),
            fmt_f64(t.epsilon),
            opt(t.r0),
            opt(t.pattern_match),
            opt(t.certificate),
            fmt_f64(t.gamma),
            fmt_f64(t.required_gamma),
            fmt_f64(delta),
            delta_source.as_str().into(),
            fmt_f64(t.zeta),
            opt_f64(t.lambda_star),
            status_text(&t.status),
        ]
    };

    let sink = Sink::new(out, &INTENSITY_HEADER)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.theta_grid.len())
        .flat_map(|g| (0..cfg.trials).map(move |t| (g, t)))
        .collect();
    let rows: Vec<Result<IntensityTrial>> = in_pool(|| {
        jobs.par_iter()
            .map(|&(g, t)| {
                let row = intensity_trial(&base, cfg, delta, g, t);
                sink.write(&record(&row))?;
                Ok(row)
            })
            .collect()
    })?;
    let mut trials = rows.into_iter().collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| (t.grid_index, t.trial));

    let mut points = Vec::new();
    for (g, &theta) in cfg.theta_grid.iter().enumerate() {
        let group: Vec<&IntensityTrial> = trials.iter().filter(|t| t.grid_index == g).collect();
        // a failed trial counts as neither recovered nor certified
        let rate = |hits: usize| hits as f64 / group.len() as f64;
        let completed = group.iter().filter(|t| t.status.is_ok()).count();
        let point = IntensityPoint {
            theta,
            completed,
            empirical: rate(group.iter().filter(|t| t.pattern_match == Some(true)).count()),
            certified: rate(group.iter().filter(|t| t.certificate == Some(true)).count()),
        };
        let failed = group.len() - completed;
        let mut summary = vec![String::new(); INTENSITY_HEADER.len()];
        summary[0] = "summary".into();
        summary[1] = g.to_string();
        summary[2] = fmt_f64(theta);
        summary[5] = cfg.base_seed.to_string();
        summary[6] = cfg.framework.to_string();
        summary[9] = fmt_f64(point.empirical);
        summary[10] = fmt_f64(point.certified);
        summary[13] = fmt_f64(delta);
        summary[14] = delta_source.as_str().into();
        summary[17] = if failed == 0 { "ok".into() } else { format!("{failed} failed") };
        sink.write(&summary)?;
        points.push(point);
    }

    let thetas: Vec<f64> = points.iter().map(|p| p.theta).collect();
    let empirical: Vec<f64> = points.iter().map(|p| p.empirical).collect();
    let certified: Vec<f64> = points.iter().map(|p| p.certified).collect();
    let empirical_transition = transition_theta(&thetas, &empirical, 0.5);
    let certificate_transition = transition_theta(&thetas, &certified, 0.5);
    for (name, value) in [
        ("transition-empirical", empirical_transition),
        ("transition-certificate", certificate_transition),
    ] {
        let mut row = vec![String::new(); INTENSITY_HEADER.len()];
        row[0] = name.into();
        row[2] = opt_f64(value);
        row[5] = cfg.base_seed.to_string();
        row[6] = cfg.framework.to_string();
        row[17] = if value.is_some() { "ok".into() } else { "no transition on grid".into() };
        sink.write(&row)?;
    }

    Ok(IntensityOutcome {
        trials,
        points,
        delta_2s: delta,
        delta_estimate,
        delta_source,
        empirical_transition,
        certificate_transition,
    })
}

/// Moment curve of `I(y‖λ)` written as CSV.
pub fn sweep_moments<W: Write>(
    lambdas: &[f64],
    method: MomentMethod,
    budget: usize,
    seed: u64,
    out: W,
) -> Result<Vec<MomentEstimate>> {
    let rows = moment_curve(lambdas, method, budget, &mut stream(seed, Stream::Analysis))?;
    write_moments_csv(out, &rows)?;
    Ok(rows)
}
